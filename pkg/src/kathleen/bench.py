"""Wall-time and peak-memory scaling of the model with sequence length."""

from __future__ import annotations

import csv
import dataclasses
import gc
import io
import time
import tracemalloc
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autodiff import no_grad
from .config import ConfigError, ModelConfig
from .frontend import frame_count
from .head import cross_entropy
from .model import KathleenModel
from .nn import make_rng

CSV_COLUMNS = ("length", "mean_ms", "std_ms", "peak_bytes")


@dataclass
class BenchRow:
    length: int
    mean_ms: float
    std_ms: float
    peak_bytes: int
    median_ms: float = 0.0


def bench_config(cfg: ModelConfig, length: int) -> ModelConfig:
    """Positional biases are zero-extended past ``l_max`` so any length runs."""
    if length < cfg.window:
        raise ConfigError(f"length {length} is shorter than the frame window {cfg.window}")
    return dataclasses.replace(cfg, extend_positions=True)


def _inputs(length: int, batch: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = make_rng(seed)
    data = rng.integers(0, 256, size=(batch, length), dtype=np.uint8)
    return data, np.ones_like(data, dtype=bool), np.zeros(batch, dtype=np.int64)


def _run_once(model: KathleenModel, data, mask, labels, backward: bool) -> None:
    if backward:
        model.zero_grad()
        cross_entropy(model(data, mask), labels).backward()
    else:
        with no_grad():
            model(data, mask)


def measure(
    model: KathleenModel,
    length: int,
    repeat: int = 3,
    batch: int = 1,
    backward: bool = False,
    warmup: int = 1,
    seed: int = 0,
) -> BenchRow:
    """Timing from ``repeat`` runs, then peak traced memory from one extra run.

    Memory is traced in its own run because tracing slows allocation and
    would distort the timings.
    """
    if length < model.cfg.window:
        raise ConfigError(f"length {length} is shorter than the frame window {model.cfg.window}")
    data, mask, labels = _inputs(length, batch, seed)
    model.eval()
    for _ in range(warmup):
        _run_once(model, data, mask, labels, backward)
    times = []
    gc.collect()
    gc_was_enabled = gc.isenabled()
    gc.disable()  # as timeit does: collector pauses are not part of the model's cost
    try:
        for _ in range(repeat):
            t0 = time.perf_counter()
            _run_once(model, data, mask, labels, backward)
            times.append((time.perf_counter() - t0) * 1000.0)
    finally:
        if gc_was_enabled:
            gc.enable()
    tracemalloc.start()
    try:
        _run_once(model, data, mask, labels, backward)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return BenchRow(length, float(np.mean(times)), float(np.std(times)), int(peak), float(np.median(times)))


def run(
    lengths: Sequence[int],
    cfg: Optional[ModelConfig] = None,
    repeat: int = 3,
    batch: int = 1,
    backward: bool = False,
    seed: int = 42,
    model: Optional[KathleenModel] = None,
) -> list[BenchRow]:
    cfg = cfg or (model.cfg if model is not None else ModelConfig())
    for length in lengths:
        bench_config(cfg, length)  # validates every length before any timing
    if model is None:
        model = KathleenModel(bench_config(cfg, max(lengths)), seed=seed)
    else:
        model.sequencer.reverb.extend_positions = True
    return [measure(model, n, repeat=repeat, batch=batch, backward=backward, seed=seed) for n in lengths]


def ratios(rows: Sequence[BenchRow]) -> list[dict]:
    """Time and memory ratios between consecutive rows.

    Time ratios use the median run, which is robust to scheduler hiccups on a
    shared machine; the CSV still reports mean and standard deviation.
    """
    out = []
    for a, b in zip(rows, rows[1:]):
        out.append(
            {
                "from": a.length,
                "to": b.length,
                "time_ratio": b.median_ms / a.median_ms,
                "memory_ratio": b.peak_bytes / max(a.peak_bytes, 1),
            }
        )
    return out


def to_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([r.length, f"{r.mean_ms:.3f}", f"{r.std_ms:.3f}", r.peak_bytes])
    return buf.getvalue()
