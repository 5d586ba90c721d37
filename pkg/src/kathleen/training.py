"""AdamW with cosine annealing, the training loop, evaluation and run reports."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import checkpoint
from .autodiff import Tensor, no_grad
from .config import ModelConfig, TrainConfig
from .data import BatchStats, Split, batchify
from .head import cross_entropy
from .model import KathleenModel, parameter_report
from .nn import make_rng

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Loss became NaN/Inf; carries the per-tensor gradient norms at that step."""

    def __init__(self, message: str, grad_norms: dict[str, float]):
        super().__init__(message)
        self.grad_norms = grad_norms

    def dump(self) -> str:
        rows = [f"{name:<48} {norm:.6e}" for name, norm in self.grad_norms.items()]
        return "\n".join([str(self), *rows])


def cosine_factor(step: int, total_steps: int) -> float:
    """``0.5 * (1 + cos(pi * step / total))``: 1 at step 0, 0 at the last step."""
    if total_steps <= 0:
        return 1.0
    step = min(max(step, 0), total_steps)
    return 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class AdamW:
    """Adam with decoupled weight decay.

    Per step ``t`` (1-based, counting only applied steps) with ``lr_t = lr * factor``::

        m = b1 m + (1 - b1) g;   v = b2 v + (1 - b2) g^2
        p <- p - lr_t * wd * p - lr_t * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)

    A step whose gradients contain NaN/Inf is skipped entirely and counted.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = list(params)
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0
        self.skipped = 0

    def step(self, factor: float = 1.0) -> bool:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if not all(np.isfinite(g).all() for g in grads):
            self.skipped += 1
            log.warning("non-finite gradient; optimizer step skipped (%d so far)", self.skipped)
            return False
        self.t += 1
        b1, b2 = self.betas
        lr = self.lr * factor
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = np.asarray(p.data - lr * self.weight_decay * p.data - lr * update, dtype=p.dtype)
        return True


def grad_norms(model: KathleenModel) -> dict[str, float]:
    return {
        name: float(np.linalg.norm(p.grad)) if p.grad is not None else 0.0
        for name, p in model.named_parameters()
    }


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # [true, predicted]
    loss: float

    @property
    def count(self) -> int:
        return int(self.confusion.sum())


def evaluate(
    model: KathleenModel, split: Split, max_len: int, batch_size: int = 64, num_classes: Optional[int] = None
) -> Evaluation:
    """Accuracy (exact-match fraction), confusion matrix and mean loss in eval mode."""
    num_classes = num_classes or model.cfg.num_classes
    was_training = model.training
    model.eval()
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    loss_sum = 0.0
    try:
        with no_grad():
            for batch in batchify(split.texts, split.labels, max_len, batch_size):
                logits = model(batch.data, batch.mask)
                loss_sum += float(cross_entropy(logits, batch.labels).data) * len(batch)
                pred = logits.data.argmax(axis=-1)
                np.add.at(confusion, (batch.labels, pred), 1)
    finally:
        model.train(was_training)
    total = max(int(confusion.sum()), 1)
    return Evaluation(float(np.trace(confusion)) / total, confusion, loss_sum / total)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    test_loss: float
    lr: float
    seconds: float
    skipped_steps: int

    def to_json(self) -> str:
        return json.dumps({"type": "epoch", **asdict(self)})


@dataclass
class RunReport:
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_test_accuracy: float = 0.0
    best_epoch: int = 0
    last_test_accuracy: float = 0.0
    wall_time: float = 0.0
    parameters: dict[str, int] = field(default_factory=dict)
    empty_texts: int = 0
    truncated_texts: int = 0
    confusion: list[list[int]] = field(default_factory=list)

    def summary(self) -> dict:
        out = asdict(self)
        del out["epochs"]
        return {"type": "summary", **out}

    def to_jsonl(self) -> str:
        lines = [e.to_json() for e in self.epochs]
        lines.append(json.dumps(self.summary()))
        return "\n".join(lines) + "\n"


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_split: Split,
    test_split: Split,
    seed: Optional[int] = None,
    checkpoint_path: Optional[Path] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> RunReport:
    """Train from scratch; the best-test-accuracy weights go to ``checkpoint_path``.

    Everything random (init, dropout, shuffling) derives from ``seed``, so two
    runs with the same inputs produce identical reports apart from timings.
    """
    seed = train_cfg.seed if seed is None else seed
    start = time.perf_counter()
    model = KathleenModel(model_cfg, seed=seed)
    model.train()
    params = model.parameters()
    opt = AdamW(
        params,
        lr=train_cfg.lr,
        betas=(train_cfg.beta1, train_cfg.beta2),
        eps=train_cfg.adam_eps,
        weight_decay=train_cfg.weight_decay,
    )
    shuffle_rng = make_rng(seed + 0x5F1F)
    steps_per_epoch = math.ceil(len(train_split) / train_cfg.batch_size)
    total_steps = steps_per_epoch * train_cfg.epochs
    report = RunReport(seed=seed, parameters=parameter_report(model))
    stats = BatchStats()
    step = 0
    best_state = None
    for epoch in range(1, train_cfg.epochs + 1):
        t0 = time.perf_counter()
        loss_sum, correct, seen = 0.0, 0, 0
        for batch in batchify(
            train_split.texts, train_split.labels, train_cfg.max_len, train_cfg.batch_size, shuffle_rng, stats
        ):
            factor = cosine_factor(step, total_steps) if train_cfg.schedule == "cosine" else 1.0
            model.zero_grad()
            logits = model(batch.data, batch.mask)
            loss = cross_entropy(logits, batch.labels)
            loss_value = float(loss.data)
            if not math.isfinite(loss_value):
                loss.backward()
                raise DivergenceError(f"loss became {loss_value} at epoch {epoch}, step {step}", grad_norms(model))
            loss.backward()
            if train_cfg.clip_norm > 0:
                clip_grad_norm(params, train_cfg.clip_norm)
            opt.step(factor)
            step += 1
            loss_sum += loss_value * len(batch)
            correct += int((logits.data.argmax(axis=-1) == batch.labels).sum())
            seen += len(batch)
        result = evaluate(model, test_split, train_cfg.max_len, num_classes=model_cfg.num_classes)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / max(seen, 1),
            train_accuracy=correct / max(seen, 1),
            test_accuracy=result.accuracy,
            test_loss=result.loss,
            lr=train_cfg.lr * (cosine_factor(step, total_steps) if train_cfg.schedule == "cosine" else 1.0),
            seconds=time.perf_counter() - t0,
            skipped_steps=opt.skipped,
        )
        report.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if best_state is None or result.accuracy > report.best_test_accuracy:
            report.best_test_accuracy, report.best_epoch = result.accuracy, epoch
            report.confusion = result.confusion.tolist()
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
            if checkpoint_path is not None:
                checkpoint.save(checkpoint_path, model_cfg, best_state)
    report.last_test_accuracy = report.epochs[-1].test_accuracy
    report.empty_texts, report.truncated_texts = stats.empty_texts, stats.truncated
    report.wall_time = time.perf_counter() - start
    return report


@dataclass
class SeedSummary:
    seeds: list[int]
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        """Sample standard deviation (0 for a single seed)."""
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0

    def line(self) -> str:
        per_seed = "  ".join(f"{s}: {100 * a:.2f}" for s, a in zip(self.seeds, self.accuracies))
        return f"accuracy {100 * self.mean:.2f} ± {100 * self.std:.2f}  ({per_seed})"

    def to_json(self) -> str:
        return json.dumps(
            {"type": "seeds", "seeds": self.seeds, "accuracies": self.accuracies, "mean": self.mean, "std": self.std}
        )


def summarize_seeds(reports: Sequence[RunReport]) -> SeedSummary:
    return SeedSummary([r.seed for r in reports], [r.best_test_accuracy for r in reports])
