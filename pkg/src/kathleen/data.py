"""Dataset loading and byte batching.

Supported inputs: CSV/TSV with a header row, JSON lines with configurable
field names, and the raw ``aclImdb`` directory layout
(``{train,test}/{neg,pos}/*.txt``).
"""

from __future__ import annotations

import csv
import json
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .config import ConfigError, DatasetSpec


class DataError(ValueError):
    """Malformed or inconsistent dataset."""


@dataclass
class ByteBatch:
    data: np.ndarray  # [B, L] uint8, 0 at padding
    mask: np.ndarray  # [B, L] bool, prefix-valid
    labels: np.ndarray  # [B] int64

    def __post_init__(self) -> None:
        if self.data.shape != self.mask.shape or self.data.ndim != 2:
            raise DataError(f"bytes {self.data.shape} and mask {self.mask.shape} must be equal 2-D shapes")
        if self.labels.shape != (self.data.shape[0],):
            raise DataError(f"labels {self.labels.shape} do not match batch size {self.data.shape[0]}")
        lengths = self.mask.sum(axis=1)
        if (lengths < 1).any():
            raise DataError("every row needs at least one valid position")
        prefix = np.arange(self.mask.shape[1])[None, :] < lengths[:, None]
        if not np.array_equal(prefix, self.mask):
            raise DataError("mask must be a prefix mask")

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass
class Split:
    texts: list[str]
    labels: list[int]

    def __len__(self) -> int:
        return len(self.texts)

    def label_counts(self, num_classes: int) -> np.ndarray:
        return np.bincount(np.asarray(self.labels, dtype=np.int64), minlength=num_classes)


@dataclass
class BatchStats:
    empty_texts: int = 0
    truncated: int = 0


def _detect_format(path: Path, declared: str) -> str:
    if declared != "auto":
        return declared
    if path.is_dir():
        return "aclimdb"
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    if suffix == ".tsv":
        return "tsv"
    return "csv"


def _resolve_label(raw, class_names: Sequence[str], where: str) -> int:
    if class_names:
        text = str(raw).strip()
        if text in class_names:
            return list(class_names).index(text)
        try:
            value = int(text)
        except ValueError:
            raise DataError(f"{where}: unknown label {text!r}; classes are {list(class_names)}") from None
        if not 0 <= value < len(class_names):
            raise DataError(f"{where}: unknown label {value}; classes are {list(class_names)}")
        return value
    try:
        value = int(str(raw).strip())
    except ValueError:
        raise DataError(f"{where}: label {raw!r} is not an integer and no class_names were given") from None
    if value < 0:
        raise DataError(f"{where}: negative label {value}")
    return value


def _read_delimited(path: Path, spec: DatasetSpec, delimiter: str) -> Split:
    texts, labels = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for name in (spec.text_field, spec.label_field):
            if name not in header:
                raise DataError(f"{path}:1: header {header} lacks field {name!r}")
        ti, li = header.index(spec.text_field), header.index(spec.label_field)
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            texts.append(row[ti])
            labels.append(_resolve_label(row[li], spec.class_names, where))
    return Split(texts, labels)


def _read_jsonl(path: Path, spec: DatasetSpec) -> Split:
    texts, labels = [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict) or spec.text_field not in record or spec.label_field not in record:
                raise DataError(f"{where}: record needs fields {spec.text_field!r} and {spec.label_field!r}")
            texts.append(str(record[spec.text_field]))
            labels.append(_resolve_label(record[spec.label_field], spec.class_names, where))
    return Split(texts, labels)


def _read_aclimdb(path: Path) -> Split:
    """One split directory of the raw IMDB release: ``neg`` -> 0, ``pos`` -> 1."""
    texts, labels = [], []
    for label, sub in enumerate(("neg", "pos")):
        folder = path / sub
        if not folder.is_dir():
            raise DataError(f"{path}: missing sub-directory {sub!r}")
        for file in sorted(folder.glob("*.txt")):
            texts.append(file.read_text(encoding="utf-8"))
            labels.append(label)
    return Split(texts, labels)


def read_split(path, spec: DatasetSpec) -> Split:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    fmt = _detect_format(path, spec.format)
    if fmt == "aclimdb":
        return _read_aclimdb(path)
    if fmt == "jsonl":
        return _read_jsonl(path, spec)
    return _read_delimited(path, spec, "\t" if fmt == "tsv" else ",")


def subset(split: Split, limit: int, seed: int) -> Split:
    """A seeded random subset of ``limit`` rows, kept in source order (0 keeps all)."""
    if not limit or limit >= len(split):
        return split
    rng = np.random.Generator(np.random.Philox(seed))
    keep = np.sort(rng.choice(len(split), size=limit, replace=False))
    return Split([split.texts[i] for i in keep], [split.labels[i] for i in keep])


def load_dataset(spec: DatasetSpec) -> tuple[Split, Split]:
    """Train and test splits, label-checked against ``class_names`` when given."""
    if not spec.train_path or not spec.test_path:
        raise ConfigError("data.train_path and data.test_path are required")
    train = read_split(spec.train_path, spec)
    test = read_split(spec.test_path, spec)
    if spec.class_names:
        observed = set(train.labels) | set(test.labels)
        if observed and max(observed) >= len(spec.class_names):
            raise DataError(f"labels {sorted(observed)} exceed declared classes {list(spec.class_names)}")
    train = subset(train, spec.train_limit, spec.subset_seed)
    test = subset(test, spec.test_limit, spec.subset_seed + 1)
    return train, test


def num_classes_of(spec: DatasetSpec, *splits: Split) -> int:
    if spec.class_names:
        return len(spec.class_names)
    return max(max(s.labels) for s in splits if len(s)) + 1


def encode_text(text: str, max_len: int) -> bytes:
    return text.encode("utf-8")[:max_len]


def make_batch(
    texts: Sequence[str], labels: Sequence[int], max_len: int, stats: Optional[BatchStats] = None
) -> ByteBatch:
    """UTF-8 encode, keep the first ``max_len`` bytes, zero-pad to the longest row.

    An empty text becomes a single 0 byte marked valid (and is counted in
    ``stats``) so every row has a valid position.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    encoded = []
    for text in texts:
        raw = text.encode("utf-8")
        if stats is not None and len(raw) > max_len:
            stats.truncated += 1
        raw = raw[:max_len]
        if not raw:
            raw = b"\x00"
            if stats is not None:
                stats.empty_texts += 1
        encoded.append(raw)
    width = max(len(r) for r in encoded)
    data = np.zeros((len(encoded), width), dtype=np.uint8)
    mask = np.zeros((len(encoded), width), dtype=bool)
    for i, raw in enumerate(encoded):
        data[i, : len(raw)] = np.frombuffer(raw, dtype=np.uint8)
        mask[i, : len(raw)] = True
    return ByteBatch(data, mask, np.asarray(labels, dtype=np.int64))


def batchify(
    texts: Sequence[str],
    labels: Sequence[int],
    max_len: int,
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
    stats: Optional[BatchStats] = None,
) -> Iterator[ByteBatch]:
    """Stream of batches; order is shuffled by ``rng`` (source order if ``None``)."""
    if len(texts) != len(labels):
        raise DataError(f"{len(texts)} texts vs {len(labels)} labels")
    order = np.arange(len(texts)) if rng is None else rng.permutation(len(texts))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield make_batch([texts[i] for i in idx], [labels[i] for i in idx], max_len, stats)


def prefetch(batches: Iterable[ByteBatch], maxsize: int = 4) -> Iterator[ByteBatch]:
    """Assemble batches on a worker thread; the producer blocks when ``maxsize`` are waiting."""
    q: queue.Queue = queue.Queue(maxsize=maxsize)
    done = object()
    errors: list[BaseException] = []

    def produce() -> None:
        try:
            for b in batches:
                q.put(b)
        except BaseException as exc:  # re-raised in the consumer
            errors.append(exc)
        finally:
            q.put(done)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    while True:
        item = q.get()
        if item is done:
            break
        yield item
    worker.join()
    if errors:
        raise errors[0]
