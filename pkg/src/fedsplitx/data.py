"""Datasets: synthetic generators, the standard CIFAR binary format, and
class-stratified IID sharding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes (R, G, B planes)

_SPIRAL_TURNS = 1.5
_BLOB_RADIUS = 10.0


@dataclass
class Dataset:
    X: np.ndarray  # (n, dim) float32
    y: np.ndarray  # (n,) int64
    classes: int

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class DatasetShard:
    owner: int
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


def _class_counts(n: int, classes: int) -> list[int]:
    base = n // classes
    counts = [base] * classes
    for c in range(n - base * classes):
        counts[c] += 1
    return counts


def make_synthetic(kind: str, n: int, classes: int, noise: float, seed: int) -> Dataset:
    """Deterministic labeled 2-D dataset: gaussian 'blobs' or interleaved
    'spirals' (not linearly separable)."""
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if n < classes:
        raise ValueError(f"need at least one sample per class ({n} < {classes})")
    if noise < 0:
        raise ValueError(f"noise must be non-negative, got {noise}")
    rng = np.random.default_rng([seed, 7])
    counts = _class_counts(n, classes)
    xs, ys = [], []
    for c, count in enumerate(counts):
        if kind == "blobs":
            ang = 2.0 * np.pi * c / classes
            center = _BLOB_RADIUS * np.array([np.cos(ang), np.sin(ang)])
            pts = center + rng.normal(0.0, 1.0, size=(count, 2)) * noise
        elif kind == "spirals":
            # arms start away from the origin, where classes would collapse
            t = 0.2 + 0.8 * (np.arange(count) + 0.5) / count
            ang = 2.0 * np.pi * (_SPIRAL_TURNS * t + c / classes)
            pts = np.stack([t * np.cos(ang), t * np.sin(ang)], axis=1)
            pts = pts + rng.normal(0.0, 1.0, size=(count, 2)) * noise
        else:
            raise ValueError(f"unknown synthetic kind {kind!r}")
        xs.append(pts)
        ys.append(np.full(count, c, dtype=np.int64))
    X = np.concatenate(xs).astype(np.float32)
    y = np.concatenate(ys)
    perm = rng.permutation(n)
    return Dataset(np.ascontiguousarray(X[perm]), y[perm], classes)


def load_cifar_binary(path: str, limit: int | None = None) -> Dataset:
    """Read the standard CIFAR binary layout: per record one label byte then
    3072 pixel bytes (R/G/B planes). Pixels come back as floats in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        usable = (len(raw) // CIFAR_RECORD_BYTES) * CIFAR_RECORD_BYTES
        raise ValueError(
            f"{path}: file length {len(raw)} is not a positive multiple of "
            f"{CIFAR_RECORD_BYTES}; malformed record starts at byte offset {usable}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    X = np.ascontiguousarray(records[:, 1:], dtype=np.float32) / np.float32(255.0)
    return Dataset(X, labels, classes=int(labels.max()) + 1 if len(labels) else 0)


def iid_partition(ds: Dataset, num_clients: int, seed: int) -> list[DatasetShard]:
    """Class-stratified shuffle and equal split (shard sizes within 1)."""
    if num_clients < 1:
        raise ValueError("need at least one client")
    if num_clients > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples across {num_clients} clients")
    rng = np.random.default_rng([seed, 13])
    assigned: list[list[int]] = [[] for _ in range(num_clients)]
    cursor = 0
    for c in np.unique(ds.y):
        idx = np.flatnonzero(ds.y == c)
        rng.shuffle(idx)
        for i in idx:
            assigned[cursor % num_clients].append(int(i))
            cursor += 1
    shards = []
    for owner, idx in enumerate(assigned):
        sel = np.array(idx, dtype=np.int64)
        shards.append(DatasetShard(owner, np.ascontiguousarray(ds.X[sel]), ds.y[sel]))
    return shards


def stratified_split(ds: Dataset, test_fraction: float, seed: int
                     ) -> tuple[Dataset, Dataset]:
    """Held-out split with per-class proportions preserved."""
    if not 0 <= test_fraction < 1:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")
    rng = np.random.default_rng([seed, 17])
    test_idx: list[int] = []
    train_idx: list[int] = []
    for c in np.unique(ds.y):
        idx = np.flatnonzero(ds.y == c)
        rng.shuffle(idx)
        k = round(test_fraction * len(idx))
        test_idx.extend(int(i) for i in idx[:k])
        train_idx.extend(int(i) for i in idx[k:])
    tr = np.array(sorted(train_idx), dtype=np.int64)
    te = np.array(sorted(test_idx), dtype=np.int64)
    return (
        Dataset(np.ascontiguousarray(ds.X[tr]), ds.y[tr], ds.classes),
        Dataset(np.ascontiguousarray(ds.X[te]), ds.y[te], ds.classes),
    )
