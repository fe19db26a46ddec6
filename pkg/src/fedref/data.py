"""Synthetic data, CSV ingestion, and non-IID client partitioning."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IngestionError, UsageError

MAX_DIRICHLET_ATTEMPTS = 100


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise UsageError(f"dataset needs at least one row, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise UsageError(f"{x.shape[0]} rows but {y.shape} labels")
        if y.min() < 0 or y.max() >= self.class_count:
            raise UsageError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_count)

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


class PartitionKind(str, Enum):
    LABEL_SHARDS = "label_shards"
    DIRICHLET = "dirichlet"
    IID = "iid"


@dataclass(frozen=True)
class PartitionPlan:
    kind: PartitionKind
    clients: int
    shards_per_client: int = 2
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PartitionKind(self.kind))
        if self.clients < 1:
            raise UsageError("clients must be >= 1")
        if self.shards_per_client < 1:
            raise UsageError("shards_per_client must be >= 1")
        if not self.alpha > 0:
            raise UsageError("alpha must be > 0")


def _class_means(classes: int, dim: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    if classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, classes)))
        dirs = q.T
    elif dim == 2:
        phase = rng.uniform(0, 2 * np.pi)
        angles = phase + 2 * np.pi * np.arange(classes) / classes
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        # Best of a few random direction sets by minimum pairwise distance.
        best, best_gap = None, -1.0
        for _ in range(64):
            cand = rng.standard_normal((classes, dim))
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            diff = cand[:, None, :] - cand[None, :, :]
            dist = np.linalg.norm(diff, axis=2) + np.eye(classes) * 1e9
            if dist.min() > best_gap:
                best, best_gap = cand, dist.min()
        dirs = best
    return separation * dirs


def gen_synthetic(classes: int, per_class: int, input_dim: int, separation: float, seed: int) -> Dataset:
    """Gaussian blobs: one unit-variance cluster per class, each mean at norm ``separation``.

    Rows are grouped by class (class 0 first); shuffle before any split that
    should not follow label order.
    """
    if classes < 2:
        raise UsageError("classes must be >= 2")
    if per_class < 1:
        raise UsageError("per_class must be >= 1")
    if input_dim < 1:
        raise UsageError("input_dim must be >= 1")
    if separation < 0:
        raise UsageError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    means = _class_means(classes, input_dim, separation, rng)
    labels = np.repeat(np.arange(classes), per_class)
    features = means[labels] + rng.standard_normal((labels.size, input_dim))
    return Dataset(features, labels, classes)


def _label_shards(data: Dataset, plan: PartitionPlan, rng: np.random.Generator) -> list[np.ndarray]:
    n_shards = plan.clients * plan.shards_per_client
    if n_shards > len(data):
        raise UsageError(f"{n_shards} shards requested but only {len(data)} samples")
    order = np.argsort(data.labels, kind="stable")
    shards = np.array_split(order, n_shards)
    deal = rng.permutation(n_shards)
    spc = plan.shards_per_client
    return [np.concatenate([shards[s] for s in deal[k * spc:(k + 1) * spc]]) for k in range(plan.clients)]


def _dirichlet(data: Dataset, plan: PartitionPlan, rng: np.random.Generator) -> list[np.ndarray]:
    k = plan.clients
    if k > len(data):
        raise UsageError(f"{k} clients but only {len(data)} samples")
    by_class = [np.flatnonzero(data.labels == c) for c in range(data.class_count)]
    for _ in range(MAX_DIRICHLET_ATTEMPTS):
        parts: list[list[np.ndarray]] = [[] for _ in range(k)]
        for idx in by_class:
            if idx.size == 0:
                continue
            idx = rng.permutation(idx)
            props = rng.dirichlet(np.full(k, plan.alpha))
            cuts = (np.cumsum(props)[:-1] * idx.size).astype(int)
            for client, chunk in enumerate(np.split(idx, cuts)):
                parts[client].append(chunk)
        merged = [np.sort(np.concatenate(p)) for p in parts]
        if all(m.size > 0 for m in merged):
            return merged
    raise UsageError(f"dirichlet partition left a client empty after {MAX_DIRICHLET_ATTEMPTS} draws")


def _iid(data: Dataset, plan: PartitionPlan, rng: np.random.Generator) -> list[np.ndarray]:
    if plan.clients > len(data):
        raise UsageError(f"{plan.clients} clients but only {len(data)} samples")
    return [np.sort(p) for p in np.array_split(rng.permutation(len(data)), plan.clients)]


def partition_indices(data: Dataset, plan: PartitionPlan) -> list[np.ndarray]:
    rng = np.random.default_rng(plan.seed)
    if plan.kind is PartitionKind.LABEL_SHARDS:
        return _label_shards(data, plan, rng)
    if plan.kind is PartitionKind.DIRICHLET:
        return _dirichlet(data, plan, rng)
    return _iid(data, plan, rng)


def partition(data: Dataset, plan: PartitionPlan) -> list[Dataset]:
    """Split ``data`` into ``plan.clients`` disjoint, non-empty client datasets."""
    if plan.clients == 1:
        return [data]
    return [data.subset(idx) for idx in partition_indices(data, plan)]


def heterogeneity_index(partitions: Sequence[Dataset]) -> float:
    """Mean total-variation distance between each client's label mix and the pooled mix."""
    if not partitions:
        raise UsageError("need at least one partition")
    counts = np.stack([p.label_histogram() for p in partitions]).astype(np.float64)
    pooled = counts.sum(axis=0) / counts.sum()
    local = counts / counts.sum(axis=1, keepdims=True)
    return float(np.mean(0.5 * np.abs(local - pooled).sum(axis=1)))


def load_csv(path, label_column: str, feature_columns: Sequence[str],
             class_count: int | None = None) -> Dataset:
    """Read a dataset from a headed CSV file.

    Labels must be non-negative integers; with ``class_count`` given, labels at
    or above it are rejected, otherwise it is inferred as ``max(label) + 1``.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IngestionError(f"{path}: cannot open ({exc})") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in [label_column, *feature_columns] if c not in header]
        if missing:
            raise IngestionError(f"{path}: missing columns {missing}")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            feats = []
            for col in feature_columns:
                try:
                    feats.append(float(row[col]))
                except (TypeError, ValueError):
                    raise IngestionError(
                        f"{path}: row {lineno}, column {col!r}: not a number: {row[col]!r}") from None
            raw = row[label_column]
            try:
                label = int(raw)
            except (TypeError, ValueError):
                raise IngestionError(
                    f"{path}: row {lineno}, column {label_column!r}: bad label {raw!r}") from None
            if label < 0 or (class_count is not None and label >= class_count):
                raise IngestionError(
                    f"{path}: row {lineno}, column {label_column!r}: unknown label {label}")
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    if class_count is None:
        class_count = max(max(labels) + 1, 2)
    return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_columns)),
                   np.array(labels), class_count)


def write_csv(data: Dataset, path, label_column: str = "label") -> list[str]:
    """Write ``data`` with full float precision; returns the feature column names."""
    cols = [f"x{i}" for i in range(data.input_dim)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*cols, label_column])
        for x, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
    return cols
