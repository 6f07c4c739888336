"""Multi-view datasets: on-disk format, normalization, batching and a synthetic generator.

A dataset directory holds ``meta.json``, one headerless ``view_{i}.csv`` per view
and, when ``has_labels`` is true, ``labels.csv`` with one integer per row.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import make_rng
from .errors import ConfigError, LoadError, ParseError, RangeError, ShapeError, ValidationError


@dataclass
class MultiViewDataset:
    views: list[np.ndarray]
    k: int
    labels: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self) -> None:
        self.views = [np.ascontiguousarray(v, dtype=np.float64) for v in self.views]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    @property
    def num_views(self) -> int:
        return len(self.views)

    @property
    def num_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def view_dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]

    def validate(self) -> None:
        if len(self.views) < 2:
            raise ValidationError(f"need at least 2 views, got {len(self.views)}")
        if self.k < 2:
            raise ValidationError(f"need k >= 2, got {self.k}")
        n = self.views[0].shape[0] if self.views[0].ndim == 2 else -1
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise ShapeError(f"view {i} is not a matrix (ndim={v.ndim})")
            if v.shape[0] != n:
                raise ShapeError(f"view {i} has {v.shape[0]} rows, view 0 has {n}")
            if v.shape[1] < 1:
                raise ShapeError(f"view {i} has no columns")
            if not np.all(np.isfinite(v)):
                raise ValidationError(f"view {i} contains NaN or Inf")
        if n < 2:
            raise ShapeError(f"need at least 2 samples, got {n}")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ShapeError(f"labels have shape {self.labels.shape}, expected ({n},)")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
                raise RangeError(f"labels must lie in [0, {self.k})")

    def subset(self, idx: np.ndarray) -> list[np.ndarray]:
        return [v[idx] for v in self.views]


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_cluster: int = 200
    k: int = 3
    view_dims: tuple[int, ...] = (10, 12)
    cluster_separation: float = 6.0
    noise_scale: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.n_per_cluster < 2:
            raise ValidationError("n_per_cluster must be >= 2")
        if self.k < 2:
            raise ValidationError("k must be >= 2")
        if len(self.view_dims) < 2:
            raise ValidationError("need at least 2 views")
        if any(d < 2 for d in self.view_dims):
            raise ValidationError("every view dim must be >= 2")
        if not self.cluster_separation > 0:
            raise ValidationError("cluster_separation must be > 0")
        if not self.noise_scale >= 0:
            raise ValidationError("noise_scale must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 128
    shuffle_seed: int = 0
    drop_last: bool = False


# --------------------------------------------------------------------------- I/O


def _read_matrix(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            vals = []
            for c, cell in enumerate(row):
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(f"{path.name}: non-numeric cell {cell!r} at row {r}, column {c}") from None
                if not math.isfinite(x):
                    raise ParseError(f"{path.name}: non-finite cell {cell!r} at row {r}, column {c}")
                vals.append(x)
            rows.append(vals)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ShapeError(f"{path.name}: ragged rows (widths {sorted(widths)})")
    return np.array(rows, dtype=np.float64)


def _read_labels(path: Path) -> np.ndarray:
    out = []
    with path.open() as fh:
        for r, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ParseError(f"{path.name}: non-integer label {line!r} at row {r}, column 0") from None
    return np.array(out, dtype=np.int64)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise LoadError(f"missing file: {path.name} (looked in {path.parent})")
    return path


def load_dataset(root: str | Path) -> MultiViewDataset:
    root = Path(root)
    meta = json.loads(_require(root / "meta.json").read_text())
    num_views = int(meta["num_views"])
    views = [_read_matrix(_require(root / f"view_{i}.csv")) for i in range(num_views)]

    n = int(meta["num_samples"])
    for i, v in enumerate(views):
        if v.shape[0] != n:
            raise ShapeError(f"view_{i}.csv has {v.shape[0]} rows, meta.json says {n}")
    dims = meta.get("view_dims")
    if dims is not None:
        for i, (v, d) in enumerate(zip(views, dims)):
            if v.shape[1] != int(d):
                raise ShapeError(f"view_{i}.csv has {v.shape[1]} columns, meta.json says {d}")

    labels = None
    if meta.get("has_labels", False):
        labels = _read_labels(_require(root / "labels.csv"))
        k = int(meta["num_clusters"])
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            bad = int(labels.max() if labels.max() >= k else labels.min())
            raise RangeError(f"labels.csv: label {bad} outside [0, {k})")
    return MultiViewDataset(views=views, labels=labels, k=int(meta["num_clusters"]), name=str(meta.get("name", root.name)))


def save_dataset(dataset: MultiViewDataset, root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": dataset.name,
        "num_views": dataset.num_views,
        "num_samples": dataset.num_samples,
        "num_clusters": dataset.k,
        "view_dims": dataset.view_dims,
        "has_labels": dataset.labels is not None,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for i, v in enumerate(dataset.views):
        # %.17g round-trips float64 exactly
        np.savetxt(root / f"view_{i}.csv", v, delimiter=",", fmt="%.17g")
    if dataset.labels is not None:
        np.savetxt(root / "labels.csv", dataset.labels, fmt="%d")
    return root


# ---------------------------------------------------------------- transforms


def normalize_minmax(dataset: MultiViewDataset) -> MultiViewDataset:
    """Rescale every feature column to [0, 1]; constant columns become 0."""
    out = []
    for v in dataset.views:
        lo = v.min(axis=0)
        span = v.max(axis=0) - lo
        scaled = np.zeros_like(v)
        ok = span > 0
        scaled[:, ok] = (v[:, ok] - lo[ok]) / span[ok]
        out.append(np.clip(scaled, 0.0, 1.0))
    return MultiViewDataset(views=out, labels=dataset.labels, k=dataset.k, name=dataset.name)


def synth_generate(spec: SyntheticSpec) -> MultiViewDataset:
    """Gaussian clusters in a shared latent space, linearly projected into every view.

    Cluster means sit on the scaled coordinate axes of a k-dimensional latent
    space so every pair of means is ``cluster_separation`` unit-variance standard
    deviations apart.
    """
    spec.validate()
    rng = make_rng(spec.seed, "synth")
    k, n = spec.k, spec.n_per_cluster
    means = np.eye(k) * (spec.cluster_separation / math.sqrt(2.0))
    labels = np.repeat(np.arange(k), n)
    latent = means[labels] + rng.standard_normal((k * n, k))

    views = []
    for d in spec.view_dims:
        proj = rng.standard_normal((k, d)) / math.sqrt(k)
        views.append(latent @ proj + spec.noise_scale * rng.standard_normal((k * n, d)))

    order = rng.permutation(k * n)
    return MultiViewDataset(
        views=[v[order] for v in views],
        labels=labels[order],
        k=k,
        name=f"synthetic-k{k}-s{spec.seed}",
    )


def batch_iter(num_samples: int | MultiViewDataset, plan: BatchPlan, epoch: int) -> list[np.ndarray]:
    """Deterministic shuffled mini-batches keyed on ``(plan.shuffle_seed, epoch)``.

    When ``drop_last`` is false and the trailing remainder is a single index it is
    merged into the previous batch, so that every batch has a negative pair.
    """
    if plan.batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {plan.batch_size}")
    n = num_samples.num_samples if isinstance(num_samples, MultiViewDataset) else int(num_samples)
    perm = make_rng(plan.shuffle_seed, "shuffle", epoch).permutation(n)
    batches = [perm[i : i + plan.batch_size] for i in range(0, n, plan.batch_size)]
    if batches and len(batches[-1]) < plan.batch_size:
        if plan.drop_last:
            batches.pop()
        elif len(batches[-1]) < 2:
            tail = batches.pop()
            if batches:
                batches[-1] = np.concatenate([batches[-1], tail])
    return batches
