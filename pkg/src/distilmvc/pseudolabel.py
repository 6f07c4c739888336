"""Teacher-feature clustering and alignment of pseudo-labels to the student's label space."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import softmax

from .config import make_rng
from .errors import ConfigError, InfeasibleError, RangeError, ShapeError


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    assignments: np.ndarray
    objective: list[float]


@dataclass
class ClusterState:
    centroids: np.ndarray
    pseudo_labels: list[np.ndarray] = field(default_factory=list)
    permutations: list[np.ndarray] = field(default_factory=list)
    dark_targets: list[np.ndarray] = field(default_factory=list)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # explicit differences: no cancellation, exact zero at a centroid
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a chosen centre
            idx = next(i for i in range(n) if i not in chosen)
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(features, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-8) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    ``objective`` records the within-cluster sum of squares after each
    assignment step; it never increases. Empty clusters take over the point
    farthest from its own centroid.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("features must be a matrix")
    n = x.shape[0]
    if k < 2:
        raise InfeasibleError(f"k must be >= 2, got {k}")
    if n < k:
        raise InfeasibleError(f"cannot form {k} clusters from {n} samples")
    if not np.all(np.isfinite(x)):
        raise ShapeError("features contain NaN or Inf")

    rng = make_rng(seed, "kmeans")
    centroids = _kmeanspp(x, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max(1, max_iter)):
        d2 = _sq_dists(x, centroids)
        labels = d2.argmin(axis=1)
        point_cost = d2[np.arange(n), labels]
        counts = np.bincount(labels, minlength=k)
        while (counts == 0).any():
            j = int(np.flatnonzero(counts == 0)[0])
            movable = np.where(counts[labels] > 1, point_cost, -1.0)
            far = int(movable.argmax())
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            centroids[j] = x[far]
            point_cost[far] = 0.0
        history.append(float(point_cost.sum()))

        new = np.zeros_like(centroids)
        np.add.at(new, labels, x)
        new /= counts[:, None]
        shift = float(((new - centroids) ** 2).sum())
        centroids = new
        if shift < tol:
            break
    d2 = _sq_dists(x, centroids)
    final = d2.argmin(axis=1)
    if np.bincount(final, minlength=k).min() > 0:
        final_cost = float(d2[np.arange(n), final].sum())
        if final_cost <= history[-1]:
            labels = final
            history.append(final_cost)
    return KMeansResult(centroids, labels, history)


def assign_pseudo_labels(t_views: Sequence, centroids) -> list[np.ndarray]:
    """Nearest per-view centroid block for every sample of every view (ties -> lowest index)."""
    centroids = np.asarray(centroids, dtype=np.float64)
    out = []
    offset = 0
    for t in t_views:
        t = np.asarray(t, dtype=np.float64)
        d = t.shape[1]
        if offset + d > centroids.shape[1]:
            raise ShapeError("centroid blocks do not match the per-view feature widths")
        out.append(_sq_dists(t, centroids[:, offset : offset + d]).argmin(axis=1))
        offset += d
    if offset != centroids.shape[1]:
        raise ShapeError("centroid width exceeds the concatenated view widths")
    return out


def contingency(rows, cols, k: int) -> np.ndarray:
    """counts[i, j] = #{n : rows[n] == i and cols[n] == j}."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.shape != cols.shape:
        raise ShapeError(f"label vectors differ in length: {rows.shape} vs {cols.shape}")
    for lab in (rows, cols):
        if lab.size and (lab.min() < 0 or lab.max() >= k):
            raise RangeError(f"labels must lie in [0, {k})")
    out = np.zeros((k, k), dtype=np.int64)
    np.add.at(out, (rows, cols), 1)
    return out


def hungarian_align(cont) -> np.ndarray:
    """Permutation ``perm`` (row i -> column perm[i]) maximizing matched counts.

    Among optimal matchings the lexicographically smallest ``perm`` is returned.
    """
    m = np.asarray(cont)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"contingency must be square, got {m.shape}")
    k = m.shape[0]
    cost = m.max() - m if m.size else m
    exact = np.issubdtype(m.dtype, np.integer)

    def best(rows: list[int], cols: list[int]) -> float:
        if not rows:
            return 0
        sub = cost[np.ix_(rows, cols)]
        r, c = linear_sum_assignment(sub)
        return sub[r, c].sum()

    target = best(list(range(k)), list(range(k)))
    perm = np.empty(k, dtype=np.int64)
    free = list(range(k))
    spent = 0
    for i in range(k):
        rest = list(range(i + 1, k))
        for j in free:
            others = [c for c in free if c != j]
            value = spent + cost[i, j] + best(rest, others)
            if value == target if exact else np.isclose(value, target, rtol=1e-12, atol=1e-12):
                perm[i] = j
                spent += cost[i, j]
                free = others
                break
    return perm


def invert_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def align_columns(p: np.ndarray, perm) -> np.ndarray:
    """Column i of the result is column perm[i] of ``p``."""
    return np.asarray(p)[:, np.asarray(perm, dtype=np.int64)]


def dark_knowledge(
    t_views: Sequence,
    centroids,
    permutations: Sequence,
    mode: str = "soft",
    temp: float = 1.0,
    pseudo_labels: Sequence | None = None,
) -> list[np.ndarray]:
    """Per-view target distributions in the student's label space.

    Soft mode: softmax over clusters of negative squared centroid distance / ``temp``.
    One-hot mode: indicator of the nearest centroid (or of ``pseudo_labels`` if given).
    Columns are reordered by the view's alignment permutation.
    """
    if not temp > 0:
        raise ConfigError(f"temperature must be > 0, got {temp}")
    if mode not in ("soft", "onehot"):
        raise ConfigError(f"unknown dark-knowledge mode {mode!r}")
    centroids = np.asarray(centroids, dtype=np.float64)
    k = centroids.shape[0]
    out = []
    offset = 0
    for v, t in enumerate(t_views):
        t = np.asarray(t, dtype=np.float64)
        d = t.shape[1]
        d2 = _sq_dists(t, centroids[:, offset : offset + d])
        offset += d
        if mode == "soft":
            p = softmax(-d2 / temp, axis=1)
        else:
            lab = d2.argmin(axis=1) if pseudo_labels is None else np.asarray(pseudo_labels[v])
            p = np.eye(k)[lab]
        out.append(align_columns(p, permutations[v]))
    return out


def build_cluster_state(
    t_views: Sequence,
    student_labels: Sequence,
    k: int,
    seed: int,
    mode: str = "soft",
    temp: float = 1.0,
    max_iter: int = 300,
    tol: float = 1e-8,
) -> ClusterState:
    """K-means on concatenated teacher features, per-view pseudo-labels, alignment, dark targets."""
    t_views = [np.asarray(t, dtype=np.float64) for t in t_views]
    res = kmeans(np.concatenate(t_views, axis=1), k, seed=seed, max_iter=max_iter, tol=tol)
    pseudo = assign_pseudo_labels(t_views, res.centroids)
    perms = [hungarian_align(contingency(s, p, k)) for s, p in zip(student_labels, pseudo)]
    dark = dark_knowledge(t_views, res.centroids, perms, mode=mode, temp=temp, pseudo_labels=pseudo)
    return ClusterState(res.centroids, pseudo, perms, dark)
