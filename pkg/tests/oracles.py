"""Independent brute-force references used by the test suite.

Nothing here imports the package's vectorized paths; loops and exhaustive
search only.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def best_permutation(table: np.ndarray) -> tuple[tuple[int, ...], int]:
    """Lexicographically first permutation maximizing sum_i table[i, perm[i]]."""
    k = table.shape[0]
    best, best_val = None, None
    for perm in itertools.permutations(range(k)):
        val = sum(int(table[i, perm[i]]) for i in range(k))
        if best_val is None or val > best_val:
            best, best_val = perm, val
    return best, best_val


def brute_accuracy(pred, truth, k: int) -> float:
    best = 0
    for perm in itertools.permutations(range(k)):
        hits = sum(1 for p, t in zip(pred, truth) if perm[p] == t)
        best = max(best, hits)
    return best / len(pred)


def brute_nearest(t: np.ndarray, c: np.ndarray) -> list[int]:
    out = []
    for row in t:
        best_j, best_d = 0, math.inf
        for j, cen in enumerate(c):
            d = sum((a - b) ** 2 for a, b in zip(row, cen))
            if d < best_d:
                best_j, best_d = j, d
        out.append(best_j)
    return out


def loop_contrastive(views: list[np.ndarray], tau: float, include_self: bool = False) -> float:
    """Per-anchor loop over the cross-view InfoNCE with cosine similarity."""

    def cos(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    n = views[0].shape[0]
    total = 0.0
    for v, w in itertools.permutations(range(len(views)), 2):
        a, b = views[v], views[w]
        acc = 0.0
        for i in range(n):
            num = math.exp(cos(a[i], b[i]) / tau)
            den = 0.0
            for m in range(n):
                if include_self or m != i:
                    den += math.exp(cos(a[i], a[m]) / tau)
                den += math.exp(cos(a[i], b[m]) / tau)
            acc += -math.log(num / den)
        total += acc / (2 * n)
    return total


def loop_mutual_information(joint: np.ndarray) -> float:
    r = joint.sum(axis=1)
    c = joint.sum(axis=0)
    mi = 0.0
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            if joint[i, j] > 0:
                mi += joint[i, j] * math.log(joint[i, j] / (r[i] * c[j]))
    return mi


def central_differences(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def kmeans_objective(x: np.ndarray, centroids: np.ndarray) -> float:
    return float(sum(min(((row - c) ** 2).sum() for c in centroids) for row in x))
