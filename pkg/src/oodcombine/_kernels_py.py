"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation (same summation order,
same tie rules) so both backends agree to rounding of ``exp``.
"""

from __future__ import annotations

import numpy as np

_CHUNK_ELEMS = 4_000_000


def _chunks(n_query: int, per_row: int):
    step = max(1, _CHUNK_ELEMS // max(per_row, 1))
    for start in range(0, n_query, step):
        yield slice(start, min(start + step, n_query))


def dominance_counts(cal: np.ndarray, query: np.ndarray) -> np.ndarray:
    """For each query row, the number of calibration rows <= it in every coordinate."""
    m, d = cal.shape
    out = np.empty(query.shape[0], dtype=np.int64)
    if d == 1:
        out[:] = np.searchsorted(np.sort(cal[:, 0]), query[:, 0], side="right")
        return out
    for sl in _chunks(query.shape[0], m * d):
        dom = np.all(cal[None, :, :] <= query[sl, None, :], axis=2)
        out[sl] = dom.sum(axis=1)
    return out


def knn_mean(ref: np.ndarray, values: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Mean of ``values`` over the k nearest ``ref`` rows (ties: lower index first)."""
    m, d = ref.shape
    out = np.empty(query.shape[0])
    for sl in _chunks(query.shape[0], m * d):
        diff = query[sl, None, :] - ref[None, :, :]
        dist = np.zeros(diff.shape[:2])
        for c in range(d):
            dist += diff[:, :, c] * diff[:, :, c]
        # sum in index order so equal neighbour sets give equal means
        idx = np.sort(np.argsort(dist, axis=1, kind="stable")[:, :k], axis=1)
        acc = np.zeros(idx.shape[0])
        for c in range(k):
            acc += values[idx[:, c]]
        out[sl] = acc / k
    return out


def gibbs_kernel(cost: np.ndarray, alpha: np.ndarray, beta: np.ndarray, eps: float, out: np.ndarray) -> np.ndarray:
    """out[i, j] = exp((alpha[i] + beta[j] - cost[i, j]) / eps), written in place."""
    np.add(alpha[:, None], beta[None, :], out=out)
    np.subtract(out, cost, out=out)
    np.divide(out, eps, out=out)
    np.exp(out, out=out)
    return out


def concordance(x: np.ndarray, y: np.ndarray) -> int:
    """Concordant minus discordant pairs; tied pairs count for neither."""
    n = len(x)
    total = 0
    step = max(1, _CHUNK_ELEMS // max(n, 1))
    for start in range(0, n, step):
        stop = min(start + step, n)
        sx = np.sign(x[start:stop, None] - x[None, :])
        sy = np.sign(y[start:stop, None] - y[None, :])
        total += int((sx * sy).sum())
    return total // 2
