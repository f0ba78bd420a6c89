"""Monotone (downward-closed) convex hulls in the nonnegative orthant."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

MAX_HULL_DIM = 4
HULL_TOL = 1e-9


def hull_vertices(points: np.ndarray) -> np.ndarray:
    """Unique points reduced to convex hull vertices when Qhull can build the hull."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    n, d = pts.shape
    if d == 1:
        return np.array([[pts.min()], [pts.max()]]) if n > 1 else pts
    if n <= d + 1:
        return pts
    try:
        hull = ConvexHull(pts)
    except QhullError:  # flat point set; keep everything
        return pts
    return pts[np.sort(hull.vertices)]


def monotone_hull_extend(points) -> np.ndarray:
    """Extend a point set so that its convex hull is closed toward the origin.

    Each coordinate is dropped in turn, the projected points are extended
    recursively in one dimension less and re-inserted with the dropped
    coordinate set to zero.  The hull of the result contains every p' with
    0 <= p' <= p for p in the original hull.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        raise ValueError("need at least one point")
    d = pts.shape[1]
    if d > MAX_HULL_DIM:
        raise ValueError(f"monotone hull supports d <= {MAX_HULL_DIM}, got d = {d}")
    return _extend(pts)


def _extend(pts: np.ndarray) -> np.ndarray:
    pts = hull_vertices(pts)
    d = pts.shape[1]
    if d == 1:
        return hull_vertices(np.vstack([pts, [[0.0]]]))
    parts = [pts]
    for k in range(d):
        sub = _extend(np.delete(pts, k, axis=1))
        parts.append(np.insert(sub, k, 0.0, axis=1))
    return hull_vertices(np.vstack(parts))


def hull_member(points, x, tol: float = HULL_TOL) -> bool:
    """Whether x is a convex combination of ``points`` (LP feasibility)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64).ravel()
    if pts.shape[0] == 0:
        return False
    if np.any(x < pts.min(axis=0) - tol) or np.any(x > pts.max(axis=0) + tol):
        return False
    if np.any(np.all(np.abs(pts - x) <= tol, axis=1)):
        return True
    n, d = pts.shape
    # minimise total slack s+ + s- subject to sum λ = 1, Pᵀλ + s+ - s- = x
    a_eq = np.zeros((d + 1, n + 2 * d))
    a_eq[:d, :n] = pts.T
    a_eq[:d, n : n + d] = np.eye(d)
    a_eq[:d, n + d :] = -np.eye(d)
    a_eq[d, :n] = 1.0
    b_eq = np.concatenate([x, [1.0]])
    c = np.concatenate([np.zeros(n), np.ones(2 * d)])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return False
    return bool(res.fun <= tol * max(1.0, d))
