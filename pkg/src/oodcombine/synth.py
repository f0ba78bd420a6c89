"""Synthetic scores with known ground truth, and brute-force reference oracles.

The oracles are deliberately naive (pair enumeration, grid search, random
convex combinations) and share no code with the fast paths they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import SplitMix64
from .scores import ID_ORIGIN, ScoreMatrix


@dataclass(frozen=True)
class GaussianScoreSpec:
    n_id: int
    n_ood: int
    d: int
    mu_ood: tuple[float, ...]
    correlation: np.ndarray | None = None
    seed: int = 42
    names: tuple[str, ...] | None = None
    ood_name: str = "synth_ood"

    def corr(self) -> np.ndarray:
        return np.eye(self.d) if self.correlation is None else np.asarray(self.correlation, dtype=np.float64)


def equicorrelation(d: int, rho: float) -> np.ndarray:
    r = np.full((d, d), float(rho))
    np.fill_diagonal(r, 1.0)
    return r


def gen_gaussian_scores(spec: GaussianScoreSpec) -> tuple[ScoreMatrix, ScoreMatrix]:
    """ID rows ~ N(0, R), OOD rows ~ N(mu_ood, R); deterministic per seed."""
    if spec.n_id < 1 or spec.n_ood < 1 or spec.d < 1:
        raise ValueError("counts and dimension must be >= 1")
    mu = np.asarray(spec.mu_ood, dtype=np.float64)
    if mu.shape != (spec.d,):
        raise ValueError(f"mu_ood must have length {spec.d}")
    corr = spec.corr()
    if corr.shape != (spec.d, spec.d) or not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1):
        raise ValueError("correlation must be a symmetric unit-diagonal matrix")
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise ValueError("correlation matrix is not positive definite") from None
    names = spec.names or tuple(f"s{i + 1}" for i in range(spec.d))
    if len(names) != spec.d:
        raise ValueError("one name per dimension is required")
    rng = SplitMix64(spec.seed)
    z_id = rng.standard_normal(spec.n_id * spec.d).reshape(spec.n_id, spec.d) @ chol.T
    z_ood = rng.standard_normal(spec.n_ood * spec.d).reshape(spec.n_ood, spec.d) @ chol.T + mu
    id_m = ScoreMatrix(names, z_id, tuple(f"id_{i:06d}" for i in range(spec.n_id)), (ID_ORIGIN,) * spec.n_id)
    ood_m = ScoreMatrix(
        names, z_ood, tuple(f"{spec.ood_name}_{i:06d}" for i in range(spec.n_ood)), (spec.ood_name,) * spec.n_ood
    )
    return id_m, ood_m


def normal_shift_auroc(delta: float, sigma: float = 1.0) -> float:
    """AUROC of N(delta, sigma²) against N(0, sigma²): Φ(delta / (sigma √2))."""
    return 0.5 * math.erfc(-delta / (sigma * math.sqrt(2.0)) / math.sqrt(2.0))


# ------------------------------------------------------------------ oracles


def brute_force_auroc(id_scores, ood_scores) -> float:
    """O(n·m) pair count: P(ood > id) + 0.5 P(ood == id)."""
    wins = 0.0
    for o in ood_scores:
        for i in id_scores:
            if o > i:
                wins += 1.0
            elif o == i:
                wins += 0.5
    return wins / (len(id_scores) * len(ood_scores))


def grid_mle_copula(u, family: str, grid) -> float:
    """Grid point with the largest copula log-likelihood."""
    from .copulas import clamp_pseudo_obs, copula_loglik

    u = clamp_pseudo_obs(u)
    grid = np.asarray(grid, dtype=np.float64)
    ll = [copula_loglik(family, th, u) for th in grid]
    return float(grid[int(np.nanargmax(ll))])


def brute_force_hull_member(points, x, samples: int = 20000, seed: int = 0, tol: float = 1e-9) -> bool:
    """Hull membership without linear programming.

    Full-dimensional hulls are decided from Qhull's facet inequalities.
    Otherwise random convex combinations are drawn and x counts as inside
    when one lands within ``1e-3`` of it.
    """
    from scipy.spatial import ConvexHull, QhullError

    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64).ravel()
    n, d = pts.shape
    if np.any(np.all(np.abs(pts - x) <= tol, axis=1)):
        return True
    if n > d:
        try:
            hull = ConvexHull(pts)
        except QhullError:
            pass
        else:
            return bool(np.all(hull.equations[:, :d] @ x + hull.equations[:, d] <= 1e-12))
    rng = SplitMix64(seed)
    w = -np.log(1.0 - rng.random(samples * n).reshape(samples, n))
    w /= w.sum(axis=1, keepdims=True)
    combos = w @ pts
    return bool(np.min(np.linalg.norm(combos - x, axis=1)) <= 1e-3)


# ------------------------------------------------------------------ copula samplers (test data)


def sample_copula(family: str, theta, n: int, seed: int = 0, correlation=None) -> np.ndarray:
    """Draw n points from a bivariate copula (or a Normal/independent one of any d)."""
    rng = SplitMix64(seed)
    if family == "independent":
        d = 2 if correlation is None else len(correlation)
        return rng.random(n * d).reshape(n, d)
    if family == "normal":
        from scipy.special import ndtr

        corr = np.asarray(correlation, dtype=np.float64)
        z = rng.standard_normal(n * len(corr)).reshape(n, len(corr)) @ np.linalg.cholesky(corr).T
        return ndtr(z)
    u = _open(rng.random(n))
    w = _open(rng.random(n))
    th = float(theta)
    if family == "clayton":
        v = (u ** (-th) * (w ** (-th / (1.0 + th)) - 1.0) + 1.0) ** (-1.0 / th)
    elif family == "frank":
        v = -np.log1p(w * np.expm1(-th) / (w + (1.0 - w) * np.exp(-th * u))) / th
    elif family == "plackett":
        a = w * (1.0 - w)
        b = th + a * (th - 1.0) ** 2
        c = 2.0 * a * (u * th**2 + 1.0 - u) + th * (1.0 - 2.0 * a)
        dd = np.sqrt(th) * np.sqrt(th + 4.0 * a * u * (1.0 - u) * (1.0 - th) ** 2)
        v = (c - (1.0 - 2.0 * w) * dd) / (2.0 * b)
    elif family == "gumbel":
        return _sample_gumbel(th, n, rng)
    else:
        raise ValueError(f"no sampler for {family!r}")
    return np.column_stack([u, np.clip(v, 0.0, 1.0)])


def _open(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 1e-12, 1.0 - 1e-12)


def _sample_gumbel(th: float, n: int, rng: SplitMix64) -> np.ndarray:
    # Marshall-Olkin with a positive stable frailty, Laplace transform
    # exp(-s^alpha), drawn with Kanter's representation
    alpha = 1.0 / th
    if alpha == 1.0:
        return _open(rng.random(2 * n)).reshape(n, 2)
    ang = np.pi * _open(rng.random(n))
    e = -np.log(_open(rng.random(n)))
    s = (
        np.sin(alpha * ang)
        / np.sin(ang) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * ang) / e) ** ((1.0 - alpha) / alpha)
    )
    ex = -np.log(_open(rng.random(2 * n))).reshape(n, 2)
    return np.exp(-((ex / s[:, None]) ** alpha))
