"""Center-outward quantile combiner.

Pipeline:

1. map each score to its calibration empirical CDF (values in [0, 1]);
2. sample a reference cloud on ``k`` nested spheres (radii t/k) restricted to
   the nonnegative orthant;
3. couple reference and calibration points with entropic optimal transport
   (squared Euclidean cost);
4. give each calibration point the transported average radius as quantile;
5. generalise to new points by the mean quantile of the nearest calibration
   points (``knn``) or by monotone convex hulls of quantile sublevel sets
   (``hull``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._rng import SplitMix64
from .combiners import LevelDetector, _calibration
from .hull import MAX_HULL_DIM, hull_member, monotone_hull_extend
from .scores import ScoreMatrix

DEFAULT_EPSILON = 0.01
DEFAULT_SPHERES = 100
DEFAULT_NEIGHBORS = 5
DEFAULT_SEED = 42
SINKHORN_TOL = 1e-6
SINKHORN_MAX_ITER = 10_000


class SinkhornWarning(RuntimeWarning):
    pass


# ------------------------------------------------------------------ rank transform


@dataclass(frozen=True)
class RankTransform:
    """Per-coordinate empirical CDF with linear interpolation.

    ``knots[c]`` holds the distinct sorted calibration values of column c and
    ``positions[c]`` their plotting positions (i - 0.5) / M, averaged over ties.
    """

    knots: tuple[np.ndarray, ...]
    positions: tuple[np.ndarray, ...]

    @property
    def d(self) -> int:
        return len(self.knots)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.d:
            raise ValueError(f"expected dimension {self.d}, got {x.shape[1]}")
        out = np.column_stack(
            [np.interp(x[:, c], self.knots[c], self.positions[c], left=0.0, right=1.0) for c in range(self.d)]
        )
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {"knots": [k.tolist() for k in self.knots], "positions": [p.tolist() for p in self.positions]}

    @classmethod
    def from_dict(cls, doc) -> "RankTransform":
        return cls(
            tuple(np.asarray(k, dtype=np.float64) for k in doc["knots"]),
            tuple(np.asarray(p, dtype=np.float64) for p in doc["positions"]),
        )


def rank_transform_fit(cal) -> RankTransform:
    values = cal.values if isinstance(cal, ScoreMatrix) else np.atleast_2d(np.asarray(cal, dtype=np.float64))
    m, d = values.shape
    if m < 2:
        raise ValueError("rank transform needs at least 2 calibration rows")
    knots, positions = [], []
    pp = (np.arange(1, m + 1) - 0.5) / m
    for c in range(d):
        col = np.sort(values[:, c])
        uniq, inverse = np.unique(col, return_inverse=True)
        if len(uniq) < 2:
            raise ValueError(f"column {c} is constant: zero spread")
        pos = np.bincount(inverse, weights=pp) / np.bincount(inverse)
        knots.append(uniq)
        positions.append(pos)
    return RankTransform(tuple(knots), tuple(positions))


def rank_transform_apply(tr: RankTransform, x) -> np.ndarray:
    return tr.apply(x)


# ------------------------------------------------------------------ reference cloud


@dataclass(frozen=True)
class SphereCloud:
    points: np.ndarray
    radius_index: np.ndarray
    k: int

    @property
    def radii(self) -> np.ndarray:
        return self.radius_index / self.k


def sample_spheres(n: int, k: int, d: int, seed: int = DEFAULT_SEED) -> SphereCloud:
    """N points on k nested spheres (radius t/k) intersected with R^d_+."""
    if n < 1 or k < 1 or d < 1:
        raise ValueError("n, k and d must be >= 1")
    rng = SplitMix64(seed)
    g = np.abs(rng.standard_normal(n * d).reshape(n, d))
    norm = np.sqrt(np.sum(g * g, axis=1))
    # a zero-norm draw is measure-zero; map it onto the diagonal direction
    bad = norm == 0
    g[bad] = 1.0
    norm[bad] = np.sqrt(d)
    direction = g / norm[:, None]
    idx = rng.integers(k, n) + 1
    return SphereCloud(direction * (idx / k)[:, None], idx.astype(np.int64), int(k))


# ------------------------------------------------------------------ Sinkhorn


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray
    epsilon: float
    iterations: int
    marginal_residual: float
    converged: bool

    def diagnostics(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "marginal_residual": self.marginal_residual,
            "converged": self.converged,
        }


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[0]))
    for c in range(a.shape[1]):
        diff = a[:, c, None] - b[None, :, c]
        out += diff * diff
    return out


def sinkhorn(
    cost,
    a=None,
    b=None,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = SINKHORN_TOL,
    max_iter: int = SINKHORN_MAX_ITER,
    check_every: int = 10,
) -> TransportPlan:
    """Entropic OT between weights ``a`` (rows) and ``b`` (columns).

    Sinkhorn scaling with log-domain stabilisation: the plan is kept as
    ``u_i exp((f_i + g_j - C_ij)/eps) v_j`` and the scalings u, v are absorbed
    into the potentials f, g whenever they leave [1e-50, 1e50], so the Gibbs
    kernel never under- or overflows.  Stops when the L1 error of both
    marginals is <= ``tol`` or after ``max_iter`` iterations; the returned plan
    records whether it converged.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("cost must be a finite nonnegative matrix")
    n, m = cost.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError("weight vectors must match the cost shape")
    if np.any(a <= 0) or np.any(b <= 0) or abs(a.sum() - 1) > 1e-9 or abs(b.sum() - 1) > 1e-9:
        raise ValueError("weights must be positive and sum to 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    bound = 1e50
    f = cost.min(axis=1)  # every kernel row starts with max entry 1
    g = np.zeros(m)
    kern = np.empty_like(cost)
    kernels.gibbs_kernel(cost, f, g, epsilon, out=kern)
    u = np.ones(n)
    v = np.ones(m)
    residual = np.inf
    it = 0
    while it < max_iter:
        it += 1
        u = a / (kern @ v)
        v = b / (kern.T @ u)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise FloatingPointError("Sinkhorn scaling became non-finite")
        if u.max() > bound or u.min() < 1.0 / bound or v.max() > bound or v.min() < 1.0 / bound:
            f += epsilon * np.log(u)
            g += epsilon * np.log(v)
            u[:] = 1.0
            v[:] = 1.0
            kernels.gibbs_kernel(cost, f, g, epsilon, out=kern)
        if it % check_every == 0 or it == max_iter:
            row = u * (kern @ v)
            col = v * (kern.T @ u)
            residual = max(np.abs(row - a).sum(), np.abs(col - b).sum())
            if residual <= tol:
                break
    plan = u[:, None] * kern * v[None, :]
    return TransportPlan(plan, float(epsilon), it, float(residual), bool(residual <= tol))


def estimate_quantiles(plan: TransportPlan, cloud: SphereCloud) -> np.ndarray:
    """Transported average radius per calibration point.

    Each column of the plan is normalised to unit mass, so the quantile is a
    convex combination of the sphere radii and lies in [1/k, 1].
    """
    p = plan.coupling
    if p.shape[0] != len(cloud.radius_index):
        raise ValueError(f"plan has {p.shape[0]} rows but the cloud has {len(cloud.radius_index)} points")
    mass = p.sum(axis=0)
    q = (cloud.radii @ p) / mass
    return np.clip(q, 1.0 / cloud.k, 1.0)


# ------------------------------------------------------------------ generalisers


@dataclass(frozen=True)
class KnnQuantiles:
    points: np.ndarray
    q: np.ndarray
    k_neighbors: int

    def predict(self, x_scaled) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_scaled, dtype=np.float64))
        return kernels.knn_mean(self.points, self.q, x, self.k_neighbors)


def fit_knn_quantiles(scaled_cal, q, k_neighbors: int = DEFAULT_NEIGHBORS) -> KnnQuantiles:
    pts = np.atleast_2d(np.asarray(scaled_cal, dtype=np.float64))
    q = np.asarray(q, dtype=np.float64)
    if len(q) != pts.shape[0]:
        raise ValueError("one quantile per calibration point is required")
    if not 1 <= k_neighbors <= pts.shape[0]:
        raise ValueError(f"k_neighbors must be in [1, {pts.shape[0]}], got {k_neighbors}")
    return KnnQuantiles(pts, q, int(k_neighbors))


def predict_quantile(gen: KnnQuantiles, x_scaled):
    x = np.asarray(x_scaled, dtype=np.float64)
    out = gen.predict(x)
    return float(out[0]) if x.ndim == 1 else out


class HullQuantiles:
    """Monotone hulls of {cal_j : q_j <= level} for every distinct quantile level."""

    def __init__(self, points: np.ndarray, q: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)
        self.q = np.asarray(q, dtype=np.float64)
        if self.points.shape[1] > MAX_HULL_DIM:
            raise ValueError(f"hull variant supports d <= {MAX_HULL_DIM}, got d = {self.points.shape[1]}")
        self.levels = np.unique(self.q)
        self._cache: dict[int, np.ndarray] = {}

    def extended(self, idx: int) -> np.ndarray:
        """Extended point set of sublevel ``levels[idx]``."""
        if idx not in self._cache:
            sub = self.points[self.q <= self.levels[idx]]
            self._cache[idx] = monotone_hull_extend(sub)
        return self._cache[idx]

    def inside(self, x, t: float) -> bool:
        """Whether scaled x lies in the monotone hull of {q_j <= t}."""
        idx = int(np.searchsorted(self.levels, t, side="right")) - 1
        if idx < 0:
            return False
        return self._inside_idx(np.asarray(x, dtype=np.float64), idx)

    def _inside_idx(self, x: np.ndarray, idx: int) -> bool:
        if np.any(x < 0):
            return False
        sub = self.points[self.q <= self.levels[idx]]
        if np.any(np.all(sub >= x, axis=1)):  # dominated by a member point
            return True
        return hull_member(self.extended(idx), x)

    def level(self, x) -> float:
        """Smallest quantile level whose hull contains x (inf if none)."""
        x = np.asarray(x, dtype=np.float64)
        n = len(self.levels)
        if not self._inside_idx(x, n - 1):
            return np.inf
        lo, hi = 0, n - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self._inside_idx(x, mid):
                hi = mid
            else:
                lo = mid + 1
        return float(self.levels[lo])


# ------------------------------------------------------------------ combiner


class CenterOutwardCombiner(LevelDetector):
    """Center-outward quantiles from entropic OT onto the calibration scores.

    ``level(x)`` is the generalised quantile of x; A_t = {level > t}.  With the
    hull variant that is equivalent to x lying outside the monotone hull of
    the calibration points whose quantile is <= t.
    """

    kind = "centerout"

    def __init__(
        self,
        variant: str = "knn",
        n_reference: int | None = None,
        n_spheres: int = DEFAULT_SPHERES,
        seed: int = DEFAULT_SEED,
        epsilon: float = DEFAULT_EPSILON,
        k_neighbors: int = DEFAULT_NEIGHBORS,
        tol: float = SINKHORN_TOL,
        max_iter: int = SINKHORN_MAX_ITER,
    ):
        super().__init__()
        variant = variant.lower()
        if variant not in ("knn", "hull"):
            raise ValueError(f"unknown variant {variant!r}; choose 'knn' or 'hull'")
        self.variant = variant
        self.n_reference = n_reference
        self.n_spheres = int(n_spheres)
        self.seed = int(seed)
        self.epsilon = float(epsilon)
        self.k_neighbors = int(k_neighbors)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.transform: RankTransform | None = None
        self.scaled_cal: np.ndarray | None = None
        self.q: np.ndarray | None = None
        self.sinkhorn_info: dict | None = None
        self._gen = None

    def fit(self, cal: ScoreMatrix) -> "CenterOutwardCombiner":
        values = _calibration(cal)
        m, d = values.shape
        if self.variant == "hull" and d > MAX_HULL_DIM:
            raise ValueError(f"hull variant supports d <= {MAX_HULL_DIM}, got d = {d}")
        transform = rank_transform_fit(values)
        scaled = transform.apply(values)
        n_ref = self.n_reference or 4 * m
        cloud = sample_spheres(n_ref, self.n_spheres, d, self.seed)
        plan = sinkhorn(squared_distances(cloud.points, scaled), epsilon=self.epsilon, tol=self.tol, max_iter=self.max_iter)
        if not plan.converged:
            warnings.warn(
                f"Sinkhorn stopped after {plan.iterations} iterations with marginal residual "
                f"{plan.marginal_residual:.3g} > {self.tol:g}",
                SinkhornWarning,
                stacklevel=2,
            )
        self.transform = transform
        self.scaled_cal = scaled
        self.q = estimate_quantiles(plan, cloud)
        self.sinkhorn_info = dict(plan.diagnostics(), n_reference=n_ref)
        self.detector_names = cal.detector_names
        self._build_generaliser()
        return self

    def _build_generaliser(self):
        if self.variant == "knn":
            self._gen = fit_knn_quantiles(self.scaled_cal, self.q, self.k_neighbors)
        else:
            self._gen = HullQuantiles(self.scaled_cal, self.q)

    def scale(self, X) -> np.ndarray:
        return self.transform.apply(self._design(X))

    def level(self, X) -> np.ndarray:
        z = self.scale(X)
        if self.variant == "knn":
            return self._gen.predict(z)
        return np.array([self._gen.level(row) for row in z])

    def in_hull(self, x, t: float) -> bool:
        """Direct hull test at level t (hull variant only)."""
        if self.variant != "hull":
            raise ValueError("in_hull requires the hull variant")
        return self._gen.inside(self.scale(np.asarray(x, dtype=np.float64))[0], t)

    def _state(self):
        return {
            "variant": self.variant,
            "hyperparameters": {
                "n_reference": self.n_reference,
                "n_spheres": self.n_spheres,
                "seed": self.seed,
                "epsilon": self.epsilon,
                "k_neighbors": self.k_neighbors,
                "tol": self.tol,
                "max_iter": self.max_iter,
            },
            "transform": self.transform.to_dict(),
            "scaled_calibration": self.scaled_cal.tolist(),
            "quantiles": self.q.tolist(),
            "sinkhorn": self.sinkhorn_info,
        }

    @classmethod
    def from_dict(cls, doc):
        obj = cls(doc["variant"], **doc["hyperparameters"])
        obj.transform = RankTransform.from_dict(doc["transform"])
        obj.scaled_cal = np.asarray(doc["scaled_calibration"], dtype=np.float64).reshape(-1, len(doc["detector_names"]))
        obj.q = np.asarray(doc["quantiles"], dtype=np.float64)
        obj.sinkhorn_info = doc.get("sinkhorn")
        obj.detector_names = tuple(doc["detector_names"])
        obj._build_generaliser()
        return obj


def center_outward_fit(cal: ScoreMatrix, n_reference=None, n_spheres=DEFAULT_SPHERES, seed=DEFAULT_SEED, variant="knn", **kw):
    return CenterOutwardCombiner(variant, n_reference, n_spheres, seed, **kw).fit(cal)
