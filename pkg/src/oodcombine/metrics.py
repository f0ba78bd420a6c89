"""ROC metrics for scalar scores and for one-parameter region families.

Convention everywhere: ID samples are negatives, OOD samples positives, and a
sample is declared OOD when its score is strictly greater than the threshold.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

DEFAULT_GRID_SIZE = 1001


def _as_scores(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def auroc_scalar(id_scores, ood_scores) -> float:
    """Mann-Whitney AUROC, ties counted one half; higher score = more OOD."""
    neg = _as_scores(id_scores, "id_scores")
    pos = _as_scores(ood_scores, "ood_scores")
    n, m = len(neg), len(pos)
    ranks = rankdata(np.concatenate([neg, pos]))
    u = ranks[n:].sum() - m * (m + 1) / 2.0
    return float(u / (n * m))


def _check_level(level: float, name: str) -> None:
    if not (0.0 < level <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {level}")


def fpr_at_tpr(id_scores, ood_scores, tpr_level: float = 0.95) -> float:
    """FPR at the largest threshold whose TPR still reaches ``tpr_level``.

    TPR(tau) = #{ood > tau} / m drops just at OOD values, so the supremum of
    admissible thresholds sits just below the ceil(level * m)-th largest OOD
    score; the FPR there counts ID scores >= that value.
    """
    neg = _as_scores(id_scores, "id_scores")
    pos = _as_scores(ood_scores, "ood_scores")
    _check_level(tpr_level, "tpr_level")
    m = len(pos)
    need = min(m, max(1, math.ceil(tpr_level * m - 1e-9)))
    tau = np.sort(pos)[::-1][need - 1]
    return float(np.mean(neg >= tau))


def tpr_at_fpr(id_scores, ood_scores, fpr_level: float = 0.05) -> float:
    """TPR at the smallest threshold whose FPR does not exceed ``fpr_level``."""
    neg = _as_scores(id_scores, "id_scores")
    pos = _as_scores(ood_scores, "ood_scores")
    _check_level(fpr_level, "fpr_level")
    n = len(neg)
    allowed = math.floor(fpr_level * n + 1e-9)
    if allowed >= n:
        return 1.0
    tau = np.sort(neg)[::-1][allowed]
    return float(np.mean(pos > tau))


@dataclass(frozen=True)
class RocCurve:
    """ROC points sorted by FPR; ``t`` is nan for closure and scalar points."""

    fpr: np.ndarray
    tpr: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if not (len(self.fpr) == len(self.tpr) == len(self.t)):
            raise ValueError("fpr, tpr and t must have equal length")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("t,fpr,tpr\n")
        for t, f, p in zip(self.t, self.fpr, self.tpr):
            out.write(f"{'' if math.isnan(t) else repr(float(t))},{float(f)!r},{float(p)!r}\n")
        return out.getvalue()


def close_curve(fpr, tpr, t=None) -> RocCurve:
    """Add (0,0) and (1,1) and stable-sort by FPR."""
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    t = np.full(len(fpr), np.nan) if t is None else np.asarray(t, dtype=np.float64)
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    t = np.concatenate([[np.nan], t, [np.nan]])
    order = np.argsort(fpr, kind="stable")
    return RocCurve(fpr[order], tpr[order], t[order])


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    if size < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(0.0, 1.0, size)


def family_roc(detector, id_matrix, ood_matrix, grid=None) -> RocCurve:
    """ROC of a fitted region family: FPR(t), TPR(t) = fraction inside A_t."""
    from .combiners import DetectorFamily, NotFittedError

    if not isinstance(detector, DetectorFamily):
        raise TypeError("detector must be a DetectorFamily")
    if not detector.is_fitted:
        raise NotFittedError(f"{type(detector).__name__} is not fitted")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("grid is empty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    fpr = detector.region_rates(id_matrix, grid)
    tpr = detector.region_rates(ood_matrix, grid)
    return close_curve(fpr, tpr, grid)


def auroc_family(curve: RocCurve) -> float:
    """Trapezoidal area under an FPR-sorted ROC curve."""
    if len(curve.fpr) < 2:
        raise ValueError("need at least two points")
    order = np.argsort(curve.fpr, kind="stable")
    x, y = curve.fpr[order], curve.tpr[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def curve_fpr_at_tpr(curve: RocCurve, tpr_level: float = 0.95) -> float:
    """Smallest FPR among curve points with TPR >= level."""
    _check_level(tpr_level, "tpr_level")
    ok = curve.tpr >= tpr_level - 1e-12
    return float(curve.fpr[ok].min())


def curve_tpr_at_fpr(curve: RocCurve, fpr_level: float = 0.05) -> float:
    """Largest TPR among curve points with FPR <= level."""
    _check_level(fpr_level, "fpr_level")
    ok = curve.fpr <= fpr_level + 1e-12
    return float(curve.tpr[ok].max())
