"""The detector-family contract plus the majority-vote and empirical-CDF combiners.

A fitted combiner defines nested regions ``A_t`` (t in [0, 1]) of the score
space; a sample is declared OOD at level t when its score vector lies in
``A_t``.  All families here shrink as t grows: ``t' >= t`` implies
``A_t' ⊆ A_t``.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod

import numpy as np

from . import kernels
from .scores import ID_ORIGIN, ScoreMatrix

SCHEMA_VERSION = 1


class NotFittedError(RuntimeError):
    pass


class DetectorFamily(ABC):
    """Base class for multi-dimensional OOD detectors with a region family."""

    kind: str = ""

    def __init__(self):
        self.detector_names: tuple[str, ...] | None = None

    @property
    def is_fitted(self) -> bool:
        return self.detector_names is not None

    @property
    def d(self) -> int:
        self._check_fitted()
        return len(self.detector_names)

    def _check_fitted(self):
        if not self.is_fitted:
            raise NotFittedError(f"{type(self).__name__} is not fitted")

    @abstractmethod
    def fit(self, cal: ScoreMatrix) -> "DetectorFamily": ...

    @abstractmethod
    def member_grid(self, X, grid) -> np.ndarray:
        """Boolean (n, len(grid)) matrix: row i inside A_t for each grid t."""

    def member(self, X, t: float):
        """OOD decision at level ``t``; a single vector gives a single bool."""
        single = _is_single(X)
        out = self.member_grid(X, [t])[:, 0]
        return bool(out[0]) if single else out

    def region_rates(self, X, grid) -> np.ndarray:
        """Fraction of rows inside A_t for every t in grid."""
        return self.member_grid(X, grid).mean(axis=0)

    def _design(self, X) -> np.ndarray:
        """Score rows for this detector as an (n, d) float array."""
        self._check_fitted()
        if isinstance(X, ScoreMatrix):
            missing = [nm for nm in self.detector_names if nm not in X.detector_names]
            if missing:
                raise ValueError(f"score matrix lacks detector columns {missing}")
            return X.select(self.detector_names).values
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.d:
            raise ValueError(f"expected score vectors of dimension {self.d}, got shape {np.shape(X)}")
        return arr

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        self._check_fitted()
        doc = {"schema_version": SCHEMA_VERSION, "kind": self.kind, "detector_names": list(self.detector_names)}
        doc.update(self._state())
        return doc

    @abstractmethod
    def _state(self) -> dict: ...

    @classmethod
    @abstractmethod
    def from_dict(cls, doc: dict) -> "DetectorFamily": ...


class LevelDetector(DetectorFamily):
    """Families of the form A_t = {x : level(x) > t}."""

    @abstractmethod
    def level(self, X) -> np.ndarray: ...

    def member_grid(self, X, grid) -> np.ndarray:
        lev = self.level(X)
        grid = np.asarray(grid, dtype=np.float64)
        return lev[:, None] > grid[None, :]

    def region_rates(self, X, grid) -> np.ndarray:
        lev = np.sort(self.level(X))
        grid = np.asarray(grid, dtype=np.float64)
        return 1.0 - np.searchsorted(lev, grid, side="right") / len(lev)


def _is_single(X) -> bool:
    return not isinstance(X, ScoreMatrix) and np.ndim(X) == 1


def _calibration(cal: ScoreMatrix) -> np.ndarray:
    if not isinstance(cal, ScoreMatrix):
        raise TypeError("calibration data must be a ScoreMatrix")
    if cal.n < 1:
        raise ValueError("empty calibration set")
    non_id = sum(1 for o in cal.origin if o != ID_ORIGIN)
    if non_id:
        raise ValueError(f"calibration set contains {non_id} non-ID rows")
    return np.array(cal.values, dtype=np.float64)


# ------------------------------------------------------------------ majority vote


class VoteRule(enum.Enum):
    ALL = "all"
    ANY = "any"
    LOOSE = "loose"
    STRICT = "strict"

    @classmethod
    def parse(cls, value) -> "VoteRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown vote rule {value!r}; choose from {[r.value for r in cls]}") from None

    def decide(self, votes: np.ndarray, d: int) -> np.ndarray:
        if self is VoteRule.ALL:
            return votes == d
        if self is VoteRule.ANY:
            return votes >= 1
        if self is VoteRule.LOOSE:
            return 2 * votes >= d
        return 2 * votes > d


def quantile_index(t, m: int) -> np.ndarray:
    """Index into a sorted calibration column of the lower empirical t-quantile.

    ``ceil(t * m) - 1`` clamped to [0, m - 1]; thresholding at that order
    statistic leaves a fraction of about 1 - t of the calibration scores
    strictly above it.
    """
    t = np.asarray(t, dtype=np.float64)
    idx = np.ceil(t * m - 1e-12).astype(np.int64) - 1
    return np.clip(idx, 0, m - 1)


class VoteCombiner(DetectorFamily):
    """Majority vote over per-detector threshold decisions.

    At level t every detector is thresholded at the lower empirical t-quantile
    of its calibration scores (individual FPR about 1 - t), votes
    ``x_i > tau_i(t)`` and the rule aggregates the votes.
    """

    kind = "vote"

    def __init__(self, rule="loose"):
        super().__init__()
        self.rule = VoteRule.parse(rule)
        self.sorted_cal: np.ndarray | None = None

    def fit(self, cal: ScoreMatrix) -> "VoteCombiner":
        values = _calibration(cal)
        self.sorted_cal = np.sort(values, axis=0)
        self.detector_names = cal.detector_names
        return self

    def thresholds(self, grid) -> np.ndarray:
        """(d, len(grid)) per-detector thresholds."""
        self._check_fitted()
        idx = quantile_index(np.atleast_1d(grid), self.sorted_cal.shape[0])
        return self.sorted_cal[idx, :].T

    def votes(self, X, t: float) -> np.ndarray:
        x = self._design(X)
        return (x > self.thresholds([t])[:, 0][None, :]).astype(np.int64)

    def member_grid(self, X, grid) -> np.ndarray:
        x = self._design(X)
        tau = self.thresholds(grid)
        counts = np.zeros((x.shape[0], tau.shape[1]), dtype=np.int64)
        for i in range(self.d):
            counts += x[:, i, None] > tau[i][None, :]
        return self.rule.decide(counts, self.d)

    def _state(self):
        return {"rule": self.rule.value, "sorted_calibration": self.sorted_cal.T.tolist()}

    @classmethod
    def from_dict(cls, doc):
        obj = cls(doc["rule"])
        obj.sorted_cal = np.asarray(doc["sorted_calibration"], dtype=np.float64).T.copy()
        obj.detector_names = tuple(doc["detector_names"])
        return obj


def vote_fit(cal: ScoreMatrix, rule="loose") -> VoteCombiner:
    return VoteCombiner(rule).fit(cal)


def vote_member(model: VoteCombiner, x, t: float) -> bool:
    return model.member(np.asarray(x, dtype=np.float64).ravel(), t)


# ------------------------------------------------------------------ empirical CDF


class EcdfCombiner(LevelDetector):
    """Empirical joint CDF of the calibration scores as OOD level."""

    kind = "ecdf"

    def __init__(self):
        super().__init__()
        self.cal: np.ndarray | None = None

    def fit(self, cal: ScoreMatrix) -> "EcdfCombiner":
        self.cal = _calibration(cal)
        self.detector_names = cal.detector_names
        return self

    def level(self, X) -> np.ndarray:
        x = self._design(X)
        return kernels.dominance_counts(self.cal, x) / self.cal.shape[0]

    def _state(self):
        return {"calibration": self.cal.tolist()}

    @classmethod
    def from_dict(cls, doc):
        obj = cls()
        obj.cal = np.asarray(doc["calibration"], dtype=np.float64).reshape(-1, len(doc["detector_names"]))
        obj.detector_names = tuple(doc["detector_names"])
        return obj


def ecdf_fit(cal: ScoreMatrix) -> EcdfCombiner:
    return EcdfCombiner().fit(cal)


def ecdf_level(model: EcdfCombiner, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    out = model.level(x)
    return float(out[0]) if x.ndim == 1 else out


# ------------------------------------------------------------------ registry


def model_from_dict(doc: dict) -> DetectorFamily:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema_version {version!r}")
    from .center_outward import CenterOutwardCombiner
    from .copulas import CopulaCombiner

    classes = {c.kind: c for c in (VoteCombiner, EcdfCombiner, CopulaCombiner, CenterOutwardCombiner)}
    try:
        cls = classes[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc)

