"""Choosing which detector subsets to combine.

Four strategies share one evaluation primitive (fit a combiner on the
calibration rows restricted to a subset, then measure family AUROC on a
validation ID/OOD pair):

* ``best_pairs``: every pair, ranked.
* ``sensitivity_search``: random subsets, logistic regression of "is this
  subset in the top percentile" on subset membership, then all subsets of
  the four most influential detectors.
* ``beam_search``: breadth-limited greedy growth of tuples.
* ``proxy_select``: rank by AUROC against proxy OOD data, keep the best few,
  pick among them on validation data.

Rankings sort by AUROC descending and then by the sorted name tuple, so
results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import SplitMix64
from .combiners import SCHEMA_VERSION, DetectorFamily, EcdfCombiner, VoteCombiner
from .metrics import auroc_family, default_grid, family_roc
from .scores import ID_ORIGIN, ScoreMatrix

MAX_SET_SIZE = 4
COMBINER_KINDS = ("vote", "ecdf", "copula", "centerout")
SPLIT_TAGS = ("val", "proxy", "test")


# ------------------------------------------------------------------ types


@dataclass(frozen=True, order=True)
class CandidateSet:
    """A sorted, duplicate-free tuple of 1 to 4 detector names."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(sorted(self.names))
        if not 1 <= len(names) <= MAX_SET_SIZE:
            raise ValueError(f"candidate sets hold 1..{MAX_SET_SIZE} detectors, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate detector in {names}")
        object.__setattr__(self, "names", names)

    @classmethod
    def of(cls, names) -> "CandidateSet":
        return cls(tuple(names))

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def label(self) -> str:
        return "+".join(self.names)

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class EvalRecord:
    candidate: CandidateSet
    kind: str
    auroc: float
    split: str = "val"

    def __post_init__(self):
        if self.split not in SPLIT_TAGS:
            raise ValueError(f"split tag must be one of {SPLIT_TAGS}")
        if not (0.0 <= self.auroc <= 1.0):
            raise ValueError(f"auroc {self.auroc!r} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"set": list(self.candidate.names), "kind": self.kind, "auroc": self.auroc, "split": self.split}


def rank_key(rec: EvalRecord):
    return (-rec.auroc, rec.candidate.names)


def rank_records(records) -> list[EvalRecord]:
    return sorted(records, key=rank_key)


# ------------------------------------------------------------------ evaluation


def make_combiner(kind: str, params: dict | None = None) -> DetectorFamily:
    """Unfitted combiner of the given kind; ``params`` holds its keyword options."""
    from .center_outward import CenterOutwardCombiner
    from .copulas import CopulaCombiner

    params = dict(params or {})
    kind = kind.lower()
    if kind == "vote":
        return VoteCombiner(**params)
    if kind == "ecdf":
        if params:
            raise ValueError(f"ecdf takes no parameters, got {sorted(params)}")
        return EcdfCombiner()
    if kind == "copula":
        return CopulaCombiner(**params)
    if kind == "centerout":
        return CenterOutwardCombiner(**params)
    raise ValueError(f"unknown combiner {kind!r}; choose from {COMBINER_KINDS}")


class Evaluator:
    """Fits and scores candidate sets, caching AUROC per (set, OOD split)."""

    def __init__(self, cal: ScoreMatrix, val_id: ScoreMatrix, kind: str, params: dict | None = None, grid=None):
        make_combiner(kind, params)  # fail early on bad options
        self.cal = cal
        self.val_id = val_id
        self.kind = kind.lower()
        self.params = dict(params or {})
        self.grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
        self._cache: dict = {}

    def model(self, cand: CandidateSet) -> DetectorFamily:
        return make_combiner(self.kind, self.params).fit(self.cal.select(cand.names))

    def evaluate(self, cand: CandidateSet, ood: ScoreMatrix, split: str = "val") -> EvalRecord:
        key = (cand.names, id(ood))
        if key not in self._cache:
            model = self.model(cand)
            curve = family_roc(model, self.val_id, ood, self.grid)
            self._cache[key] = min(1.0, max(0.0, auroc_family(curve)))
        return EvalRecord(cand, self.kind, self._cache[key], split)

    @property
    def n_fits(self) -> int:
        return len(self._cache)


def _names(matrix: ScoreMatrix) -> tuple[str, ...]:
    return tuple(matrix.detector_names)


def _check_inputs(cal, val_id, val_ood):
    for m, what in ((cal, "calibration"), (val_id, "validation ID"), (val_ood, "validation OOD")):
        if not isinstance(m, ScoreMatrix):
            raise TypeError(f"{what} data must be a ScoreMatrix")
    if set(_names(cal)) - set(_names(val_id)) or set(_names(cal)) - set(_names(val_ood)):
        raise ValueError("validation matrices must carry every calibration detector")


# ------------------------------------------------------------------ pairs


def best_pairs(cal, val_id, val_ood, kind: str = "ecdf", params=None, grid=None, split: str = "val") -> list[EvalRecord]:
    """Rank all C(d, 2) pairs by family AUROC."""
    _check_inputs(cal, val_id, val_ood)
    names = _names(cal)
    if len(names) < 2:
        raise ValueError(f"need at least 2 detectors for pairs, got {len(names)}")
    ev = Evaluator(cal, val_id, kind, params, grid)
    return rank_records(ev.evaluate(CandidateSet(p), val_ood, split) for p in itertools.combinations(names, 2))


def top_count(count: int, frac: float = 0.05) -> int:
    """Number of entries kept by a top-fraction cut: floor(frac * count), at least 1.

    Rounding down gives 18 survivors out of 378 pairs at 5%.
    """
    if not 0.0 < frac <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if count < 1:
        return 0
    return max(1, int(math.floor(frac * count + 1e-9)))


def top_fraction(records, frac: float = 0.05) -> list[EvalRecord]:
    ranked = rank_records(records)
    return ranked[: top_count(len(ranked), frac)]


# ------------------------------------------------------------------ logistic regression


@dataclass
class LogisticFit:
    coef: np.ndarray  # intercept first
    iterations: int
    converged: bool

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def weights(self) -> np.ndarray:
        return self.coef[1:]

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return _sigmoid(self.coef[0] + X @ self.coef[1:])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_penalized_loglik(coef, X, y, l2: float = 1e-4) -> float:
    """Log-likelihood minus (l2 / 2) * |w|², intercept unpenalised."""
    z = coef[0] + X @ coef[1:]
    ll = np.sum(y * z - np.logaddexp(0.0, z))
    return float(ll - 0.5 * l2 * np.dot(coef[1:], coef[1:]))


def logistic_regression(X, y, l2: float = 1e-4, tol: float = 1e-8, max_iter: int = 100) -> LogisticFit:
    """L2-penalised logistic regression by Newton steps (IRLS).

    Returns ``d + 1`` coefficients with the intercept first.  Iteration stops
    once the largest coefficient update falls below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (N, d) with one label per row")
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"need N >= d + 1 rows, got N = {n}, d = {d}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("labels contain a single class")
    A = np.column_stack([np.ones(n), X])
    penalty = np.full(d + 1, l2)
    penalty[0] = 0.0
    coef = np.zeros(d + 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(A @ coef)
        w = p * (1.0 - p)
        grad = A.T @ (y - p) - penalty * coef
        hess = (A * w[:, None]).T @ A + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise ValueError("singular design: logistic regression cannot be solved") from None
        if not np.all(np.isfinite(step)):
            raise ValueError("singular design: logistic regression cannot be solved")
        coef = coef + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    return LogisticFit(coef, it, converged)


# ------------------------------------------------------------------ sensitivity


@dataclass
class SensitivityReport:
    detector_names: tuple[str, ...]
    coefficients: np.ndarray  # one per detector, intercept excluded
    intercept: float
    top_detectors: tuple[str, ...]
    candidate_sets: list[CandidateSet]
    samples: list[EvalRecord]
    threshold: float
    percentile: float
    iterations: int
    converged: bool
    n_requested: int

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "n_requested": self.n_requested,
            "n_evaluated": len(self.samples),
            "threshold": self.threshold,
            "positives": int(sum(r.auroc > self.threshold for r in self.samples)),
        }


def n_subsets(d: int, max_size: int = MAX_SET_SIZE) -> int:
    return sum(math.comb(d, k) for k in range(1, min(d, max_size) + 1))


def sample_subsets(d: int, n: int, seed: int = 42, max_size: int = MAX_SET_SIZE) -> list[tuple[int, ...]]:
    """``n`` distinct column subsets: size uniform on 1..max_size, then a uniform subset.

    Duplicates are redrawn; ``n`` is capped at the number of distinct subsets.
    """
    max_size = min(max_size, d)
    n = min(n, n_subsets(d, max_size))
    rng = SplitMix64(seed)
    seen: set = set()
    out = []
    while len(out) < n:
        size = 1 + int(rng.integers(max_size, 1)[0])
        sub = tuple(sorted(int(i) for i in rng.permutation(d)[:size]))
        if sub not in seen:
            seen.add(sub)
            out.append(sub)
    return out


def sensitivity_search(
    cal, val_id, val_ood, kind: str = "ecdf", n_samples: int = 1000, percentile: float = 90.0,
    seed: int = 42, params=None, grid=None, split: str = "val",
) -> SensitivityReport:
    _check_inputs(cal, val_id, val_ood)
    names = _names(cal)
    d = len(names)
    if d < 4:
        raise ValueError(f"sensitivity search needs d >= 4, got {d}")
    if n_samples < 100:
        raise ValueError("sensitivity search needs at least 100 samples")
    if not 0.0 < percentile < 100.0:
        raise ValueError("percentile must lie in (0, 100)")
    ev = Evaluator(cal, val_id, kind, params, grid)
    subsets = sample_subsets(d, n_samples, seed)
    records = [ev.evaluate(CandidateSet(tuple(names[i] for i in s)), val_ood, split) for s in subsets]
    z = np.array([r.auroc for r in records])
    X = np.zeros((len(subsets), d))
    for row, s in enumerate(subsets):
        X[row, list(s)] = 1.0
    thr = float(np.percentile(z, percentile))
    y = (z > thr).astype(np.float64)
    fit = logistic_regression(X, y)
    w = fit.weights
    order = sorted(range(d), key=lambda i: (-w[i], names[i]))
    top = tuple(names[i] for i in order[:4])
    cands = sorted(
        (CandidateSet(c) for k in (2, 3, 4) for c in itertools.combinations(top, k)),
        key=lambda c: (c.size, c.names),
    )
    return SensitivityReport(
        names, w.copy(), fit.intercept, top, cands, records, thr, float(percentile),
        fit.iterations, fit.converged, n_samples,
    )


# ------------------------------------------------------------------ beam search


@dataclass
class BeamResult:
    best_overall: EvalRecord
    levels: list[list[EvalRecord]]  # tuples kept at each level, ranked
    evaluated: list[EvalRecord]  # distinct tuples, ranked
    n_evaluations: int  # inner-loop AUROC computations, duplicates included
    width: int
    depth: int

    @property
    def level_best(self) -> list[EvalRecord]:
        return [lvl[0] for lvl in self.levels]

    def survivors(self) -> list[CandidateSet]:
        """Kept tuples of levels 2.. plus best_overall, without repeats."""
        out = [r.candidate for lvl in self.levels[1:] for r in lvl]
        if self.best_overall.candidate not in out:
            out.insert(0, self.best_overall.candidate)
        return out


def _better(a: EvalRecord, b: EvalRecord) -> bool:
    return rank_key(a) < rank_key(b)


def beam_search(
    cal, val_id, val_ood, kind: str = "ecdf", width: int = 3, depth: int = 4, params=None, grid=None,
    split: str = "val",
) -> BeamResult:
    _check_inputs(cal, val_id, val_ood)
    names = _names(cal)
    if width < 1 or depth < 1:
        raise ValueError("width and depth must be >= 1")
    if depth > len(names):
        raise ValueError(f"depth {depth} exceeds the number of detectors {len(names)}")
    if depth > MAX_SET_SIZE:
        raise ValueError(f"depth is limited to {MAX_SET_SIZE}")
    ev = Evaluator(cal, val_id, kind, params, grid)
    seen: dict = {}

    def score(names_):
        rec = ev.evaluate(CandidateSet(names_), val_ood, split)
        seen[rec.candidate] = rec
        return rec

    singles = rank_records(score((nm,)) for nm in names)
    n_eval = len(names)
    prev = singles[:width]
    best = singles[0]
    levels = [prev]
    for _ in range(2, depth + 1):
        new: dict = {}
        for rec in prev:
            for nm in names:
                if nm in rec.candidate.names:
                    continue
                cand = score(rec.candidate.names + (nm,))
                n_eval += 1
                if _better(cand, best):
                    best = cand
                new[cand.candidate] = cand
        prev = rank_records(new.values())[:width]
        levels.append(prev)
    return BeamResult(best, levels, rank_records(seen.values()), n_eval, width, depth)


def beam_evaluation_count(d: int, width: int, depth: int) -> int:
    """Inner-loop evaluations when every level keeps ``width`` tuples."""
    return d + width * sum(d - i + 1 for i in range(2, depth + 1))


# ------------------------------------------------------------------ proxy selection


@dataclass
class ProxyResult:
    chosen: CandidateSet
    proxy_ranking: list[EvalRecord]
    val_ranking: list[EvalRecord]  # survivors only
    top_k: int


def proxy_select(candidates, cal, proxy_ood, val_id, val_ood, kind: str = "ecdf", top_k: int = 1, params=None, grid=None):
    """Rank on proxy OOD, keep ``top_k``, choose the best survivor on validation OOD.

    ``val_ood`` may be None, in which case the proxy winner is chosen.
    """
    candidates = list(dict.fromkeys(CandidateSet.of(c.names if isinstance(c, CandidateSet) else c) for c in candidates))
    if not candidates:
        raise ValueError("no candidate sets given")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not isinstance(proxy_ood, ScoreMatrix):
        raise TypeError("proxy data must be a ScoreMatrix")
    n_id = sum(1 for o in proxy_ood.origin if o == ID_ORIGIN)
    if n_id:
        raise ValueError(f"proxy OOD data contains {n_id} ID rows")
    ev = Evaluator(cal, val_id, kind, params, grid)
    proxy_rank = rank_records(ev.evaluate(c, proxy_ood, "proxy") for c in candidates)
    keep = [r.candidate for r in proxy_rank[:top_k]]
    if val_ood is None:
        return ProxyResult(keep[0], proxy_rank, [], top_k)
    val_rank = rank_records(ev.evaluate(c, val_ood, "val") for c in keep)
    return ProxyResult(val_rank[0].candidate, proxy_rank, val_rank, top_k)


# ------------------------------------------------------------------ reports


@dataclass
class SearchReport:
    strategy: str
    kind: str
    parameters: dict
    evaluated: list[EvalRecord]
    survivors: list[CandidateSet]
    chosen: CandidateSet
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "strategy": self.strategy,
            "combiner": self.kind,
            "parameters": self.parameters,
            "evaluated": [r.to_dict() for r in self.evaluated],
            "survivors": [list(c.names) for c in self.survivors],
            "chosen": list(self.chosen.names),
            **self.extra,
        }


def pareto_csv(rows) -> str:
    """``set,near_auroc,far_auroc`` table; rows are (CandidateSet, near, far)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "near_auroc", "far_auroc"])
    for cand, near, far in rows:
        w.writerow([cand.label, repr(float(near)), repr(float(far))])
    return buf.getvalue()


def pareto_front(rows) -> list:
    """Rows not dominated in (near, far); both larger-is-better."""
    rows = list(rows)
    out = []
    for i, (c, n, f) in enumerate(rows):
        dominated = any(
            (n2 >= n and f2 >= f and (n2 > n or f2 > f)) for j, (_, n2, f2) in enumerate(rows) if j != i
        )
        if not dominated:
            out.append((c, n, f))
    return out
