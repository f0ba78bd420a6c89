"""Parametric joint-CDF combiner: fitted marginals composed with a copula.

The level of a score vector x is ``C(F_1(x_1), ..., F_d(x_d))``; a sample is
OOD at level t when that joint CDF value exceeds t.

Copula families
---------------
clayton  : (u^-θ + v^-θ - 1)^(-1/θ),                          θ > 0
frank    : -1/θ log(1 + (e^-θu - 1)(e^-θv - 1)/(e^-θ - 1)),   θ ≠ 0
gumbel   : exp(-((-ln u)^θ + (-ln v)^θ)^(1/θ)),               θ >= 1
plackett : (S - sqrt(S² - 4uvθ(θ-1))) / (2(θ-1)),
           S = 1 + (θ-1)(u+v),                                θ > 0, θ ≠ 1
normal   : Φ_R(Φ⁻¹(u_1), ..., Φ⁻¹(u_d)),                     any d
independent : ∏ u_i,                                          any d

Clayton, Frank and Plackett parameters are maximum-likelihood estimates found
by golden-section search on a bounded interval; Gumbel inverts Kendall's tau
(θ = 1/(1-τ)) and the Normal copula uses R_ij = sin(π τ_ij / 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import kernels
from .combiners import LevelDetector, _calibration
from .scores import ScoreMatrix

MARGINAL_FAMILIES = ("uniform", "gaussian", "beta")
COPULA_FAMILIES = ("clayton", "frank", "gumbel", "plackett", "normal", "independent")
BIVARIATE_ONLY = ("clayton", "frank", "gumbel", "plackett")

UNIFORM_WIDEN = 1e-6
PSEUDO_OBS_EPS = 1e-9
GOLDEN_TOL = 1e-8
THETA_BOUNDS = {
    "frank": (-50.0, 50.0),
    "clayton": (1e-6, 50.0),
    "plackett": (1e-6, 100.0),
}
# Plackett/Frank exclude a single independence point from their domain
_EXCLUDED = {"frank": 0.0, "plackett": 1.0}


# ------------------------------------------------------------------ marginals


@dataclass(frozen=True)
class MarginalFit:
    family: str
    params: dict

    def __post_init__(self):
        p = self.params
        if self.family == "uniform" and not p["a"] < p["b"]:
            raise ValueError("uniform marginal needs a < b")
        if self.family == "gaussian" and not p["sigma"] > 0:
            raise ValueError("gaussian marginal needs sigma > 0")
        if self.family == "beta" and not (p["alpha"] > 0 and p["beta"] > 0 and p["lo"] < p["hi"]):
            raise ValueError("beta marginal needs alpha, beta > 0 and lo < hi")
        if self.family not in MARGINAL_FAMILIES:
            raise ValueError(f"unknown marginal family {self.family!r}")


def fit_marginal(samples, family: str = "uniform") -> MarginalFit:
    """Fit a univariate distribution to ID scores.

    uniform  -> sample range, widened by 1e-6 * range on both sides
    gaussian -> sample mean and standard deviation (ddof=1)
    beta     -> method of moments on samples rescaled to the widened range
    """
    family = family.lower()
    if family not in MARGINAL_FAMILIES:
        raise ValueError(f"unknown marginal family {family!r}; choose from {MARGINAL_FAMILIES}")
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 samples to fit a marginal")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise ValueError("all samples identical: zero-range marginal")
    if family == "uniform":
        pad = UNIFORM_WIDEN * (hi - lo)
        return MarginalFit("uniform", {"a": lo - pad, "b": hi + pad})
    if family == "gaussian":
        return MarginalFit("gaussian", {"mu": float(x.mean()), "sigma": float(x.std(ddof=1))})
    pad = UNIFORM_WIDEN * (hi - lo)
    a, b = lo - pad, hi + pad
    y = (x - a) / (b - a)
    mean, var = float(y.mean()), float(y.var())
    common = mean * (1.0 - mean) / var - 1.0
    if not common > 0:
        raise ValueError("beta moment fit failed: variance too large for the support")
    return MarginalFit("beta", {"alpha": mean * common, "beta": (1.0 - mean) * common, "lo": a, "hi": b})


def marginal_cdf(fit: MarginalFit, x):
    x = np.asarray(x, dtype=np.float64)
    p = fit.params
    if fit.family == "uniform":
        out = (x - p["a"]) / (p["b"] - p["a"])
    elif fit.family == "gaussian":
        out = special.ndtr((x - p["mu"]) / p["sigma"])
    else:
        y = np.clip((x - p["lo"]) / (p["hi"] - p["lo"]), 0.0, 1.0)
        out = special.betainc(p["alpha"], p["beta"], y)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ rank correlation


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least 2 observations")
    return x, y


def kendall_tau(x, y) -> float:
    """(concordant - discordant) / (n(n-1)/2); tied pairs count for neither."""
    x, y = _pair(x, y)
    n = len(x)
    return kernels.concordance(x, y) / (n * (n - 1) / 2.0)


def spearman_rho(x, y) -> float:
    """Pearson correlation of midranks."""
    x, y = _pair(x, y)
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        raise ValueError("spearman_rho undefined for constant input")
    return float(rx @ ry) / den


def gumbel_theta_from_tau(tau: float) -> float:
    """θ = 1 / (1 - τ), clamped to the independence value 1 from below."""
    if tau >= 1.0:
        raise ValueError("Kendall tau = 1 gives an unbounded Gumbel parameter")
    return max(1.0, 1.0 / (1.0 - tau))


def normal_corr_from_tau(tau):
    return np.sin(np.pi * np.asarray(tau, dtype=np.float64) / 2.0)


def nearest_correlation(r: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale to a unit diagonal."""
    r = (r + r.T) / 2.0
    w, v = np.linalg.eigh(r)
    if w.min() > floor:
        return r
    w = np.maximum(w, floor)
    r = (v * w) @ v.T
    s = np.sqrt(np.diag(r))
    r = r / s[:, None] / s[None, :]
    np.fill_diagonal(r, 1.0)
    return r


# ------------------------------------------------------------------ copula functions


@dataclass(frozen=True)
class CopulaFit:
    family: str
    dim: int
    theta: float | None = None
    correlation: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        fam = self.family
        if fam not in COPULA_FAMILIES:
            raise ValueError(f"unknown copula family {fam!r}")
        if fam in BIVARIATE_ONLY and self.dim != 2:
            raise ValueError(f"{fam} copula is bivariate, got dimension {self.dim}")
        th = self.theta
        if fam == "clayton" and not th > 0:
            raise ValueError("clayton needs theta > 0")
        if fam == "frank" and (th is None or th == 0):
            raise ValueError("frank needs theta != 0")
        if fam == "gumbel" and not th >= 1:
            raise ValueError("gumbel needs theta >= 1")
        if fam == "plackett" and not (th > 0 and th != 1):
            raise ValueError("plackett needs theta > 0, theta != 1")
        if fam == "normal":
            r = np.asarray(self.correlation, dtype=np.float64)
            if r.shape != (self.dim, self.dim) or not np.allclose(r, r.T) or not np.allclose(np.diag(r), 1.0):
                raise ValueError("normal copula needs a symmetric unit-diagonal correlation matrix")
            if np.linalg.eigvalsh(r).min() <= 0:
                raise ValueError("normal copula correlation must be positive definite")
            object.__setattr__(self, "correlation", r)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "theta": self.theta,
            "correlation": None if self.correlation is None else self.correlation.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        corr = doc.get("correlation")
        return cls(doc["family"], int(doc["dim"]), doc.get("theta"), None if corr is None else np.asarray(corr))


def _clayton_cdf(u, v, th):
    a = -th * np.log(u)
    b = -th * np.log(v)
    s = np.logaddexp(a, b)
    # log(e^a + e^b - 1) = s + log1p(-e^-s)
    s = s + np.log1p(-np.exp(-s))
    return np.exp(-s / th)


def _frank_log_d(u, v, th):
    # for th > 0: log[expm1(th(1-u)) - e^{th(1-v)} expm1(-th u)], both terms >= 0
    return np.log(np.expm1(th * (1.0 - u)) - np.exp(th * (1.0 - v)) * np.expm1(-th * u))


def _frank_cdf(u, v, th):
    if th < 0:
        return u - _frank_cdf(u, 1.0 - v, -th)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.expm1(-th * u) * np.expm1(-th * v) / np.expm1(-th)
        direct = -np.log1p(ratio) / th
        # near ratio = -1 the direct form loses everything; use the complement
        far = 1.0 - (_frank_log_d(u, v, th) - np.log(-np.expm1(-th))) / th
    return np.where(ratio > -0.5, direct, far)


def _gumbel_cdf(u, v, th):
    x = (-np.log(u)) ** th + (-np.log(v)) ** th
    return np.exp(-(x ** (1.0 / th)))


def _plackett_cdf(u, v, th):
    # rationalised form, stable as th -> 1
    s = 1.0 + (th - 1.0) * (u + v)
    disc = np.sqrt(np.maximum(s * s - 4.0 * u * v * th * (th - 1.0), 0.0))
    return 2.0 * u * v * th / (s + disc)


def bivariate_normal_cdf(h, k, rho):
    """P(X <= h, Y <= k) for a standard bivariate normal, via Owen's T."""
    h = np.asarray(h, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    h, k = np.broadcast_arrays(h, k)
    if abs(rho) >= 1:
        raise ValueError("|rho| must be < 1")
    sq = math.sqrt(1.0 - rho * rho)
    out = np.empty(h.shape)
    both0 = (h == 0) & (k == 0)
    out[both0] = 0.25 + math.asin(rho) / (2.0 * math.pi)
    rest = ~both0
    hh, kk = h[rest], k[rest]
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = np.where(hh == 0, np.copysign(np.inf, kk - rho * hh), (kk - rho * hh) / (hh * sq))
        ak = np.where(kk == 0, np.copysign(np.inf, hh - rho * kk), (hh - rho * kk) / (kk * sq))
    beta = np.where((hh * kk > 0) | ((hh * kk == 0) & (hh + kk >= 0)), 0.0, 0.5)
    val = 0.5 * (special.ndtr(hh) + special.ndtr(kk)) - special.owens_t(hh, ah) - special.owens_t(kk, ak) - beta
    out[rest] = val
    return np.clip(out, 0.0, 1.0)


def mvn_cdf_qmc(z, corr, n_points: int = 2**14, seed: int = 0) -> np.ndarray:
    """P(X <= z) for X ~ N(0, corr), by Genz's separation of variables.

    Integrates over a fixed scrambled Sobol point set, so results are
    reproducible; absolute error is about 1e-5 at the default size.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    d = z.shape[1]
    chol = np.linalg.cholesky(corr)
    w = stats.qmc.Sobol(d=max(d - 1, 1), scramble=True, seed=seed).random(n_points)
    out = np.empty(z.shape[0])
    for r, b in enumerate(z):
        e = special.ndtr(b[0] / chol[0, 0])
        f = np.full(n_points, e)
        y = np.zeros((n_points, d))
        for i in range(1, d):
            y[:, i - 1] = special.ndtri(np.clip(w[:, i - 1] * e, 1e-300, 1.0 - 1e-16))
            e = special.ndtr((b[i] - y[:, :i] @ chol[i, :i]) / chol[i, i])
            f = f * e
        out[r] = f.mean()
    return out


def _normal_cdf(u, corr):
    z = special.ndtri(u)
    if u.shape[1] == 2:
        return bivariate_normal_cdf(z[:, 0], z[:, 1], corr[0, 1])
    return mvn_cdf_qmc(z, corr)


_BIVARIATE_CDF = {"clayton": _clayton_cdf, "frank": _frank_cdf, "gumbel": _gumbel_cdf, "plackett": _plackett_cdf}


def copula_cdf(fit: CopulaFit, u):
    """Evaluate the copula at a point (1-D) or at each row of an (n, d) array.

    Boundary values are exact: any zero coordinate gives 0, coordinates equal to
    one are marginalised out.
    """
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != fit.dim:
        raise ValueError(f"expected points of dimension {fit.dim}, got {u.shape[1]}")
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise ValueError("copula arguments must lie in [0, 1]")
    out = np.empty(u.shape[0])
    zero = np.any(u == 0, axis=1)
    ones = u == 1
    n_free = fit.dim - ones.sum(axis=1)
    out[zero] = 0.0
    done = zero.copy()

    corner = ~done & (n_free == 0)
    out[corner] = 1.0
    done |= corner
    margin = ~done & (n_free == 1)
    if margin.any():
        vals = np.where(ones[margin], 1.0, u[margin])
        out[margin] = vals.min(axis=1)
    done |= margin

    if fit.family == "independent":
        rest = ~done
        out[rest] = np.prod(u[rest], axis=1)
    elif fit.family == "normal":
        # rows with some ones: evaluate the sub-copula on the free coordinates
        rest = np.flatnonzero(~done)
        patterns: dict[tuple, list[int]] = {}
        for i in rest:
            patterns.setdefault(tuple(np.flatnonzero(~ones[i])), []).append(i)
        for free, rows in patterns.items():
            free = list(free)
            sub = fit.correlation[np.ix_(free, free)]
            out[rows] = _normal_cdf(u[np.ix_(rows, free)], sub)
    else:
        rest = ~done
        out[rest] = _BIVARIATE_CDF[fit.family](u[rest, 0], u[rest, 1], fit.theta)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if single else out


def copula_logpdf(family: str, theta: float, u, v):
    """Log density of a bivariate copula at interior points."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    th = float(theta)
    if family == "independent":
        return np.zeros(np.broadcast(u, v).shape)
    if family == "clayton":
        lu, lv = np.log(u), np.log(v)
        s = np.logaddexp(-th * lu, -th * lv)
        s = s + np.log1p(-np.exp(-s))
        return math.log1p(th) - (1.0 + th) * (lu + lv) - (2.0 + 1.0 / th) * s
    if family == "frank":
        if th == 0:
            return np.zeros(np.broadcast(u, v).shape)
        if th < 0:
            th, v = -th, 1.0 - v
        return math.log(-th * math.expm1(-th)) - th * (u + v) + 2.0 * th - 2.0 * _frank_log_d(u, v, th)
    if family == "plackett":
        s = 1.0 + (th - 1.0) * (u + v)
        disc = s * s - 4.0 * u * v * th * (th - 1.0)
        return math.log(th) + np.log1p((th - 1.0) * (u + v - 2.0 * u * v)) - 1.5 * np.log(disc)
    if family == "gumbel":
        x, y = -np.log(u), -np.log(v)
        s = x**th + y**th
        a = s ** (1.0 / th)
        return (
            -a
            - np.log(u)
            - np.log(v)
            + (th - 1.0) * (np.log(x) + np.log(y))
            + (1.0 / th - 2.0) * np.log(s)
            + np.log(a + th - 1.0)
        )
    raise ValueError(f"no bivariate density for family {family!r}")


def copula_loglik(family: str, theta: float, u: np.ndarray) -> float:
    return float(np.sum(copula_logpdf(family, theta, u[:, 0], u[:, 1])))


def golden_section_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL, max_iter: int = 500):
    """Maximise a unimodal function on [lo, hi] by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    # compare against the endpoints so boundary optima are not lost
    best = max(((f(x), x), (f(lo), lo), (f(hi), hi)), key=lambda p: p[0])
    return best[1]


def clamp_pseudo_obs(u) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=np.float64), PSEUDO_OBS_EPS, 1.0 - PSEUDO_OBS_EPS)


def fit_copula(u, family: str) -> CopulaFit:
    """Fit a copula family to pseudo-observations in [0, 1]^d."""
    family = family.lower()
    if family not in COPULA_FAMILIES:
        raise ValueError(f"unknown copula family {family!r}; choose from {COPULA_FAMILIES}")
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    m, d = u.shape
    if family in BIVARIATE_ONLY and d != 2:
        raise ValueError(f"unsupported (family, d) pair: {family} needs d = 2, got d = {d}")
    if family == "independent":
        return CopulaFit("independent", d)
    if m < 2:
        raise ValueError("need at least 2 observations to fit a copula")
    u = clamp_pseudo_obs(u)
    if family == "gumbel":
        return CopulaFit("gumbel", 2, gumbel_theta_from_tau(kendall_tau(u[:, 0], u[:, 1])))
    if family == "normal":
        r = np.eye(d)
        for i in range(d):
            for j in range(i + 1, d):
                r[i, j] = r[j, i] = float(normal_corr_from_tau(kendall_tau(u[:, i], u[:, j])))
        return CopulaFit("normal", d, correlation=nearest_correlation(r))
    lo, hi = THETA_BOUNDS[family]
    theta = golden_section_max(lambda th: copula_loglik(family, th, u), lo, hi)
    bad = _EXCLUDED.get(family)
    if bad is not None and abs(theta - bad) < 1e-9:
        theta = bad + 1e-9
    return CopulaFit(family, 2, float(theta))


# ------------------------------------------------------------------ combiner


class CopulaCombiner(LevelDetector):
    """Joint CDF from fitted marginals and a copula.

    ``copula=None`` selects Frank for pairs and the independent copula
    otherwise; a single score reduces to its marginal CDF.
    """

    kind = "copula"

    def __init__(self, marginal: str = "uniform", copula: str | None = None):
        super().__init__()
        self.marginal_family = marginal.lower()
        self.copula_family = None if copula is None else copula.lower()
        self.marginals: list[MarginalFit] | None = None
        self.copula: CopulaFit | None = None

    def fit(self, cal: ScoreMatrix) -> "CopulaCombiner":
        values = _calibration(cal)
        d = values.shape[1]
        family = self.copula_family or ("frank" if d == 2 else "independent")
        if d == 1:
            family = "independent"
        marginals = [fit_marginal(values[:, i], self.marginal_family) for i in range(d)]
        u = np.column_stack([marginal_cdf(mf, values[:, i]) for i, mf in enumerate(marginals)])
        self.copula = fit_copula(u, family)
        self.marginals = marginals
        self.detector_names = cal.detector_names
        return self

    def transform(self, X) -> np.ndarray:
        x = self._design(X)
        return np.column_stack([marginal_cdf(mf, x[:, i]) for i, mf in enumerate(self.marginals)])

    def level(self, X) -> np.ndarray:
        return np.atleast_1d(copula_cdf(self.copula, self.transform(X)))

    def _state(self):
        return {
            "marginal_family": self.marginal_family,
            "copula_family": self.copula_family,
            "marginals": [{"family": m.family, "params": dict(m.params)} for m in self.marginals],
            "copula": self.copula.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        obj = cls(doc["marginal_family"], doc.get("copula_family"))
        obj.marginals = [MarginalFit(m["family"], dict(m["params"])) for m in doc["marginals"]]
        obj.copula = CopulaFit.from_dict(doc["copula"])
        obj.detector_names = tuple(doc["detector_names"])
        if len(obj.marginals) != obj.copula.dim or obj.copula.dim != len(obj.detector_names):
            raise ValueError("marginal count must equal copula dimension")
        return obj


def copula_combiner_fit(cal: ScoreMatrix, marginal_family: str = "uniform", copula_family: str | None = None):
    return CopulaCombiner(marginal_family, copula_family).fit(cal)

