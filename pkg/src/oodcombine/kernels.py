"""Kernel backend selection.

The compiled extension ``oodcombine._kernels`` is used when it was built;
otherwise (or when ``OODCOMBINE_PURE_PYTHON=1`` is set) the numpy versions in
``_kernels_py`` are used.  Both expose the same four functions with identical
semantics.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"

if os.environ.get("OODCOMBINE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def dominance_counts(cal, query, impl=None) -> np.ndarray:
    return (impl or _impl).dominance_counts(_c(cal), _c(query))


def knn_mean(ref, values, query, k: int, impl=None) -> np.ndarray:
    return (impl or _impl).knn_mean(_c(ref), _c(values), _c(query), int(k))


def gibbs_kernel(cost, alpha, beta, eps: float, out=None, impl=None) -> np.ndarray:
    cost = _c(cost)
    if out is None:
        out = np.empty_like(cost)
    return (impl or _impl).gibbs_kernel(cost, _c(alpha), _c(beta), float(eps), out)


def concordance(x, y, impl=None) -> int:
    return int((impl or _impl).concordance(_c(x), _c(y)))


def available_backends() -> dict:
    """Mapping backend name -> implementation module (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        out["cython"] = _compiled
    except ImportError:
        pass
    return out
