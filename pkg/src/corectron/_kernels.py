"""Low-level dense kernels shared by the learners.

The per-round hot operations are a symmetric rank-one update of a stored
inverse and triangular substitutions against an incrementally grown
Cholesky factor.  Both exist in two interchangeable flavours:

* a numba ``@njit`` version, used by default when numba imports,
* a pure numpy/scipy version.

Set ``CORECTRON_NUMBA=0`` in the environment to force the numpy path.
``benchmarks/bench_kernels.py`` times the two side by side.  Both flavours
of every kernel are importable at all times via :data:`IMPLEMENTATIONS`.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.linalg import solve_triangular


# ---------------------------------------------------------------------------
# numpy reference implementations


def _sm_update_numpy(inv: np.ndarray, g: np.ndarray) -> float:
    """In place, replace ``inv = A^{-1}`` by ``(A + g g^T)^{-1}``.

    Returns the quadratic form ``g^T A^{-1} g`` evaluated before the
    update.  The result is re-symmetrised to stop round-off drift from
    accumulating over long update chains.
    """
    ag = inv.dot(g)
    lev = float(g.dot(ag))
    upd = np.outer(ag, ag)
    upd /= 1.0 + lev
    inv -= upd
    sym = inv + inv.T
    sym *= 0.5
    inv[:] = sym
    return lev


def _forward_solve_numpy(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L y = b`` for lower-triangular ``L``."""
    if b.shape[0] == 0:
        return np.empty(0)
    return solve_triangular(L, b, lower=True, check_finite=False)


def _backward_solve_numpy(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve ``L^T x = y`` for lower-triangular ``L``."""
    if y.shape[0] == 0:
        return np.empty(0)
    return solve_triangular(L, y, lower=True, trans=1, check_finite=False)


def _spd_solve_numpy(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L L^T x = b``."""
    return _backward_solve_numpy(L, _forward_solve_numpy(L, b))


# ---------------------------------------------------------------------------
# numba implementations

try:
    from numba import njit

    HAS_NUMBA = True

    @njit(cache=True)
    def _sm_update_numba(inv, g):  # pragma: no cover - exercised via alias
        d = inv.shape[0]
        ag = np.dot(inv, g)
        lev = np.dot(g, ag)
        denom = 1.0 + lev
        for i in range(d):
            ai = ag[i]
            for j in range(i, d):
                v = 0.5 * (inv[i, j] + inv[j, i]) - ai * ag[j] / denom
                inv[i, j] = v
                inv[j, i] = v
        return lev

    @njit(cache=True)
    def _forward_solve_numba(L, b):  # pragma: no cover
        t = b.shape[0]
        y = np.empty(t)
        for i in range(t):
            acc = b[i]
            for j in range(i):
                acc -= L[i, j] * y[j]
            y[i] = acc / L[i, i]
        return y

    @njit(cache=True)
    def _backward_solve_numba(L, y):  # pragma: no cover
        # update form: touches L row-wise, which stays contiguous on the
        # strided views handed over by the growing factor
        t = y.shape[0]
        x = y.copy()
        for i in range(t - 1, -1, -1):
            x[i] /= L[i, i]
            xi = x[i]
            for j in range(i):
                x[j] -= L[i, j] * xi
        return x

    @njit(cache=True)
    def _spd_solve_numba(L, b):  # pragma: no cover
        return _backward_solve_numba(L, _forward_solve_numba(L, b))

except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


USE_NUMBA = HAS_NUMBA and os.environ.get("CORECTRON_NUMBA", "1") != "0"
BACKEND = "numba" if USE_NUMBA else "numpy"

# Compiled loops beat LAPACK below this system size (per-call overhead
# dominates there); LAPACK's blocked kernels win above it.  Measured with
# benchmarks/bench_kernels.py.
SOLVE_CROSSOVER = 128

IMPLEMENTATIONS = {
    "numpy": {
        "sm_update": _sm_update_numpy,
        "forward_solve": _forward_solve_numpy,
        "backward_solve": _backward_solve_numpy,
        "spd_solve": _spd_solve_numpy,
    }
}
if HAS_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "sm_update": _sm_update_numba,
        "forward_solve": _forward_solve_numba,
        "backward_solve": _backward_solve_numba,
        "spd_solve": _spd_solve_numba,
    }

    def _forward_solve_hybrid(L, b):
        if b.shape[0] < SOLVE_CROSSOVER:
            return _forward_solve_numba(L, b)
        return _forward_solve_numpy(L, b)

    def _backward_solve_hybrid(L, y):
        if y.shape[0] < SOLVE_CROSSOVER:
            return _backward_solve_numba(L, y)
        return _backward_solve_numpy(L, y)

    def _spd_solve_hybrid(L, b):
        if b.shape[0] < SOLVE_CROSSOVER:
            return _spd_solve_numba(L, b)
        return _spd_solve_numpy(L, b)


if USE_NUMBA:
    sm_update = _sm_update_numba
    forward_solve = _forward_solve_hybrid
    backward_solve = _backward_solve_hybrid
    spd_solve = _spd_solve_hybrid
else:
    sm_update = _sm_update_numpy
    forward_solve = _forward_solve_numpy
    backward_solve = _backward_solve_numpy
    spd_solve = _spd_solve_numpy

_WARMED = False


def warmup() -> None:
    """Compile the active kernels on tiny inputs.

    Called once before any timed region so JIT compilation never lands
    inside a benchmark measurement.  A no-op on the numpy backend and on
    repeat calls.
    """
    global _WARMED
    if _WARMED:
        return
    inv = np.eye(3)
    sm_update(inv, np.array([1.0, 0.0, 0.5]))
    L = np.array([[2.0, 0.0], [1.0, 1.5]])
    b = np.array([1.0, 2.0])
    forward_solve(L, b)
    backward_solve(L, b)
    spd_solve(L, b)
    _WARMED = True
