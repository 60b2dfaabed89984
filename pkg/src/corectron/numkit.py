"""Dense symmetric linear-algebra primitives shared by all learners.

Covers maintenance of a positive-definite inverse under rank-one updates,
incremental Cholesky factorisation of a ridged Gram matrix, triangular
solves, projections onto norm balls in a Mahalanobis metric, and the
log-determinant / effective-dimension functionals used by the
diagnostics layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels

__all__ = [
    "DegenerateGramError",
    "SpdInverse",
    "CholFactor",
    "GramMatrix",
    "ProjectionResult",
    "sm_inverse_update",
    "chol_extend",
    "solve_spd",
    "project_ball_mahalanobis",
    "project_ellipsoid_coeff",
    "log_det_ratio",
    "effective_dimension",
]

# Feasible inputs within this multiplicative slack are returned unchanged
# and the projection is flagged trivial.
TRIVIAL_SLACK = 1e-12
# Radius tolerance of the nontrivial projection solvers, relative.
RADIUS_TOL = 1e-10
# New Cholesky pivots at or below BETA_FLOOR_REL * (rho + ridge) get one
# retry with JITTER_REL * (rho + ridge) added to the diagonal.
BETA_FLOOR_REL = 1e-12
JITTER_REL = 1e-10


class DegenerateGramError(RuntimeError):
    """Raised when a Gram extension stays non-positive after jitter."""


def _as_vector(v, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    return v


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def _require_symmetric(m: np.ndarray, what: str) -> np.ndarray:
    scale = 1.0 + (np.abs(m).max() if m.size else 0.0)
    if m.size and np.abs(m - m.T).max() > 1e-8 * scale:
        raise ValueError(f"{what} must be symmetric")
    return m


@dataclass
class SpdInverse:
    """Stored inverse of ``A = ridge * I + sum_s g_s g_s^T``.

    ``rank_one_update`` folds one more ``g g^T`` term into ``A`` using the
    rank-one inverse-update identity; the stored matrix is re-symmetrised
    on every update so the symmetry invariant survives long chains.
    """

    dim: int
    inv: np.ndarray

    @classmethod
    def from_ridge(cls, dim: int, ridge: float) -> "SpdInverse":
        if dim <= 0:
            raise ValueError("dim must be positive")
        if ridge <= 0:
            raise ValueError("ridge must be positive")
        return cls(dim=dim, inv=np.eye(dim) / ridge)

    def copy(self) -> "SpdInverse":
        return SpdInverse(self.dim, self.inv.copy())

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.inv.dot(v)

    def quad(self, v: np.ndarray) -> float:
        """Quadratic form ``v^T A^{-1} v``."""
        return float(v.dot(self.inv.dot(v)))

    def rank_one_update(self, g: np.ndarray) -> float:
        """In place, absorb ``g g^T`` into ``A``; returns ``g^T A^{-1} g``.

        The returned quadratic form is evaluated against the state before
        the update.  The denominator ``1 + g^T A^{-1} g`` is positive for
        any positive-definite state; a non-positive value means the state
        was corrupted and is reported as an error.
        """
        g = _as_vector(g, self.dim)
        lev = _kernels.sm_update(self.inv, g)
        if not lev > -1.0:
            raise ValueError("inverse update denominator not positive; state is not SPD")
        return lev


def sm_inverse_update(state: SpdInverse, g: np.ndarray) -> SpdInverse:
    """Return the inverse of ``A + g g^T`` given ``state.inv = A^{-1}``."""
    out = state.copy()
    out.rank_one_update(g)
    return out


class CholFactor:
    """Growing lower-triangular factor ``L L^T = K + ridge * I``.

    Rows are appended one at a time via :meth:`extend`; storage doubles
    as needed, so a length-T chain costs O(T^2) amortised memory traffic.
    """

    def __init__(self, capacity: int = 64):
        self._buf = np.zeros((max(capacity, 1), max(capacity, 1)))
        self.size = 0

    @property
    def L(self) -> np.ndarray:
        """View of the current factor (lower triangular, positive diagonal)."""
        return self._buf[: self.size, : self.size]

    def copy(self) -> "CholFactor":
        out = CholFactor(self._buf.shape[0])
        out._buf = self._buf.copy()
        out.size = self.size
        return out

    def _grow(self) -> None:
        cap = self._buf.shape[0]
        if self.size < cap:
            return
        new = np.zeros((2 * cap, 2 * cap))
        new[:cap, :cap] = self._buf
        self._buf = new

    def extend(self, k: np.ndarray, rho_plus_ridge: float) -> tuple[np.ndarray, float]:
        """Append the row for a new point with cross terms ``k``.

        ``rho_plus_ridge`` is the new diagonal entry of ``K + ridge * I``
        and must be positive.  Solves ``L y = k``, sets the new pivot to
        ``sqrt(rho_plus_ridge - ||y||^2)``, and appends ``[y^T, pivot]``.
        A pivot at or below the relative floor gets one diagonal-jitter
        retry before :class:`DegenerateGramError` is raised.

        Returns ``(y, pivot)``.
        """
        k = _as_vector(k, self.size)
        if rho_plus_ridge <= 0:
            raise ValueError("rho_plus_ridge must be positive")
        y = _kernels.forward_solve(self.L, k) if self.size else np.empty(0)
        pivot_sq = rho_plus_ridge - float(y.dot(y))
        floor = BETA_FLOOR_REL * rho_plus_ridge
        if pivot_sq <= floor:
            pivot_sq += JITTER_REL * rho_plus_ridge
            if pivot_sq <= floor:
                raise DegenerateGramError(
                    "Gram extension is numerically degenerate even after jitter"
                )
        pivot = float(np.sqrt(pivot_sq))
        self._grow()
        t = self.size
        self._buf[t, :t] = y
        self._buf[t, t] = pivot
        self.size = t + 1
        return y, pivot

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(L L^T) x = b``."""
        b = _as_vector(b, self.size)
        if self.size == 0:
            return np.empty(0)
        return _kernels.spd_solve(self.L, b)


def chol_extend(factor: CholFactor, k: np.ndarray, rho_plus_ridge: float) -> CholFactor:
    """Functional form of :meth:`CholFactor.extend` (input left untouched)."""
    out = factor.copy()
    out.extend(k, rho_plus_ridge)
    return out


def solve_spd(factor: CholFactor, b: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) x = b`` by forward then backward substitution."""
    return factor.solve(b)


class GramMatrix:
    """Growing symmetric matrix of pairwise residual inner products."""

    def __init__(self, capacity: int = 64):
        self._buf = np.zeros((max(capacity, 1), max(capacity, 1)))
        self.size = 0

    @property
    def entries(self) -> np.ndarray:
        return self._buf[: self.size, : self.size]

    def copy(self) -> "GramMatrix":
        out = GramMatrix(self._buf.shape[0])
        out._buf = self._buf.copy()
        out.size = self.size
        return out

    def append(self, col: np.ndarray, diag: float) -> None:
        """Add one point given its inner products with the existing ones."""
        col = _as_vector(col, self.size)
        if self.size >= self._buf.shape[0]:
            cap = self._buf.shape[0]
            new = np.zeros((2 * cap, 2 * cap))
            new[:cap, :cap] = self._buf
            self._buf = new
        t = self.size
        self._buf[t, :t] = col
        self._buf[:t, t] = col
        self._buf[t, t] = diag
        self.size = t + 1


@dataclass(frozen=True)
class ProjectionResult:
    """Output of a constrained projection.

    ``multiplier`` is the KKT multiplier of the active norm constraint
    (zero when the input was already feasible and ``trivial`` is set).
    """

    point: np.ndarray
    multiplier: float
    trivial: bool


def _radius_multiplier(num, off, slope, radius, hi):
    """Solve ``sum(num / (off + theta * slope)^2) = radius^2`` for theta >= 0.

    The left-hand side is strictly decreasing in theta, exceeds radius^2
    at theta = 0 (callers dispatch the feasible case beforehand), and the
    bracket ``[0, hi]`` is widened by doubling until it straddles the
    root.  Safeguarded bisection with Newton steps near the root.
    """
    target = radius * radius

    def value(theta):
        q = off + theta * slope
        return float(np.sum(num / (q * q)))

    lo = 0.0
    hi = max(hi, 1e-30)
    while value(hi) > target:
        hi *= 2.0
    theta = 0.5 * (lo + hi)
    for _ in range(300):
        q = off + theta * slope
        f = float(np.sum(num / (q * q)))
        err = np.sqrt(f) - radius
        if abs(err) <= RADIUS_TOL * radius:
            return theta
        if err > 0.0:
            lo = theta
        else:
            hi = theta
        # Newton on sqrt(value) - radius; fall back to bisection when the
        # step leaves the bracket.
        fp = -2.0 * float(np.sum(num * slope / (q * q * q)))
        step_ok = fp < 0.0
        if step_ok:
            cand = theta - err * (2.0 * np.sqrt(f)) / fp
            step_ok = lo < cand < hi
        theta = cand if step_ok else 0.5 * (lo + hi)
        if hi - lo <= 1e-17 * max(1.0, hi):
            return theta
    return theta


def project_ball_mahalanobis(metric, point, radius: float) -> ProjectionResult:
    """Minimise ``(w - point)^T metric (w - point)`` over ``||w||_2 <= radius``.

    Any already-feasible ``point`` (within a tiny multiplicative slack) is
    returned unchanged and flagged trivial.  Otherwise the optimum lies on
    the sphere and satisfies ``metric (w - point) + theta * w = 0`` for a
    unique multiplier ``theta > 0``, located by safeguarded root-finding
    on ``||w(theta)||`` after one eigendecomposition of ``metric``.

    Parameters
    ----------
    metric : ndarray, shape (d, d)
        Symmetric positive-definite weighting matrix.
    point : ndarray, shape (d,)
        Point to project.
    radius : float
        Euclidean ball radius, positive.
    """
    point = _as_vector(point)
    if radius <= 0:
        raise ValueError("radius must be positive")
    nrm = float(np.linalg.norm(point))
    if nrm <= radius * (1.0 + TRIVIAL_SLACK):
        return ProjectionResult(point.copy(), 0.0, True)

    metric = _require_symmetric(_as_square(metric), "metric")
    if metric.shape[0] != point.shape[0]:
        raise ValueError("metric and point dimensions disagree")
    evals, vecs = np.linalg.eigh(metric)
    if evals[0] <= 0:
        raise ValueError("metric must be positive definite")
    yt = vecs.T.dot(point)
    num = (evals * yt) ** 2
    hi = float(evals[-1]) * nrm / radius
    theta = _radius_multiplier(num, evals, 1.0, radius, hi)
    w = vecs.dot(evals * yt / (evals + theta))
    return ProjectionResult(w, theta, False)


def project_ellipsoid_coeff(metric, shape, point, radius: float) -> ProjectionResult:
    """Minimise ``(c - point)^T metric (c - point)`` over ``c^T shape c <= radius^2``.

    ``metric`` must be positive definite and ``shape`` positive
    semidefinite.  The optimum satisfies ``metric (c - point) +
    theta * shape c = 0``; substituting the Cholesky factor ``metric =
    L L^T`` turns the stationarity condition into a diagonal problem in
    the eigenbasis of ``L^{-1} shape L^{-T}``, on which the multiplier is
    found by the same safeguarded root-finding as the ball projection.
    With ``shape = I`` this reduces exactly to
    :func:`project_ball_mahalanobis`.
    """
    point = _as_vector(point)
    if radius <= 0:
        raise ValueError("radius must be positive")
    shape = _require_symmetric(_as_square(shape), "shape")
    if shape.shape[0] != point.shape[0]:
        raise ValueError("shape and point dimensions disagree")
    gval = float(point.dot(shape.dot(point)))
    if np.sqrt(max(gval, 0.0)) <= radius * (1.0 + TRIVIAL_SLACK):
        return ProjectionResult(point.copy(), 0.0, True)

    metric = _require_symmetric(_as_square(metric), "metric")
    if metric.shape != shape.shape:
        raise ValueError("metric and shape dimensions disagree")
    try:
        L = np.linalg.cholesky(metric)
    except np.linalg.LinAlgError as exc:
        raise ValueError("metric must be positive definite") from exc
    # M = L^{-1} shape L^{-T}, assembled with two triangular block solves.
    W = solve_triangular(L, shape, lower=True, check_finite=False)
    M = solve_triangular(L, W.T, lower=True, check_finite=False)
    M = 0.5 * (M + M.T)
    s, Q = np.linalg.eigh(M)
    s = np.clip(s, 0.0, None)
    b = L.T.dot(point)
    bt = Q.T.dot(b)
    num = s * bt * bt
    theta = _radius_multiplier(num, 1.0, s, radius, 1.0)
    v = Q.dot(bt / (1.0 + theta * s))
    c = solve_triangular(L, v, lower=True, trans=1, check_finite=False)
    return ProjectionResult(c, theta, False)


def _gram_entries(gram) -> np.ndarray:
    if isinstance(gram, GramMatrix):
        return gram.entries
    return _as_square(gram)


def log_det_ratio(gram, ridge: float) -> float:
    """``log det(I + K / ridge)`` for a positive-semidefinite ``K``.

    Eigenvalues that dip slightly negative (near-duplicate residuals) are
    clamped to zero before the log.
    """
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    K = _require_symmetric(_gram_entries(gram), "gram matrix")
    if K.size == 0:
        return 0.0
    evals = np.clip(np.linalg.eigvalsh(K), 0.0, None)
    return float(np.sum(np.log1p(evals / ridge)))


def effective_dimension(gram, ridge: float) -> float:
    """``trace(K (K + ridge I)^{-1})`` via the eigenvalues of ``K``."""
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    K = _require_symmetric(_gram_entries(gram), "gram matrix")
    if K.size == 0:
        return 0.0
    evals = np.clip(np.linalg.eigvalsh(K), 0.0, None)
    return float(np.sum(evals / (evals + ridge)))
