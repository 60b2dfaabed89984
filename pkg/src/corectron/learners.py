"""Online learners behind a shared predict/update interface.

All learners consume base-space residuals (recommended action minus
revealed action) and emit base-space utility predictions whose argmax
over the action set is the next recommendation.

* :class:`CoRectron` - projection-free second-order updates on an
  explicit finite-dimensional lift.  Its prediction is the solution of a
  ridge system against the cumulative residual and may have any norm;
  only its direction matters.
* :class:`CoRectronK` - the same learner in representer form for kernel
  lifts, maintained through an incrementally factorised Gram system.
* :class:`OGD`, :class:`ONS`, :class:`KONS` - first- and second-order
  baselines constrained to the unit ball, requiring Euclidean or
  Mahalanobis projections.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .lifting import (
    KERNEL,
    LiftSpec,
    RepresenterWeights,
    adjoint_apply,
    lift,
)
from .numkit import (
    CholFactor,
    GramMatrix,
    SpdInverse,
    project_ball_mahalanobis,
    project_ellipsoid_coeff,
)

__all__ = ["RoundDiagnostics", "CoRectron", "CoRectronK", "OGD", "ONS", "KONS"]

# Interval (in rounds) of the built-in consistency check between the
# incrementally accumulated potential and its direct recomputation.
_CROSSCHECK_EVERY = 100


class RoundDiagnostics(NamedTuple):
    """Per-round scalars recorded by the second-order learners.

    ``leverage``    quadratic form of the new residual under the inverse
                    preconditioner, before the update.
    ``alignment``   inner product of the new residual with the
                    preconditioned cumulative residual; non-positive by
                    construction because the recommendation maximised the
                    predicted utility.
    ``potential``   running quadratic form of the cumulative residual
                    under the post-update inverse preconditioner,
                    accumulated through the closed-form increment.
    ``alignment_scale``  natural scale ``1 + ||g|| * ||cumulative||`` for
                    tolerance checks on ``alignment``.
    ``projected``   True when a baseline performed a nontrivial
                    projection this round; always False for the
                    projection-free learners.

    Baselines fill the unavailable scalars with NaN.
    """

    leverage: float
    alignment: float
    potential: float
    alignment_scale: float
    projected: bool


def _baseline_diag(projected: bool) -> RoundDiagnostics:
    nan = float("nan")
    return RoundDiagnostics(nan, nan, nan, nan, projected)


def _potential_increment(lev: float, align: float) -> float:
    return (lev + 2.0 * align - align * align) / (1.0 + lev)


class _History:
    """Growable store of (context, base residual) pairs."""

    def __init__(self, context_dim: int, base_dim: int, capacity: int = 64):
        self._Z = np.zeros((capacity, context_dim))
        self._G = np.zeros((capacity, base_dim))
        self.size = 0

    @property
    def contexts(self) -> np.ndarray:
        return self._Z[: self.size]

    @property
    def residuals(self) -> np.ndarray:
        return self._G[: self.size]

    def append(self, z: np.ndarray, g: np.ndarray) -> None:
        if self.size >= self._Z.shape[0]:
            self._Z = np.vstack([self._Z, np.zeros_like(self._Z)])
            self._G = np.vstack([self._G, np.zeros_like(self._G)])
        self._Z[self.size] = z
        self._G[self.size] = g
        self.size += 1

    def kernel_column(self, kernel, z: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, float]:
        """Lifted inner products of (z, g) against the stored history.

        Returns the cross column and the diagonal entry: each entry is
        the scalar kernel value times the base dot product.
        """
        if self.size == 0:
            col = np.empty(0)
        else:
            col = kernel.column(self.contexts, z) * self.residuals.dot(g)
        rho = kernel.diag_value(z) * float(g.dot(g))
        return col, rho


class CoRectron:
    """Projection-free second-order learner on an explicit lift.

    Maintains the inverse of ``ridge * I + sum_s g_s g_s^T`` together
    with the cumulative residual, and predicts by solving the ridge
    system against it.  No norm constraint is ever enforced on the
    prediction: the downstream argmax is scale invariant.
    """

    def __init__(self, lift_spec: LiftSpec, regularizer: float):
        if lift_spec.kind == KERNEL:
            raise ValueError("use CoRectronK for kernel lifts")
        if regularizer <= 0:
            raise ValueError("regularizer must be positive")
        self.lift_spec = lift_spec
        self.regularizer = float(regularizer)
        d = lift_spec.dim
        self._inv = SpdInverse.from_ridge(d, regularizer)
        self._cum = np.zeros(d)
        self._potential = 0.0
        self._rounds = 0
        self._last_lifted: np.ndarray | None = None
        self.potential_drift = 0.0

    @property
    def rounds(self) -> int:
        return self._rounds

    @property
    def preconditioner_inverse(self) -> SpdInverse:
        return self._inv

    @property
    def cumulative_residual(self) -> np.ndarray:
        return self._cum

    def predict_lifted(self) -> np.ndarray:
        """Lifted prediction: minus the preconditioned cumulative residual."""
        return -self._inv.apply(self._cum)

    def predict(self, z=None) -> np.ndarray:
        cmap = self.lift_spec.map_for(z)
        return adjoint_apply(cmap, self.predict_lifted())

    def update(self, z, g_base) -> RoundDiagnostics:
        cmap = self.lift_spec.map_for(z)
        g = lift(cmap, g_base)
        pre = self._inv.apply(self._cum)
        align = float(g.dot(pre))
        scale = 1.0 + float(np.linalg.norm(g)) * float(np.linalg.norm(self._cum))
        lev = self._inv.rank_one_update(g)
        self._cum += g
        self._potential += _potential_increment(lev, align)
        self._rounds += 1
        self._last_lifted = g
        if self._rounds % _CROSSCHECK_EVERY == 0:
            direct = self.potential_direct()
            drift = abs(self._potential - direct) / (1.0 + abs(direct))
            self.potential_drift = max(self.potential_drift, drift)
        return RoundDiagnostics(lev, align, self._potential, scale, False)

    def potential_direct(self) -> float:
        """Quadratic form of the cumulative residual, recomputed from state."""
        return self._inv.quad(self._cum)

    def post_round_leverage(self) -> float:
        """Quadratic form of the last residual under the updated inverse."""
        if self._last_lifted is None:
            raise RuntimeError("no update has been applied yet")
        return self._inv.quad(self._last_lifted)


class CoRectronK:
    """Representer-form twin of :class:`CoRectron` for kernel lifts.

    Keeps the Cholesky factor of the ridged residual Gram matrix and the
    coefficient vector solving it against the all-ones right-hand side;
    the prediction is the negated coefficient combination of past
    residual features evaluated at the current context.
    """

    def __init__(self, lift_spec: LiftSpec, regularizer: float):
        if lift_spec.kind != KERNEL:
            raise ValueError("CoRectronK requires a kernel lift")
        if regularizer <= 0:
            raise ValueError("regularizer must be positive")
        self.lift_spec = lift_spec
        self.regularizer = float(regularizer)
        self._chol = CholFactor()
        self._coef = np.empty(0)
        self._hist = _History(lift_spec.context_dim, lift_spec.base_dim)
        self._gram_total = 0.0  # sum of all Gram entries = ||cumulative||^2
        self._potential = 0.0
        self._rounds = 0
        self.potential_drift = 0.0

    @property
    def rounds(self) -> int:
        return self._rounds

    @property
    def coefficients(self) -> np.ndarray:
        return self._coef

    @property
    def gram_factor(self) -> CholFactor:
        return self._chol

    def representer_weights(self) -> RepresenterWeights:
        return RepresenterWeights(-self._coef, self._hist.contexts, self._hist.residuals)

    def predict(self, z) -> np.ndarray:
        cmap = self.lift_spec.map_for(z)
        return adjoint_apply(cmap, self.representer_weights())

    def update(self, z, g_base) -> RoundDiagnostics:
        z = np.asarray(z, dtype=float)
        g = np.asarray(g_base, dtype=float)
        col, rho = self._hist.kernel_column(self.lift_spec.kernel, z, g)
        y, _ = self._chol.extend(col, rho + self.regularizer)
        lev = (rho - float(y.dot(y))) / self.regularizer
        align = float(self._coef.dot(col)) if self._rounds else 0.0
        scale = 1.0 + math.sqrt(max(rho, 0.0)) * math.sqrt(max(self._gram_total, 0.0))
        self._gram_total += 2.0 * float(col.sum()) + rho
        self._hist.append(z, g)
        self._rounds += 1
        self._coef = self._chol.solve(np.ones(self._rounds))
        self._potential += _potential_increment(lev, align)
        if self._rounds % _CROSSCHECK_EVERY == 0:
            direct = self.potential_direct()
            drift = abs(self._potential - direct) / (1.0 + abs(direct))
            self.potential_drift = max(self.potential_drift, drift)
        return RoundDiagnostics(lev, align, self._potential, scale, False)

    def potential_direct(self) -> float:
        """Potential from the Gram solve: ``t - ridge * sum(coefficients)``.

        Follows from pairing the ridged system solved by the coefficient
        vector with the all-ones vector.
        """
        return self._rounds - self.regularizer * float(self._coef.sum())

    def post_round_leverage(self) -> float:
        """Last diagonal entry of ``K (K + ridge I)^{-1}`` from the factor."""
        if self._rounds == 0:
            raise RuntimeError("no update has been applied yet")
        e = np.zeros(self._rounds)
        e[-1] = 1.0
        x = self._chol.solve(e)
        return 1.0 - self.regularizer * float(x[-1])


class OGD:
    """Projected online gradient descent on the unit ball."""

    def __init__(self, lift_spec: LiftSpec, step_size: float):
        if lift_spec.kind == KERNEL:
            raise ValueError("OGD runs on explicit lifts only")
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        self.lift_spec = lift_spec
        self.step_size = float(step_size)
        self._w = np.zeros(lift_spec.dim)

    @property
    def weights(self) -> np.ndarray:
        return self._w

    def predict(self, z=None) -> np.ndarray:
        cmap = self.lift_spec.map_for(z)
        return adjoint_apply(cmap, self._w)

    def update(self, z, g_base) -> RoundDiagnostics:
        cmap = self.lift_spec.map_for(z)
        g = lift(cmap, g_base)
        self._w -= self.step_size * g
        nrm = float(np.linalg.norm(self._w))
        if nrm > 1.0:
            self._w /= nrm
        return _baseline_diag(False)


class ONS:
    """Online Newton step on surrogate gradients, unit-ball domain.

    Gradients are scaled by ``surrogate_scale`` before entering the
    preconditioner; the Newton step uses the post-update preconditioner
    and its metric also weighs the Mahalanobis projection back onto the
    ball.  Rounds whose unconstrained step already lands inside the ball
    skip the projection and are not counted as projected.
    """

    def __init__(
        self,
        lift_spec: LiftSpec,
        ridge: float,
        surrogate_scale: float = 0.1,
        step_coeff: float = 0.5,
    ):
        if lift_spec.kind == KERNEL:
            raise ValueError("use KONS for kernel lifts")
        for name, val in (("ridge", ridge), ("surrogate_scale", surrogate_scale), ("step_coeff", step_coeff)):
            if val <= 0:
                raise ValueError(f"{name} must be positive")
        self.lift_spec = lift_spec
        self.ridge = float(ridge)
        self.surrogate_scale = float(surrogate_scale)
        self.step_coeff = float(step_coeff)
        d = lift_spec.dim
        self._metric = np.eye(d) * ridge
        self._inv = SpdInverse.from_ridge(d, ridge)
        self._w = np.zeros(d)

    @property
    def weights(self) -> np.ndarray:
        return self._w

    def predict(self, z=None) -> np.ndarray:
        cmap = self.lift_spec.map_for(z)
        return adjoint_apply(cmap, self._w)

    def update(self, z, g_base) -> RoundDiagnostics:
        cmap = self.lift_spec.map_for(z)
        g = self.surrogate_scale * lift(cmap, g_base)
        self._metric += np.outer(g, g)
        self._inv.rank_one_update(g)
        target = self._w - self._inv.apply(g) / self.step_coeff
        proj = project_ball_mahalanobis(self._metric, target, 1.0)
        self._w = proj.point
        return _baseline_diag(not proj.trivial)


class KONS:
    """Kernelized online Newton step in coefficient space.

    Works on the Gram matrix of lifted residual features.  The Newton
    direction comes from the ridged, surrogate-scaled Gram system; the
    iterate is then projected in that metric onto the set of coefficient
    vectors whose span element has norm at most one.
    """

    def __init__(
        self,
        lift_spec: LiftSpec,
        ridge: float,
        surrogate_scale: float = 0.1,
        step_coeff: float = 0.5,
    ):
        if lift_spec.kind != KERNEL:
            raise ValueError("KONS requires a kernel lift")
        for name, val in (("ridge", ridge), ("surrogate_scale", surrogate_scale), ("step_coeff", step_coeff)):
            if val <= 0:
                raise ValueError(f"{name} must be positive")
        self.lift_spec = lift_spec
        self.ridge = float(ridge)
        self.surrogate_scale = float(surrogate_scale)
        self.step_coeff = float(step_coeff)
        self._gram = GramMatrix()
        self._scaled = GramMatrix()  # surrogate_scale^2 * gram + ridge * I
        self._chol = CholFactor()
        self._coef = np.empty(0)
        self._hist = _History(lift_spec.context_dim, lift_spec.base_dim)
        self._rounds = 0

    @property
    def coefficients(self) -> np.ndarray:
        return self._coef

    @property
    def gram(self) -> GramMatrix:
        return self._gram

    def representer_weights(self) -> RepresenterWeights:
        return RepresenterWeights(self._coef, self._hist.contexts, self._hist.residuals)

    def predict(self, z) -> np.ndarray:
        cmap = self.lift_spec.map_for(z)
        return adjoint_apply(cmap, self.representer_weights())

    def rkhs_norm_sq(self) -> float:
        if self._rounds == 0:
            return 0.0
        c = self._coef
        return float(c.dot(self._gram.entries[: c.size, : c.size].dot(c)))

    def update(self, z, g_base) -> RoundDiagnostics:
        z = np.asarray(z, dtype=float)
        g = np.asarray(g_base, dtype=float)
        col, rho = self._hist.kernel_column(self.lift_spec.kernel, z, g)
        s2 = self.surrogate_scale**2
        self._gram.append(col, rho)
        self._scaled.append(s2 * col, s2 * rho + self.ridge)
        self._chol.extend(s2 * col, s2 * rho + self.ridge)
        self._hist.append(z, g)
        self._rounds += 1
        t = self._rounds
        e = np.zeros(t)
        e[-1] = 1.0
        q = self._chol.solve(e)
        target = np.append(self._coef, 0.0) - (self.surrogate_scale / self.step_coeff) * q
        proj = project_ellipsoid_coeff(
            self._scaled.entries, self._gram.entries, target, 1.0
        )
        self._coef = proj.point
        return _baseline_diag(not proj.trivial)
