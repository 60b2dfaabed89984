"""Simulated contextual m-out-of-n recommendation world.

Provides the scaled top-m action set with its exact linear-optimization
oracle, context sampling on the unit ball, linear / RBF / fixed hidden
utility models normalised to unit strength, and three feedback channels:
exact argmax actions, rank-m one-swap corruption, and argmax under
relative Gaussian score noise.

All randomness flows through counter-based streams keyed by (seed, role)
so that every algorithm sees the identical round sequence for a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lifting import KernelSpec

__all__ = [
    "ActionSetSpec",
    "LinearUtility",
    "RbfUtility",
    "FixedUtility",
    "UtilitySpec",
    "FeedbackModel",
    "Environment",
    "rng_stream",
    "sample_context",
    "top_m_oracle",
    "utility_eval",
    "reveal_action",
    "suboptimality",
    "build_utility_model",
]

ROLE_CONTEXTS = 0
ROLE_MODEL = 1
ROLE_FEEDBACK = 2


def rng_stream(seed: int, role: int) -> np.random.Generator:
    """Independent counter-based generator for one (seed, role) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(role),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ActionSetSpec:
    """Choose m of n items; selected coordinates carry ``scale``.

    The default scale makes the set's Euclidean diameter exactly one,
    since two selections differ in at most ``min(m, n - m)`` swapped
    items of two coordinates each.
    """

    n: int
    m: int
    scale: float

    def __post_init__(self):
        if not (0 < self.m <= self.n):
            raise ValueError("need 0 < m <= n")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        span = min(self.m, self.n - self.m)
        if span and self.scale * math.sqrt(2.0 * span) > 1.0 + 1e-12:
            raise ValueError("scale too large: action-set diameter exceeds 1")

    @classmethod
    def top_m(cls, n: int, m: int) -> "ActionSetSpec":
        span = min(m, n - m)
        scale = 1.0 / math.sqrt(2.0 * span) if span else 1.0
        return cls(n=n, m=m, scale=scale)

    @property
    def diameter(self) -> float:
        return self.scale * math.sqrt(2.0 * min(self.m, self.n - self.m))


def sample_context(rng: np.random.Generator, p: int) -> np.ndarray:
    """Standard normal draw, rescaled onto the unit ball when outside it."""
    z = rng.standard_normal(p)
    nrm = float(np.linalg.norm(z))
    if nrm > 1.0:
        z /= nrm
    return z


def top_m_oracle(w: np.ndarray, spec: ActionSetSpec) -> np.ndarray:
    """Exact argmax over the action set; ties go to the lowest index."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.n,):
        raise ValueError("score vector has wrong dimension")
    order = np.argsort(-w, kind="stable")
    x = np.zeros(spec.n)
    x[order[: spec.m]] = spec.scale
    return x


@dataclass(frozen=True)
class LinearUtility:
    """Hidden utility ``u(z) = W z`` with unit Frobenius norm."""

    weights: np.ndarray  # (n, p)


@dataclass(frozen=True)
class RbfUtility:
    """Hidden utility as an RBF combination with unit function norm."""

    centers: np.ndarray  # (J, p)
    coeffs: np.ndarray  # (J, n)
    bandwidth: float


@dataclass(frozen=True)
class FixedUtility:
    """Context-independent hidden utility with unit Euclidean norm."""

    vector: np.ndarray  # (n,)


@dataclass(frozen=True)
class UtilitySpec:
    """Recipe for drawing a hidden utility model."""

    kind: str  # "fixed" | "linear" | "rbf"
    context_dim: int = 0
    centers: int = 16
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "linear", "rbf"):
            raise ValueError(f"unknown utility kind: {self.kind!r}")
        if self.kind in ("linear", "rbf") and self.context_dim <= 0:
            raise ValueError("contextual utilities need a positive context dimension")
        if self.kind == "rbf":
            if self.centers < 1:
                raise ValueError("need at least one center")
            if self.bandwidth <= 0:
                raise ValueError("bandwidth must be positive")


def build_utility_model(rng: np.random.Generator, spec: UtilitySpec, n: int):
    """Draw a hidden utility model of unit strength.

    Linear weights and fixed vectors are standard normal followed by norm
    division (redrawn in the measure-zero event of an exactly zero draw).
    RBF centers are standard normal projected onto the unit ball so they
    live where contexts do; coefficients are standard normal rescaled by
    the square root of the kernel quadratic form, which sets the function
    norm to one.
    """
    if spec.kind == "fixed":
        while True:
            v = rng.standard_normal(n)
            nrm = float(np.linalg.norm(v))
            if nrm > 0:
                return FixedUtility(v / nrm)
    if spec.kind == "linear":
        while True:
            W = rng.standard_normal((n, spec.context_dim))
            nrm = float(np.linalg.norm(W))
            if nrm > 0:
                return LinearUtility(W / nrm)
    kernel = KernelSpec.rbf(spec.bandwidth)
    centers = rng.standard_normal((spec.centers, spec.context_dim))
    norms = np.linalg.norm(centers, axis=1)
    over = norms > 1.0
    centers[over] /= norms[over, None]
    while True:
        raw = rng.standard_normal((spec.centers, n))
        kmat = np.array(
            [[kernel.value(ci, cj) for cj in centers] for ci in centers]
        )
        sq = float(np.einsum("in,ij,jn->", raw, kmat, raw))
        if sq > 0:
            return RbfUtility(centers, raw / math.sqrt(sq), spec.bandwidth)


def utility_eval(model, z) -> np.ndarray:
    """Base-space utility vector for one context."""
    if isinstance(model, FixedUtility):
        return model.vector.copy()
    z = np.asarray(z, dtype=float)
    if isinstance(model, LinearUtility):
        return model.weights.dot(z)
    if isinstance(model, RbfUtility):
        k = KernelSpec.rbf(model.bandwidth).column(model.centers, z)
        return k.dot(model.coeffs)
    raise TypeError(f"unknown utility model: {type(model).__name__}")


@dataclass(frozen=True)
class FeedbackModel:
    """How the revealed action relates to the hidden utility's argmax."""

    kind: str  # "optimal" | "one_swap" | "score_perturb"
    alpha: float = 0.0
    xi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("optimal", "one_swap", "score_perturb"):
            raise ValueError(f"unknown feedback kind: {self.kind!r}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.xi < 0.0:
            raise ValueError("xi must be nonnegative")

    @classmethod
    def optimal(cls) -> "FeedbackModel":
        return cls("optimal")

    @classmethod
    def one_swap(cls, alpha: float) -> "FeedbackModel":
        return cls("one_swap", alpha=float(alpha))

    @classmethod
    def score_perturb(cls, xi: float) -> "FeedbackModel":
        return cls("score_perturb", xi=float(xi))


def suboptimality(u: np.ndarray, x_base: np.ndarray, spec: ActionSetSpec) -> float:
    """Utility gap of a feasible action to the best action under ``u``."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x_base, dtype=float)
    sel = np.flatnonzero(np.abs(x) > 0.5 * spec.scale)
    rest = np.setdiff1d(np.arange(spec.n), sel, assume_unique=True)
    feasible = (
        x.shape == (spec.n,)
        and sel.size == spec.m
        and np.allclose(x[sel], spec.scale, rtol=1e-9, atol=0.0)
        and (rest.size == 0 or np.all(x[rest] == 0.0))
    )
    if not feasible:
        raise ValueError("action is not a feasible m-item selection")
    best = top_m_oracle(u, spec)
    return float(u.dot(best) - u.dot(x))


def reveal_action(
    model: FeedbackModel,
    u: np.ndarray,
    spec: ActionSetSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Draw the revealed action and its utility gap for one round.

    One-swap: with probability alpha the m-th ranked item of the optimal
    selection is replaced by the (m+1)-th ranked item, costing exactly
    the scaled score difference of the two.  Score-perturb: the argmax is
    taken under the utility plus Gaussian noise of relative size xi.
    Both channels consume their random draws every round, so the stream
    position never depends on the noise parameters.
    """
    u = np.asarray(u, dtype=float)
    if model.kind == "optimal":
        return top_m_oracle(u, spec), 0.0
    if model.kind == "one_swap":
        coin = float(rng.random())
        x = top_m_oracle(u, spec)
        if coin < model.alpha and spec.m < spec.n:
            ranked = np.argsort(-u, kind="stable")
            out_item = ranked[spec.m - 1]
            in_item = ranked[spec.m]
            x[out_item] = 0.0
            x[in_item] = spec.scale
            return x, spec.scale * float(u[out_item] - u[in_item])
        return x, 0.0
    noise = rng.standard_normal(spec.n)
    perturbed = u + model.xi * float(np.linalg.norm(u)) * noise
    x = top_m_oracle(perturbed, spec)
    return x, suboptimality(u, x, spec)


class Environment:
    """Frozen round sequence for one (specification, seed) pair.

    The hidden model, contexts, revealed actions, and suboptimality gaps
    are drawn up front from separate (seed, role) streams, so repeated
    construction with the same arguments replays identical rounds and
    different learners can be run against the same world.
    """

    def __init__(
        self,
        actions: ActionSetSpec,
        utility: UtilitySpec,
        feedback: FeedbackModel,
        horizon: int,
        seed: int,
    ):
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        self.actions = actions
        self.utility_spec = utility
        self.feedback = feedback
        self.horizon = int(horizon)
        self.seed = int(seed)
        self.model = build_utility_model(rng_stream(seed, ROLE_MODEL), utility, actions.n)

        p = max(utility.context_dim, 1)
        rng_ctx = rng_stream(seed, ROLE_CONTEXTS)
        self.contexts = np.empty((horizon, p))
        for t in range(horizon):
            self.contexts[t] = sample_context(rng_ctx, p)

        self.utilities = np.empty((horizon, actions.n))
        for t in range(horizon):
            self.utilities[t] = utility_eval(self.model, self.contexts[t])

        rng_fb = rng_stream(seed, ROLE_FEEDBACK)
        self.revealed = np.empty((horizon, actions.n))
        self.subopt = np.empty(horizon)
        for t in range(horizon):
            self.revealed[t], self.subopt[t] = reveal_action(
                feedback, self.utilities[t], actions, rng_fb
            )

    @property
    def model_kind(self) -> str:
        return {"fixed": "noncontextual", "linear": "linear", "rbf": "kernel"}[
            self.utility_spec.kind
        ]

    def round(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        """Context, hidden utility, revealed action, and gap for round t."""
        return (
            self.contexts[t],
            self.utilities[t],
            self.revealed[t],
            float(self.subopt[t]),
        )

    def trace_constants(self) -> dict:
        """Problem constants entering the analysis-certificate bounds."""
        return {
            "bound_payoff": 1.0,
            "diameter": self.actions.diameter,
            "context_bound": 1.0,
            "kernel_bound": 1.0,
            "comparator_norm": 1.0,
        }
