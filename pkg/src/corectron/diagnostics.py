"""Numerical certificates over recorded run traces.

Each certificate compares two scalars derived from a trace of the
projection-free second-order learner and holds when the left-hand side
does not exceed the right-hand side beyond a stated tolerance.  Identity
checks are encoded as an absolute deviation compared against zero.  The
checks are pure functions of the trace, so one recorded run feeds the
whole battery.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numkit import effective_dimension, log_det_ratio

__all__ = [
    "Certificate",
    "TraceSummary",
    "check_sign_condition",
    "check_increment_identity",
    "check_post_leverage_identity",
    "check_cei",
    "check_epl",
    "check_main_bound",
    "check_self_bounding",
    "check_robust_bound",
    "check_instantiated_bound",
    "check_potential_crosscheck",
    "standard_certificates",
]

# Default relative tolerance of inequality certificates, scaled by 1+|rhs|.
DEFAULT_REL_TOL = 1e-6


@dataclass(frozen=True)
class Certificate:
    """One verified inequality: holds iff ``rhs - lhs >= -tolerance``."""

    name: str
    lhs: float
    rhs: float
    tolerance: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.slack >= -self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tolerance": self.tolerance,
            "slack": self.slack,
            "holds": self.holds,
        }


def _cert(name: str, lhs: float, rhs: float, rel: float = DEFAULT_REL_TOL) -> Certificate:
    return Certificate(name, float(lhs), float(rhs), rel * (1.0 + abs(float(rhs))))


@dataclass
class TraceSummary:
    """Per-round diagnostics and problem constants from one episode.

    ``regret`` holds the per-round utility gaps of the revealed action
    over the recommendation; ``subopt`` the revealed action's own gap to
    the argmax.  The leverage/alignment/potential columns come from the
    learner; ``potential_direct`` and ``post_leverage`` are optional
    recomputations captured outside the learner's hot path.  ``gram`` is
    the residual Gram matrix when the horizon fits under the storage cap.
    """

    algorithm: str
    model_kind: str  # "noncontextual" | "linear" | "kernel"
    regularizer: float
    horizon: int
    base_dim: int
    context_dim: int
    bound_payoff: float
    diameter: float
    context_bound: float
    kernel_bound: float
    comparator_norm: float
    leverage: np.ndarray
    alignment: np.ndarray
    alignment_scale: np.ndarray
    potential: np.ndarray
    regret: np.ndarray
    subopt: np.ndarray
    projected: np.ndarray
    final_potential_direct: float
    potential_direct: np.ndarray | None = None
    post_leverage: np.ndarray | None = None
    gram: np.ndarray | None = None
    gram_capped: bool = False
    residual_regret: float | None = None
    # False when the hidden utility is not representable in the learner's
    # lifted space (reference runs under model mismatch); the
    # comparator-dependent bounds are then not applicable.
    comparator_in_span: bool = True
    extras: dict = field(default_factory=dict)

    # -- derived quantities -------------------------------------------------

    def total_regret(self) -> float:
        return float(self.regret.sum())

    def total_subopt(self) -> float:
        return float(self.subopt.sum())

    def logdet_from_leverage(self) -> float:
        """Log-determinant of the ridged Gram system via the exact
        product identity over per-round leverages."""
        return float(np.sum(np.log1p(self.leverage)))

    def comparator_metric_norm(self) -> float:
        """Norm of the hidden utility under the final preconditioner.

        Expands to the ridge times the comparator norm plus the summed
        squared per-round regrets, because each residual's inner product
        with the hidden utility is minus that round's regret.
        """
        return math.sqrt(
            self.regularizer * self.comparator_norm**2 + float(np.sum(self.regret**2))
        )

    # -- serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "algorithm": self.algorithm,
            "model_kind": self.model_kind,
            "regularizer": self.regularizer,
            "horizon": self.horizon,
            "base_dim": self.base_dim,
            "context_dim": self.context_dim,
            "bound_payoff": self.bound_payoff,
            "diameter": self.diameter,
            "context_bound": self.context_bound,
            "kernel_bound": self.kernel_bound,
            "comparator_norm": self.comparator_norm,
            "leverage": arr(self.leverage),
            "alignment": arr(self.alignment),
            "alignment_scale": arr(self.alignment_scale),
            "potential": arr(self.potential),
            "regret": arr(self.regret),
            "subopt": arr(self.subopt),
            "projected": arr(self.projected.astype(int)),
            "final_potential_direct": self.final_potential_direct,
            "potential_direct": arr(self.potential_direct),
            "post_leverage": arr(self.post_leverage),
            "gram": arr(self.gram),
            "gram_capped": self.gram_capped,
            "residual_regret": self.residual_regret,
            "comparator_in_span": self.comparator_in_span,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceSummary":
        def arr(x):
            return None if x is None else np.asarray(x, dtype=float)

        return cls(
            algorithm=d["algorithm"],
            model_kind=d["model_kind"],
            regularizer=d["regularizer"],
            horizon=d["horizon"],
            base_dim=d["base_dim"],
            context_dim=d["context_dim"],
            bound_payoff=d["bound_payoff"],
            diameter=d["diameter"],
            context_bound=d["context_bound"],
            kernel_bound=d["kernel_bound"],
            comparator_norm=d["comparator_norm"],
            leverage=arr(d["leverage"]),
            alignment=arr(d["alignment"]),
            alignment_scale=arr(d["alignment_scale"]),
            potential=arr(d["potential"]),
            regret=arr(d["regret"]),
            subopt=arr(d["subopt"]),
            projected=np.asarray(d["projected"], dtype=bool),
            final_potential_direct=d["final_potential_direct"],
            potential_direct=arr(d.get("potential_direct")),
            post_leverage=arr(d.get("post_leverage")),
            gram=arr(d.get("gram")),
            gram_capped=d.get("gram_capped", False),
            residual_regret=d.get("residual_regret"),
            comparator_in_span=d.get("comparator_in_span", True),
            extras=d.get("extras", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TraceSummary":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# individual checks


def check_sign_condition(trace: TraceSummary) -> Certificate:
    """Every round's alignment is nonpositive up to its natural scale.

    This is the optimality of the recommendation for the predicted
    utility and must hold under any feedback channel.
    """
    if trace.horizon == 0:
        return Certificate("sign_condition", 0.0, 0.0, 0.0)
    worst = float(np.max(trace.alignment - 1e-9 * trace.alignment_scale))
    return Certificate("sign_condition", worst, 0.0, 0.0)


def check_increment_identity(trace: TraceSummary) -> Certificate:
    """Directly recomputed potential steps match the closed-form increment."""
    if trace.horizon == 0:
        return Certificate("potential_increment", 0.0, 0.0, 1e-8)
    if trace.potential_direct is None:
        raise ValueError("trace has no per-round direct potential")
    lev, align = trace.leverage, trace.alignment
    expected = (lev + 2.0 * align - align**2) / (1.0 + lev)
    steps = np.diff(np.concatenate([[0.0], trace.potential_direct]))
    err = float(np.max(np.abs(steps - expected) / (1.0 + np.abs(expected))))
    return Certificate("potential_increment", err, 0.0, 1e-8)


def check_post_leverage_identity(trace: TraceSummary) -> Certificate:
    """Post-update leverage equals ``lev / (1 + lev)`` of the pre-update one."""
    if trace.horizon == 0:
        return Certificate("leverage_update_identity", 0.0, 0.0, 1e-8)
    if trace.post_leverage is None:
        raise ValueError("trace has no post-update leverage record")
    expected = trace.leverage / (1.0 + trace.leverage)
    err = float(np.max(np.abs(trace.post_leverage - expected) / (1.0 + np.abs(expected))))
    return Certificate("leverage_update_identity", err, 0.0, 1e-8)


def check_cei(trace: TraceSummary) -> Certificate:
    """Final potential is at most the summed post-update leverages."""
    rhs = float(np.sum(trace.leverage / (1.0 + trace.leverage))) if trace.horizon else 0.0
    lhs = trace.final_potential_direct if trace.horizon else 0.0
    return _cert("cumulative_potential_bound", lhs, rhs)


def check_epl(trace: TraceSummary, ridge: float | None = None) -> list[Certificate]:
    """Summed leverages against the Gram log-determinant.

    Returns the elliptical-potential inequality plus the exact identity
    tying the per-round leverage product to the determinant of the
    ridged Gram matrix, evaluated in the log domain.
    """
    if trace.horizon == 0:
        return [
            Certificate("elliptical_potential", 0.0, 0.0, DEFAULT_REL_TOL),
            Certificate("logdet_product_identity", 0.0, 0.0, 1e-6),
        ]
    if trace.gram is None:
        raise ValueError("trace has no stored Gram matrix")
    lam = trace.regularizer if ridge is None else ridge
    h_eig = log_det_ratio(trace.gram, lam)
    lhs = float(np.sum(trace.leverage / (1.0 + trace.leverage)))
    ident_err = abs(trace.logdet_from_leverage() - h_eig)
    return [
        _cert("elliptical_potential", lhs, h_eig),
        Certificate("logdet_product_identity", ident_err, 0.0, 1e-6),
    ]


def check_main_bound(trace: TraceSummary) -> Certificate:
    """Total regret against the comparator-norm / log-determinant product.

    Valid under any feedback channel; the log-determinant enters through
    the exact leverage-product identity so the check runs without the
    stored Gram matrix.
    """
    if trace.horizon == 0:
        return Certificate("main_regret_bound", 0.0, 0.0, DEFAULT_REL_TOL)
    rhs = trace.comparator_metric_norm() * math.sqrt(trace.logdet_from_leverage())
    return _cert("main_regret_bound", trace.total_regret(), rhs)


def check_self_bounding(trace: TraceSummary) -> Certificate:
    """Squared per-round regrets against regret plus suboptimality.

    Purely base-space quantities; holds whether or not the hidden
    utility is representable in the learner's lift.
    """
    if trace.horizon == 0:
        return Certificate("squared_regret_self_bound", 0.0, 0.0, DEFAULT_REL_TOL)
    B = trace.bound_payoff
    rhs = B * trace.total_regret() + 2.0 * B * trace.total_subopt()
    return _cert("squared_regret_self_bound", float(np.sum(trace.regret**2)), rhs)


def check_robust_bound(trace: TraceSummary) -> list[Certificate]:
    """Suboptimality-robust regret bound and its self-bounding lemma.

    The bound's three terms are the payoff bound times the log-det, the
    comparator norm times the square root of ridge times log-det, and
    the square root of twice the payoff bound times cumulative
    suboptimality times log-det.
    """
    if trace.horizon == 0:
        return [
            Certificate("robust_regret_bound", 0.0, 0.0, DEFAULT_REL_TOL),
            check_self_bounding(trace),
        ]
    B = trace.bound_payoff
    H = trace.logdet_from_leverage()
    lam = trace.regularizer
    delta = trace.total_subopt()
    rhs = (
        B * H
        + trace.comparator_norm * math.sqrt(lam * H)
        + math.sqrt(2.0 * B * delta * H)
    )
    return [
        _cert("robust_regret_bound", trace.total_regret(), rhs),
        check_self_bounding(trace),
    ]


_MODEL_FACTORS = {
    "noncontextual": lambda tr: 1.0,
    "linear": lambda tr: tr.context_bound**2,
    "kernel": lambda tr: tr.kernel_bound**2,
}


def check_instantiated_bound(trace: TraceSummary) -> list[Certificate]:
    """Model-specific control of the log-determinant.

    Certifies that the log-determinant is bounded by the effective
    dimension times one plus the log of one plus the Gram operator norm
    over the ridge, and that the operator norm itself respects the
    horizon-times-squared-diameter envelope of the active model.
    """
    if trace.horizon == 0:
        return [
            Certificate("logdet_effective_dim", 0.0, 0.0, DEFAULT_REL_TOL),
            Certificate("gram_operator_norm", 0.0, 0.0, DEFAULT_REL_TOL),
        ]
    if trace.gram is None:
        raise ValueError("trace has no stored Gram matrix")
    try:
        factor = _MODEL_FACTORS[trace.model_kind](trace)
    except KeyError:
        raise ValueError(f"unknown model kind: {trace.model_kind!r}") from None
    lam = trace.regularizer
    evals = np.clip(np.linalg.eigvalsh(trace.gram), 0.0, None)
    opnorm = float(evals[-1])
    h_eig = float(np.sum(np.log1p(evals / lam)))
    deff = float(np.sum(evals / (evals + lam)))
    cap = trace.horizon * trace.diameter**2 * factor
    return [
        _cert("logdet_effective_dim", h_eig, deff * (1.0 + math.log1p(opnorm / lam))),
        _cert("gram_operator_norm", opnorm, cap),
    ]


def check_potential_crosscheck(trace: TraceSummary) -> Certificate:
    """Incrementally accumulated potential matches the direct recomputation."""
    if trace.horizon == 0:
        return Certificate("potential_crosscheck", 0.0, 0.0, DEFAULT_REL_TOL)
    inc = float(trace.potential[-1])
    direct = trace.final_potential_direct
    err = abs(inc - direct)
    return Certificate("potential_crosscheck", err, 0.0, 1e-6 * (1.0 + abs(direct)))


def standard_certificates(trace: TraceSummary) -> tuple[list[Certificate], list[str]]:
    """Full battery applicable to a projection-free learner's trace.

    Returns the computed certificates and the names of checks skipped
    because the trace lacks the needed record (no Gram matrix beyond the
    storage cap, no optional per-round recomputations).
    """
    certs = [check_sign_condition(trace)]
    skipped: list[str] = []
    if trace.potential_direct is not None or trace.horizon == 0:
        certs.append(check_increment_identity(trace))
    else:
        skipped.append("potential_increment")
    if trace.post_leverage is not None or trace.horizon == 0:
        certs.append(check_post_leverage_identity(trace))
    else:
        skipped.append("leverage_update_identity")
    certs.append(check_cei(trace))
    if trace.gram is not None or trace.horizon == 0:
        certs.extend(check_epl(trace))
        certs.extend(check_instantiated_bound(trace))
    else:
        skipped.extend(
            ["elliptical_potential", "logdet_product_identity",
             "logdet_effective_dim", "gram_operator_norm"]
        )
    if trace.comparator_in_span:
        certs.append(check_main_bound(trace))
        certs.extend(check_robust_bound(trace))
    else:
        certs.append(check_self_bounding(trace))
        skipped.extend(["main_regret_bound", "robust_regret_bound"])
    certs.append(check_potential_crosscheck(trace))
    return certs, skipped
