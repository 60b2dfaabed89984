"""Experiment runner: coefficient sweeps over algorithms, seeds, and
feedback channels, with certificate evaluation and CSV/JSON emission.

Per (config, seed) all algorithms face the identical round sequence, so
rows differ only through the learners.  Learner compute is timed on its
own, excluding the argmax oracle and the environment; both the
learner-only and loop-total times are reported, with the learner-only
figure as the headline ``runtime_seconds``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .diagnostics import TraceSummary, standard_certificates
from .environment import (
    ActionSetSpec,
    Environment,
    FeedbackModel,
    UtilitySpec,
    top_m_oracle,
)
from .learners import CoRectron, CoRectronK, KONS, OGD, ONS
from .lifting import KernelSpec, LiftSpec
from .numkit import DegenerateGramError

__all__ = [
    "SETTINGS",
    "ALGORITHMS",
    "DEFAULT_COEF_GRID",
    "ExperimentConfig",
    "RunResult",
    "default_config",
    "resolve_hyperparameters",
    "make_environment",
    "build_learner",
    "run_episode",
    "sweep",
    "aggregate_results",
    "best_coefficients",
    "emit",
    "read_results_csv",
    "CSV_HEADER",
]

SETTINGS = ("linear", "kernel", "noncontextual")
ALGORITHMS = ("corectron_l", "corectron_k", "ogd", "ons", "kons")
EXPLICIT_ALGOS = ("corectron_l", "ogd", "ons")
KERNEL_ONLY_ALGOS = ("corectron_k", "kons")
DEFAULT_COEF_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)

SURROGATE_SCALE = 0.1
STEP_COEFF = 0.5
BOUND_PAYOFF = 1.0

CSV_HEADER = (
    "setting,algorithm,coefficient,seed,alpha,xi,T,"
    "final_regret,runtime_seconds,projection_count"
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep's shape: problem sizes, grids, and diagnostics policy."""

    setting: str = "linear"
    algorithms: tuple = EXPLICIT_ALGOS
    items: int = 10
    pick: int = 5
    context_dim: int = 10
    horizon: int = 2000
    centers: int = 16
    bandwidth: float = 1.0
    seeds: tuple = (0, 1, 2, 3, 4)
    coef_grid: tuple = DEFAULT_COEF_GRID
    feedback_models: tuple = (FeedbackModel.optimal(),)
    diag_cap: int = 2000
    diag_level: str | None = None  # None = full for horizon <= 1000, else light

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting: {self.setting!r}")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms: {bad}")
        if self.setting != "kernel":
            kernel_algos = [a for a in self.algorithms if a in KERNEL_ONLY_ALGOS]
            if kernel_algos:
                raise ValueError(
                    f"{kernel_algos} require the kernel setting, got {self.setting!r}"
                )
        if self.diag_level not in (None, "full", "light", "off"):
            raise ValueError(f"unknown diag level: {self.diag_level!r}")
        if not (0 < self.pick <= self.items):
            raise ValueError("need 0 < pick <= items")

    @property
    def explicit_dim(self) -> int:
        """Dimension of the explicit lift used by the linear-style learners."""
        if self.setting == "noncontextual":
            return self.items
        return self.items * self.context_dim

    def resolved_diag_level(self) -> str:
        if self.diag_level is not None:
            return self.diag_level
        return "full" if self.horizon <= 1000 else "light"


def default_config(setting: str, full_scale: bool = False, **overrides) -> ExperimentConfig:
    """Desk-scale defaults per setting; ``full_scale`` restores the long
    horizons and ten seeds."""
    if setting == "kernel":
        horizon = 1000 if full_scale else 500
        algos = ALGORITHMS
    elif setting == "linear":
        horizon = 10000 if full_scale else 2000
        algos = EXPLICIT_ALGOS
    else:
        horizon = 10000 if full_scale else 2000
        algos = EXPLICIT_ALGOS
    seeds = tuple(range(10 if full_scale else 5))
    base = ExperimentConfig(setting=setting, algorithms=algos, horizon=horizon, seeds=seeds)
    return replace(base, **overrides) if overrides else base


@dataclass
class RunResult:
    """Aggregated outcome of one (algorithm, coefficient, seed, feedback) cell."""

    setting: str
    algorithm: str
    coefficient: float
    seed: int
    alpha: float
    xi: float
    horizon: int
    final_regret: float
    runtime_seconds: float
    total_seconds: float
    projection_count: int
    status: str = "ok"
    message: str = ""
    certificates: list = field(default_factory=list)
    skipped_checks: tuple = ()

    def csv_row(self) -> list[str]:
        return [
            self.setting,
            self.algorithm,
            repr(self.coefficient),
            str(self.seed),
            repr(self.alpha),
            repr(self.xi),
            str(self.horizon),
            repr(self.final_regret),
            repr(self.runtime_seconds),
            str(self.projection_count),
        ]

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "algorithm": self.algorithm,
            "coefficient": self.coefficient,
            "seed": self.seed,
            "alpha": self.alpha,
            "xi": self.xi,
            "T": self.horizon,
            "final_regret": self.final_regret,
            "runtime_seconds": self.runtime_seconds,
            "total_seconds": self.total_seconds,
            "projection_count": self.projection_count,
            "status": self.status,
            "message": self.message,
            "certificates": [c.to_dict() for c in self.certificates],
            "skipped_checks": list(self.skipped_checks),
        }


def resolve_hyperparameters(config: ExperimentConfig, algorithm: str, coefficient: float) -> dict:
    """Concrete learner parameters for one grid coefficient.

    The reference values follow the unit-diameter, unit-utility scaling
    of the benchmark: gradient descent sweeps a 2/sqrt(T) step divided by
    the coefficient, the Newton baselines sweep their ridge around
    d / (4 * step_coeff^2), and the second-order learners sweep their
    regularizer around the payoff-bound-squared times the dimension.  In
    the kernel setting the explicit dimension serves as the proxy for
    the unavailable effective dimension.
    """
    d = config.explicit_dim
    if algorithm == "ogd":
        return {"step_size": (2.0 / math.sqrt(config.horizon)) / coefficient}
    if algorithm in ("ons", "kons"):
        return {
            "ridge": coefficient * d / (4.0 * STEP_COEFF**2),
            "surrogate_scale": SURROGATE_SCALE,
            "step_coeff": STEP_COEFF,
        }
    if algorithm in ("corectron_l", "corectron_k"):
        return {"regularizer": coefficient * BOUND_PAYOFF**2 * d}
    raise ValueError(f"unknown algorithm: {algorithm!r}")


def _lift_for(config: ExperimentConfig, algorithm: str) -> LiftSpec:
    if algorithm in KERNEL_ONLY_ALGOS:
        kernel = KernelSpec.rbf(config.bandwidth)
        return LiftSpec.kernelized(config.items, config.context_dim, kernel)
    if config.setting == "noncontextual":
        return LiftSpec.identity(config.items)
    return LiftSpec.linear(config.items, config.context_dim)


def build_learner(config: ExperimentConfig, algorithm: str, params: dict):
    spec = _lift_for(config, algorithm)
    if algorithm == "corectron_l":
        return CoRectron(spec, **params)
    if algorithm == "corectron_k":
        return CoRectronK(spec, **params)
    if algorithm == "ogd":
        return OGD(spec, **params)
    if algorithm == "ons":
        return ONS(spec, **params)
    if algorithm == "kons":
        return KONS(spec, **params)
    raise ValueError(f"unknown algorithm: {algorithm!r}")


def make_environment(config: ExperimentConfig, feedback: FeedbackModel, seed: int) -> Environment:
    actions = ActionSetSpec.top_m(config.items, config.pick)
    if config.setting == "noncontextual":
        utility = UtilitySpec("fixed", context_dim=config.context_dim)
    elif config.setting == "linear":
        utility = UtilitySpec("linear", context_dim=config.context_dim)
    else:
        utility = UtilitySpec(
            "rbf",
            context_dim=config.context_dim,
            centers=config.centers,
            bandwidth=config.bandwidth,
        )
    return Environment(actions, utility, feedback, config.horizon, seed)


def _gram_updater(config: ExperimentConfig, algorithm: str, horizon: int):
    """Incremental builder of the lifted-residual Gram matrix."""
    spec = _lift_for(config, algorithm)
    K = np.zeros((horizon, horizon))
    Z = np.zeros((horizon, max(config.context_dim, 1)))
    G = np.zeros((horizon, config.items))

    def add(t: int, z: np.ndarray, g: np.ndarray) -> None:
        base = G[:t].dot(g)
        if spec.kind == "identity":
            col = base
            diag = float(g.dot(g))
        elif spec.kind == "linear":
            col = Z[:t].dot(z) * base
            diag = float(z.dot(z)) * float(g.dot(g))
        else:
            col = spec.kernel.column(Z[:t], z) * base
            diag = spec.kernel.diag_value(z) * float(g.dot(g))
        K[t, :t] = col
        K[:t, t] = col
        K[t, t] = diag
        Z[t] = z
        G[t] = g

    return K, add


def _lifted_comparator(config: ExperimentConfig, algorithm: str, env: Environment):
    """Explicit coordinates of the hidden utility in the learner's lift,
    when both sides are finite dimensional and the model matches."""
    spec = _lift_for(config, algorithm)
    model = env.model
    if spec.kind == "identity" and env.model_kind == "noncontextual":
        return model.vector
    if spec.kind == "linear" and env.model_kind == "linear":
        return model.weights.flatten(order="F")
    return None


def _comparator_representable(config: ExperimentConfig, algorithm: str, env: Environment) -> bool:
    """Whether the hidden utility is an element of the learner's lifted
    space (with unit norm there).  False for reference runs under model
    mismatch, e.g. the linear-lift learner facing RBF utilities."""
    spec = _lift_for(config, algorithm)
    if spec.kind == "kernel":
        return env.model_kind == "kernel"
    if spec.kind == "linear":
        return env.model_kind == "linear"
    return env.model_kind == "noncontextual"


_CORECTRON_ALGOS = ("corectron_l", "corectron_k")
_EPISODE_ERRORS = (DegenerateGramError, FloatingPointError, np.linalg.LinAlgError)


def run_episode(
    config: ExperimentConfig,
    algorithm: str,
    coefficient: float,
    params: dict,
    feedback: FeedbackModel,
    seed: int,
    diag_level: str | None = None,
) -> tuple[RunResult, TraceSummary | None]:
    """Play one full episode and collect metrics.

    ``diag_level`` "full" records per-round recomputed diagnostics and
    the Gram matrix (subject to the storage cap) so the entire
    certificate battery can run; "light" keeps only the O(T) scalars and
    the always-on certificates; "off" skips tracing entirely.  Episodes
    that produce non-finite numbers are reported with status "failed"
    instead of aborting the sweep.
    """
    level = diag_level or config.resolved_diag_level()
    env = make_environment(config, feedback, seed)
    learner = build_learner(config, algorithm, params)
    actions = env.actions
    T = config.horizon
    is_corectron = algorithm in _CORECTRON_ALGOS
    want_full = level == "full" and is_corectron
    with_gram = want_full and T <= config.diag_cap

    leverage = np.zeros(T)
    alignment = np.zeros(T)
    alignment_scale = np.zeros(T)
    potential = np.zeros(T)
    regret = np.zeros(T)
    subopt = np.zeros(T)
    projected = np.zeros(T, dtype=bool)
    potential_direct = np.zeros(T) if want_full else None
    post_leverage = np.zeros(T) if want_full else None
    gram, gram_add = (None, None)
    if with_gram:
        gram, gram_add = _gram_updater(config, algorithm, T)

    _kernels.warmup()
    status, message = "ok", ""
    learner_time = 0.0
    t_total0 = time.perf_counter()
    try:
        for t in range(T):
            z, u, x, delta = env.round(t)
            t0 = time.perf_counter()
            w_base = learner.predict(z)
            learner_time += time.perf_counter() - t0
            if not np.all(np.isfinite(w_base)):
                raise FloatingPointError("non-finite prediction")
            xhat = top_m_oracle(w_base, actions)
            g = xhat - x
            t0 = time.perf_counter()
            diag = learner.update(z, g)
            learner_time += time.perf_counter() - t0
            leverage[t] = diag.leverage
            alignment[t] = diag.alignment
            alignment_scale[t] = diag.alignment_scale
            potential[t] = diag.potential
            projected[t] = diag.projected
            regret[t] = float(u.dot(x - xhat))
            subopt[t] = delta
            if want_full:
                potential_direct[t] = learner.potential_direct()
                post_leverage[t] = learner.post_round_leverage()
            if gram_add is not None:
                gram_add(t, np.asarray(z, dtype=float), g)
        if not np.isfinite(regret.sum()):
            raise FloatingPointError("non-finite regret")
    except _EPISODE_ERRORS as exc:
        status, message = "failed", f"{type(exc).__name__}: {exc}"
    total_time = time.perf_counter() - t_total0

    final_regret = float(regret.sum()) if status == "ok" else float("nan")
    result = RunResult(
        setting=config.setting,
        algorithm=algorithm,
        coefficient=float(coefficient),
        seed=int(seed),
        alpha=feedback.alpha,
        xi=feedback.xi,
        horizon=T,
        final_regret=final_regret,
        runtime_seconds=learner_time,
        total_seconds=total_time,
        projection_count=int(projected.sum()),
        status=status,
        message=message,
    )

    trace = None
    if level != "off" and status == "ok" and is_corectron:
        consts = env.trace_constants()
        final_direct = learner.potential_direct() if T else 0.0
        comparator = _lifted_comparator(config, algorithm, env)
        residual_regret = None
        if comparator is not None and hasattr(learner, "cumulative_residual"):
            residual_regret = -float(comparator.dot(learner.cumulative_residual))
        trace = TraceSummary(
            algorithm=algorithm,
            model_kind=env.model_kind,
            regularizer=learner.regularizer,
            horizon=T,
            base_dim=config.items,
            context_dim=config.context_dim,
            bound_payoff=consts["bound_payoff"],
            diameter=consts["diameter"],
            context_bound=consts["context_bound"],
            kernel_bound=consts["kernel_bound"],
            comparator_norm=consts["comparator_norm"],
            leverage=leverage,
            alignment=alignment,
            alignment_scale=alignment_scale,
            potential=potential,
            regret=regret,
            subopt=subopt,
            projected=projected,
            final_potential_direct=final_direct,
            potential_direct=potential_direct,
            post_leverage=post_leverage,
            gram=gram,
            gram_capped=want_full and not with_gram,
            residual_regret=residual_regret,
            comparator_in_span=_comparator_representable(config, algorithm, env),
        )
        certs, skipped = standard_certificates(trace)
        result.certificates = certs
        result.skipped_checks = tuple(skipped)
    return result, trace


def _run_cell(args) -> RunResult:
    config, algorithm, coefficient, params, feedback, seed, level = args
    result, _ = run_episode(config, algorithm, coefficient, params, feedback, seed, level)
    return result


def sweep(
    config: ExperimentConfig,
    jobs: int = 1,
    diag_level: str | None = None,
    trace_hook=None,
) -> list[RunResult]:
    """Cartesian product over algorithms x coefficients x feedback x seeds.

    Cells are independent; with ``jobs > 1`` they run in worker processes
    and results are merged back in the deterministic task order.
    ``trace_hook(result, trace)`` is invoked per cell in sequential mode,
    e.g. to persist traces.  Failed cells are kept (status "failed") and
    the sweep continues.
    """
    level = diag_level or config.resolved_diag_level()
    tasks = []
    for algorithm in config.algorithms:
        for coefficient in config.coef_grid:
            params = resolve_hyperparameters(config, algorithm, coefficient)
            for feedback in config.feedback_models:
                for seed in config.seeds:
                    tasks.append(
                        (config, algorithm, coefficient, params, feedback, seed, level)
                    )
    if jobs > 1 and trace_hook is None and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks, chunksize=1))
    results = []
    for task in tasks:
        result, trace = run_episode(*task[:6], diag_level=task[6])
        if trace_hook is not None:
            trace_hook(result, trace)
        results.append(result)
    return results


def aggregate_results(rows: list[RunResult]) -> list[dict]:
    """Mean and sample standard deviation per cell across seeds.

    Failed rows are excluded from the statistics (with a warning) but
    counted in ``n_failed``.
    """
    cells: dict[tuple, list[RunResult]] = {}
    for r in rows:
        key = (r.setting, r.algorithm, r.coefficient, r.alpha, r.xi, r.horizon)
        cells.setdefault(key, []).append(r)
    out = []
    for key in sorted(cells, key=lambda k: (k[0], k[1], k[2], k[3], k[4], k[5])):
        group = cells[key]
        ok = [r for r in group if r.status == "ok"]
        failed = len(group) - len(ok)
        if failed:
            warnings.warn(
                f"{failed} failed episode(s) excluded from cell {key}", stacklevel=2
            )
        def mean_std(vals):
            if not vals:
                return float("nan"), float("nan")
            arr = np.asarray(vals, dtype=float)
            std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            return float(arr.mean()), std

        regret_m, regret_s = mean_std([r.final_regret for r in ok])
        runtime_m, runtime_s = mean_std([r.runtime_seconds for r in ok])
        proj_m, _ = mean_std([r.projection_count for r in ok])
        out.append(
            {
                "setting": key[0],
                "algorithm": key[1],
                "coefficient": key[2],
                "alpha": key[3],
                "xi": key[4],
                "T": key[5],
                "mean_regret": regret_m,
                "std_regret": regret_s,
                "mean_runtime": runtime_m,
                "std_runtime": runtime_s,
                "mean_projections": proj_m,
                "n_seeds": len(ok),
                "n_failed": failed,
            }
        )
    return out


def best_coefficients(
    rows: list[RunResult], alpha: float = 0.0, xi: float = 0.0
) -> dict[str, tuple[float, float]]:
    """Per algorithm, the grid coefficient with the lowest mean final
    regret in the selected feedback cell; ties go to the smaller value."""
    cells = aggregate_results(
        [r for r in rows if r.alpha == alpha and r.xi == xi]
    )
    best: dict[str, tuple[float, float]] = {}
    for cell in cells:
        algo = cell["algorithm"]
        entry = (cell["mean_regret"], cell["coefficient"])
        if not math.isfinite(entry[0]):
            continue
        cur = best.get(algo)
        if cur is None or entry < (cur[1], cur[0]):
            best[algo] = (entry[1], entry[0])
    return best


def emit(
    rows: list[RunResult],
    out_dir,
    config: ExperimentConfig | None = None,
    traces: dict | None = None,
) -> dict:
    """Write results.csv, report.json, and optional trace files.

    The CSV carries the fixed ten-column schema in full-precision
    decimal; the JSON report embeds everything else, including per-run
    certificates and status.
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for r in rows:
            writer.writerow(r.csv_row())

    report = {
        "config": _config_dict(config) if config is not None else None,
        "summary": aggregate_results(rows) if rows else [],
        "results": [r.to_dict() for r in rows],
        "certificates_failed": sum(
            1 for r in rows for c in r.certificates if not c.holds
        ),
    }
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=1)

    paths = {"csv": csv_path, "json": json_path}
    if traces:
        trace_dir = os.path.join(out_dir, "traces")
        os.makedirs(trace_dir, exist_ok=True)
        for name, trace in traces.items():
            path = os.path.join(trace_dir, f"{name}.json")
            trace.save(path)
        paths["traces"] = trace_dir
    return paths


def _config_dict(config: ExperimentConfig) -> dict:
    d = {
        "setting": config.setting,
        "algorithms": list(config.algorithms),
        "items": config.items,
        "pick": config.pick,
        "context_dim": config.context_dim,
        "horizon": config.horizon,
        "centers": config.centers,
        "bandwidth": config.bandwidth,
        "seeds": list(config.seeds),
        "coef_grid": list(config.coef_grid),
        "feedback_models": [
            {"kind": f.kind, "alpha": f.alpha, "xi": f.xi} for f in config.feedback_models
        ],
        "diag_cap": config.diag_cap,
        "diag_level": config.diag_level,
    }
    return d


def read_results_csv(path) -> list[dict]:
    """Parse an emitted CSV back into typed rows."""
    if hasattr(path, "read"):
        fh = path
        close = False
    else:
        fh = open(path, newline="")
        close = True
    try:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(
                {
                    "setting": rec["setting"],
                    "algorithm": rec["algorithm"],
                    "coefficient": float(rec["coefficient"]),
                    "seed": int(rec["seed"]),
                    "alpha": float(rec["alpha"]),
                    "xi": float(rec["xi"]),
                    "T": int(rec["T"]),
                    "final_regret": float(rec["final_regret"]),
                    "runtime_seconds": float(rec["runtime_seconds"]),
                    "projection_count": int(rec["projection_count"]),
                }
            )
        return rows
    finally:
        if close:
            fh.close()


def results_from_rows(rows: list[dict]) -> list[RunResult]:
    """Reconstruct minimal RunResults from parsed CSV rows."""
    out = []
    for rec in rows:
        out.append(
            RunResult(
                setting=rec["setting"],
                algorithm=rec["algorithm"],
                coefficient=rec["coefficient"],
                seed=rec["seed"],
                alpha=rec["alpha"],
                xi=rec["xi"],
                horizon=rec["T"],
                final_regret=rec["final_regret"],
                runtime_seconds=rec["runtime_seconds"],
                total_seconds=rec["runtime_seconds"],
                projection_count=rec["projection_count"],
            )
        )
    return out
