"""Experiment harness: seeded grids, solver dispatch, CSV reports.

A run crosses a generator grid (n, kappa, sigma, corruption level) with a
solver list and R repetitions.  Every repetition owns a child seed mixed
deterministically from (master seed, cell key, repetition), so results do
not depend on execution order and rerunning a config reproduces the report
byte for byte (timing column aside).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import baselines, datagen, regression
from .core import Dataset, ModelSpec, NoiseFamily, SubWeibullParams, sigma_norm_error
from .estimators import EmptyHistogramError
from .privacy import PrivacyBudget
from .rng import make_rng, spawn_seed, standard_normal

KNOWN_SOLVERS = (
    "ols",
    "sgd",
    "streaming_dp_sgd",
    "dp_ssp",
    "dp_robust_gd",
    "dp_robust_gd_best",
    "dp_robust_gd_ht",
)

CSV_HEADER = "solver,n,kappa,sigma,alpha_corrupt,seed,error,wall_time_ms"


@dataclass
class ExperimentConfig:
    """Everything a reproducible experiment needs, flat and overridable."""

    # generator grid
    generator: str = "linear"  # linear | hard_instance
    d: int = 10
    n_grid: tuple = (100_000,)
    kappa_grid: tuple = (1.0,)
    sigma_grid: tuple = (1.0,)
    alpha_corrupt_grid: tuple = (0.0,)
    corruption: str = "constant_label"  # constant_label | quantile_targeted
    corruption_value: float = 1000.0
    noise: str = "uniform"
    noise_k: int = 4
    noise_kappa2: float = 1.0
    project: bool = True
    hard_sign: int = 1
    # solvers and budget
    solvers: tuple = ("dp_robust_gd",)
    epsilon: float = 1.0
    delta: Optional[float] = None  # None: min(1e-6, n**-2) per cell
    # gradient-descent tuning
    alpha: float = 0.1
    K: float = 1.0
    a: float = 0.5
    C1: float = 8.0
    C2: float = 1.0
    clip_scale: float = 0.5
    zeta: float = 0.05
    C_step: float = 2.0
    T: Optional[int] = None  # None: ceil(3 * kappa * ln n) per cell
    partition: tuple = (0.0, 1 / 3, 2 / 3)
    known_trace: Optional[str] = "auto"  # "auto" | None | float-as-str
    # heavy-tail profile
    rho1: float = 0.0
    rho2: float = 0.0
    rho3: float = 0.0
    rho4: float = 0.0
    # baseline knobs
    sgd_theta: str = "auto"  # "auto" | "adaptive" | float-as-str
    ssp_row_bound: str = "auto"
    ssp_label_bound: str = "auto"
    # bookkeeping
    repetitions: int = 5
    seed: int = 0
    output_path: str = "results.csv"
    figures: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.generator not in ("linear", "hard_instance"):
            raise ValueError(f"unknown generator {self.generator!r}")
        for name in ("n_grid", "kappa_grid", "sigma_grid", "alpha_corrupt_grid"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be nonempty")
            setattr(self, name, values)
        self.solvers = tuple(self.solvers)
        unknown = [s for s in self.solvers if s not in KNOWN_SOLVERS]
        if unknown:
            raise ValueError(f"unknown solvers {unknown}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        self.partition = tuple(float(f) for f in self.partition)


@dataclass(frozen=True)
class CellKey:
    n: int
    kappa: float
    sigma: float
    alpha_corrupt: float


@dataclass
class RunRecord:
    solver: str
    cell: CellKey
    seed: int
    error: float  # nan when the solver failed
    wall_time_ms: float
    fail_reason: Optional[str] = None


@dataclass
class CellSummary:
    solver: str
    cell: CellKey
    mean_error: float
    stderr_error: float
    mean_wall_time_ms: float
    stderr_wall_time_ms: float


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)

    def summaries(self) -> list:
        out = []
        for cell in grid_cells(self.config):
            for solver in self.config.solvers:
                rows = [
                    r for r in self.records if r.cell == cell and r.solver == solver
                ]
                if not rows:
                    continue
                errors = np.array([r.error for r in rows])
                times = np.array([r.wall_time_ms for r in rows])
                out.append(
                    CellSummary(
                        solver=solver,
                        cell=cell,
                        mean_error=float(errors.mean()),
                        stderr_error=_stderr(errors),
                        mean_wall_time_ms=float(times.mean()),
                        stderr_wall_time_ms=_stderr(times),
                    )
                )
        return out

    def mean_error(self, solver: str, **cell_fields) -> float:
        for s in self.summaries():
            if s.solver != solver:
                continue
            if all(getattr(s.cell, k) == v for k, v in cell_fields.items()):
                return s.mean_error
        raise KeyError(f"no summary for {solver} at {cell_fields}")


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return float("nan")
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def grid_cells(config: ExperimentConfig) -> list:
    cells = []
    for n in config.n_grid:
        for kappa in config.kappa_grid:
            for sigma in config.sigma_grid:
                for alpha_c in config.alpha_corrupt_grid:
                    cells.append(
                        CellKey(
                            n=int(n),
                            kappa=float(kappa),
                            sigma=float(sigma),
                            alpha_corrupt=float(alpha_c),
                        )
                    )
    return cells


def cell_delta(config: ExperimentConfig, n: int) -> float:
    if config.delta is not None:
        return config.delta
    return min(1e-6, float(n) ** -2)


def cell_iterations(config: ExperimentConfig, kappa: float, n: int) -> int:
    if config.T is not None:
        return config.T
    grid_kappa = kappa if config.generator == "linear" else 1.0
    return regression.default_iterations(max(grid_kappa, 1.0), n)


def _noise_family(config: ExperimentConfig) -> NoiseFamily:
    if config.noise == "heavy_tailed":
        return NoiseFamily.heavy_tailed(config.noise_k, config.noise_kappa2)
    return NoiseFamily(config.noise)


def _generate_cell_data(config: ExperimentConfig, cell: CellKey, rng):
    """Sample one repetition: returns (dataset, w_star, metric, trace_hint)."""
    if config.generator == "hard_instance":
        sigma = cell.sigma
        alpha = cell.alpha_corrupt
        if not (0 < alpha < 0.5):
            raise ValueError("hard_instance needs alpha_corrupt in (0, 0.5)")
        data = datagen.hard_instance_sample(alpha, sigma, config.hard_sign, cell.n, rng)
        w_star = np.array([1.0, float(config.hard_sign)])
        metric = datagen.hard_instance_covariance(alpha, sigma)
        data = datagen.instance_flip_corrupt(data, config.hard_sign)
        return data, w_star, metric, float(np.trace(metric))

    covariance = datagen.condition_number_covariance(cell.kappa, config.d)
    w_star = standard_normal(rng, config.d)
    w_star = w_star / np.linalg.norm(w_star)
    spec = ModelSpec(
        w_star=w_star,
        sigma=cell.sigma,
        covariance=covariance,
        noise_family=_noise_family(config),
        project_covariates_to_sphere=config.project,
    )
    data = datagen.sample_linear_model(spec, cell.n, rng)
    if config.project:
        metric = data.covariates.T @ data.covariates / cell.n
        trace_hint = 1.0  # unit rows: the trace of the projected covariance
    else:
        metric = covariance
        trace_hint = float(np.trace(covariance))
    if cell.alpha_corrupt > 0:
        corruption = datagen.CorruptionSpec(
            kind=config.corruption,
            fraction=cell.alpha_corrupt,
            value=config.corruption_value,
        )
        data, _ = datagen.corrupt_labels(data, corruption, rng)
    return data, w_star, metric, trace_hint


def _known_trace_value(config: ExperimentConfig, trace_hint: float) -> Optional[float]:
    if config.known_trace is None or config.known_trace == "none":
        return None
    if config.known_trace == "auto":
        return trace_hint
    return float(config.known_trace)


def _gd_config(config, cell, budget, lambda_max, trace_hint, heavy: bool):
    kwargs = dict(
        T=cell_iterations(config, cell.kappa, cell.n),
        budget=budget,
        subweibull=SubWeibullParams(config.K, config.a),
        alpha=config.alpha,
        lambda_max=lambda_max,
        C_step=config.C_step,
        C1=config.C1,
        C2=config.C2,
        clip_scale=config.clip_scale,
        zeta=config.zeta,
        partition_fractions=config.partition,
        known_trace=_known_trace_value(config, trace_hint),
    )
    if heavy:
        return regression.HeavyTailConfig(
            rho1=config.rho1,
            rho2=config.rho2,
            rho3=config.rho3,
            rho4=config.rho4,
            moment_k=config.noise_k,
            kappa2=config.noise_kappa2,
            **kwargs,
        )
    return regression.GDConfig(**kwargs)


def _sgd_theta_schedule(config: ExperimentConfig, data: Dataset, trace_hint: float):
    """Fixed clipping schedule for the streaming baseline.

    The default reuses the two-sided rule's threshold formula at a round-0
    distance proxy (the response second moment).  "adaptive" switches to the
    per-round private calibration, which needs minibatches large enough to
    host the estimator's partitions.
    """
    if config.sgd_theta == "adaptive":
        return None
    if config.sgd_theta == "auto":
        gamma_proxy = float(np.mean(data.responses**2))
        theta = regression.compute_residual_threshold(
            max(gamma_proxy, 1e-12),
            config.alpha,
            config.K,
            config.a,
            config.C2,
            config.clip_scale,
        )
        return theta * math.sqrt(trace_hint)
    return float(config.sgd_theta)


def _ssp_bounds(config: ExperimentConfig, data: Dataset) -> tuple[float, float]:
    if config.ssp_row_bound == "auto":
        row = float(np.linalg.norm(data.covariates, axis=1).max())
    else:
        row = float(config.ssp_row_bound)
    if config.ssp_label_bound == "auto":
        label = float(np.abs(data.responses).max())
    else:
        label = float(config.ssp_label_bound)
    return max(row, 1e-12), max(label, 1e-12)


def run_cell_repetition(config: ExperimentConfig, cell: CellKey, rep: int) -> list:
    """Run every requested solver on one freshly sampled repetition."""
    child_seed = spawn_seed(
        config.seed,
        "cell",
        (config.generator, cell.n, cell.kappa, cell.sigma, cell.alpha_corrupt),
        rep,
    )
    data_rng = make_rng(spawn_seed(child_seed, "data"))
    data, w_star, metric, trace_hint = _generate_cell_data(config, cell, data_rng)
    lambda_max = float(np.linalg.eigvalsh(metric).max())
    budget = PrivacyBudget(config.epsilon, cell_delta(config, cell.n))
    T = cell_iterations(config, cell.kappa, cell.n)

    records = []
    gd_cache = None
    for solver in config.solvers:
        rng = make_rng(spawn_seed(child_seed, "solver", solver.replace("_best", "")))
        start = time.perf_counter()
        error = float("nan")
        reason = None
        try:
            if solver == "ols":
                w = baselines.ols(data)
            elif solver == "sgd":
                w = baselines.one_pass_sgd(data, lambda_max, T, rng)
            elif solver == "streaming_dp_sgd":
                schedule = _sgd_theta_schedule(config, data, trace_hint)
                w = baselines.streaming_dp_sgd(
                    data, budget, T, schedule, lambda_max, rng,
                    alpha_bar=min(config.alpha, 0.1), zeta=config.zeta, C1=config.C1,
                )
            elif solver == "dp_ssp":
                row_bound, label_bound = _ssp_bounds(config, data)
                w = baselines.dp_ssp(data, budget, row_bound, rng, label_bound)
            elif solver in ("dp_robust_gd", "dp_robust_gd_best"):
                if gd_cache is None:
                    gd = _gd_config(config, cell, budget, lambda_max, trace_hint, False)
                    gd_cache = regression.dp_robust_gd(data, gd, rng)
                w_last, trace = gd_cache
                w = regression.best_iterate(trace) if solver.endswith("_best") else w_last
            elif solver == "dp_robust_gd_ht":
                gd = _gd_config(config, cell, budget, lambda_max, trace_hint, True)
                w, _ = regression.dp_robust_gd_ht(data, gd, rng)
            else:  # pragma: no cover - guarded by config validation
                raise ValueError(f"unknown solver {solver}")
            error = sigma_norm_error(w, w_star, metric)
        except (EmptyHistogramError, regression.IterateOverflowError, ValueError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
        wall_ms = (time.perf_counter() - start) * 1e3
        records.append(
            RunRecord(
                solver=solver,
                cell=cell,
                seed=child_seed,
                error=error,
                wall_time_ms=wall_ms,
                fail_reason=reason,
            )
        )
    return records


def _task(args) -> list:
    config, cell, rep = args
    return run_cell_repetition(config, cell, rep)


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Run the grid; failed solver calls become nan-error records, not crashes."""
    tasks = [
        (config, cell, rep)
        for cell in grid_cells(config)
        for rep in range(config.repetitions)
    ]
    records = []
    if config.workers == 1:
        for t in tasks:
            records.extend(_task(t))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for batch in pool.map(_task, tasks):
                records.extend(batch)
    # deterministic order: by grid position, then solver order, then repetition
    order = {
        (cell, solver): i
        for i, (cell, solver) in enumerate(
            (c, s) for c in grid_cells(config) for s in config.solvers
        )
    }
    records.sort(key=lambda r: (order[(r.cell, r.solver)], r.seed))
    return RunResult(config=config, records=records)


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_row(solver: str, cell: CellKey, seed_field: str, error, wall_ms) -> str:
    return ",".join(
        [
            solver,
            str(cell.n),
            _fmt(cell.kappa),
            _fmt(cell.sigma),
            _fmt(cell.alpha_corrupt),
            seed_field,
            _fmt(error),
            _fmt(wall_ms),
        ]
    )


def emit_csv(result: RunResult, path) -> None:
    """Write per-seed rows plus mean/stderr summary rows per cell and solver."""
    summaries = {(s.cell, s.solver): s for s in result.summaries()}
    groups: dict = {}
    for rec in result.records:  # records arrive grouped by (cell, solver)
        groups.setdefault((rec.cell, rec.solver), []).append(rec)
    lines = [CSV_HEADER]
    for (cell, solver), recs in groups.items():
        for rec in recs:
            lines.append(_csv_row(solver, cell, str(rec.seed), rec.error, rec.wall_time_ms))
        s = summaries[(cell, solver)]
        lines.append(_csv_row(solver, cell, "mean", s.mean_error, s.mean_wall_time_ms))
        lines.append(
            _csv_row(solver, cell, "stderr", s.stderr_error, s.stderr_wall_time_ms)
        )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"could not write results to {path}: {exc}") from exc


def parse_csv(path) -> list:
    """Read back an emitted CSV as a list of dict rows (floats parsed)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_HEADER.split(","):
            raise ValueError(f"unexpected results header {header}")
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            if not line.strip():
                continue
            row = dict(zip(header, parts))
            for key in ("kappa", "sigma", "alpha_corrupt", "error", "wall_time_ms"):
                row[key] = float(row[key])
            row["n"] = int(row["n"])
            rows.append(row)
    return rows
