"""Command-line interface.

Subcommands: ``run`` (experiment grid from a config file, CSV plus figures),
``gen`` (write a synthetic dataset), ``solve`` (one solver on a dataset
file), ``audit`` (empirical resilience audit).  Exit codes: 0 success,
1 usage error, 2 runtime failure.  REGRESS_SEED overrides the master seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, datagen, regression
from .config import ConfigError, load_config
from .core import ModelSpec, NoiseFamily, SubWeibullParams, sigma_norm_error
from .harness import emit_csv, run_experiment
from .privacy import PrivacyBudget
from .rng import make_rng, spawn_seed

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="regress", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[], help="run an experiment config")
    run.add_argument("--config", required=True, help="path to key = value config")
    run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    run.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    gen = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, default=10)
    gen.add_argument("--kappa", type=float, default=1.0)
    gen.add_argument("--sigma", type=float, default=1.0)
    gen.add_argument(
        "--noise", choices=("gaussian", "uniform", "heavy_tailed"), default="uniform"
    )
    gen.add_argument("--noise-k", type=int, default=4)
    gen.add_argument("--project", action="store_true", help="project covariates to the sphere")
    gen.add_argument("--seed", type=int, default=0)

    solve = sub.add_parser("solve", help="run one solver on a dataset CSV")
    solve.add_argument("--data", required=True)
    solve.add_argument(
        "--solver",
        required=True,
        choices=(
            "ols",
            "sgd",
            "streaming_dp_sgd",
            "dp_ssp",
            "dp_robust_gd",
            "dp_robust_gd_best",
        ),
    )
    solve.add_argument("--epsilon", type=float, default=1.0)
    solve.add_argument("--delta", type=float, default=1e-6)
    solve.add_argument("--T", type=int, default=0, help="0 = ceil(3 ln n)")
    solve.add_argument("--alpha", type=float, default=0.1)
    solve.add_argument("--K", type=float, default=1.0)
    solve.add_argument("--a", type=float, default=0.5)
    solve.add_argument("--clip-scale", type=float, default=0.5)
    solve.add_argument("--zeta", type=float, default=0.05)
    solve.add_argument("--seed", type=int, default=0)

    audit = sub.add_parser("audit", help="empirical resilience audit of a dataset")
    audit.add_argument("--data", required=True)
    audit.add_argument("--alpha", type=float, default=0.1)
    audit.add_argument("--trials", type=int, default=200)
    audit.add_argument("--seed", type=int, default=0)
    return parser


def _env_seed(default: int) -> int:
    raw = os.environ.get("REGRESS_SEED")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"REGRESS_SEED must be an integer, got {raw!r}") from exc


def _cmd_run(args) -> int:
    overrides = list(args.override)
    config = load_config(args.config, overrides)
    env_seed = os.environ.get("REGRESS_SEED")
    if env_seed is not None:
        config.seed = _env_seed(config.seed)
    result = run_experiment(config)
    out_path = Path(config.output_path)
    if out_path.parent and not out_path.parent.exists():
        out_path.parent.mkdir(parents=True, exist_ok=True)
    emit_csv(result, out_path)
    print(f"wrote {out_path}")
    if config.figures and not args.no_figures:
        from .figures import render_figures

        for fig_path in render_figures(result, out_path.parent or Path(".")):
            print(f"wrote {fig_path}")
    failures = [r for r in result.records if r.fail_reason]
    for rec in failures:
        print(
            f"note: {rec.solver} failed at n={rec.cell.n} "
            f"(seed {rec.seed}): {rec.fail_reason}",
            file=sys.stderr,
        )
    return 0


def _cmd_gen(args) -> int:
    seed = _env_seed(args.seed)
    rng = make_rng(spawn_seed(seed, "gen"))
    from .rng import standard_normal

    w_star = standard_normal(rng, args.d)
    w_star = w_star / np.linalg.norm(w_star)
    if args.noise == "heavy_tailed":
        family = NoiseFamily.heavy_tailed(args.noise_k)
    else:
        family = NoiseFamily(args.noise)
    spec = ModelSpec(
        w_star=w_star,
        sigma=args.sigma,
        covariance=datagen.condition_number_covariance(args.kappa, args.d),
        noise_family=family,
        project_covariates_to_sphere=args.project,
    )
    data = datagen.sample_linear_model(spec, args.n, rng)
    datagen.save_csv(data, args.out)
    print(f"wrote {args.out} ({data.n} rows, d={data.d})")
    return 0


def _cmd_solve(args) -> int:
    data = datagen.load_csv(args.data)
    seed = _env_seed(args.seed)
    rng = make_rng(spawn_seed(seed, "solve", args.solver))
    metric = data.covariates.T @ data.covariates / data.n
    lambda_max = float(np.linalg.eigvalsh(metric).max())
    T = args.T if args.T > 0 else regression.default_iterations(1.0, data.n)
    budget = PrivacyBudget(args.epsilon, args.delta)

    if args.solver == "ols":
        w = baselines.ols(data)
    elif args.solver == "sgd":
        w = baselines.one_pass_sgd(data, lambda_max, T, rng)
    elif args.solver == "streaming_dp_sgd":
        theta = regression.compute_residual_threshold(
            float(np.mean(data.responses**2)),
            args.alpha,
            args.K,
            args.a,
            1.0,
            args.clip_scale,
        ) * float(np.sqrt(np.trace(metric)))
        w = baselines.streaming_dp_sgd(data, budget, T, theta, lambda_max, rng)
    elif args.solver == "dp_ssp":
        row_bound = float(np.linalg.norm(data.covariates, axis=1).max())
        label_bound = float(np.abs(data.responses).max())
        w = baselines.dp_ssp(data, budget, row_bound, rng, label_bound)
    else:
        gd = regression.GDConfig(
            T=T,
            budget=budget,
            subweibull=SubWeibullParams(args.K, args.a),
            alpha=args.alpha,
            lambda_max=lambda_max,
            clip_scale=args.clip_scale,
            zeta=args.zeta,
        )
        w_last, trace = regression.dp_robust_gd(data, gd, rng)
        w = regression.best_iterate(trace) if args.solver.endswith("_best") else w_last
    print(",".join(repr(float(v)) for v in w))
    return 0


def _cmd_audit(args) -> int:
    data = datagen.load_csv(args.data)
    seed = _env_seed(args.seed)
    rng = make_rng(spawn_seed(seed, "audit"))
    w_star = baselines.ols(data)
    residuals = data.responses - data.covariates @ w_star
    sigma = float(np.sqrt(np.mean(residuals**2)))
    if sigma == 0:
        sigma = 1e-12
    covariance = data.covariates.T @ data.covariates / data.n
    spec = ModelSpec(
        w_star=w_star,
        sigma=sigma,
        covariance=covariance,
        noise_family=NoiseFamily.gaussian(),
    )
    profile = datagen.resilience_audit(data, spec, args.alpha, args.trials, rng)
    print(f"rho1 = {profile.rho1!r}")
    print(f"rho2 = {profile.rho2!r}")
    print(f"rho3 = {profile.rho3!r}")
    print(f"rho4 = {profile.rho4!r}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "gen": _cmd_gen,
        "solve": _cmd_solve,
        "audit": _cmd_audit,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"regress: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except FileNotFoundError as exc:
        print(f"regress: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"regress: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
