"""Render report figures next to the CSV output.

One log-log error-versus-n panel per (kappa, sigma, alpha_corrupt) slice,
plus an error-versus-corruption panel whenever the corruption grid has more
than one level.  Cells whose solver failed (nan mean) are simply absent from
the lines.  Figures are presentation artifacts: the CSV stays the contract
and the determinism checks ignore these files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RunResult


def _slug(value: float) -> str:
    return f"{value:g}".replace(".", "p").replace("-", "m")


def _finite(pairs):
    xs, ys = [], []
    for x, y in pairs:
        if np.isfinite(y):
            xs.append(x)
            ys.append(y)
    return xs, ys


def render_figures(result: RunResult, out_dir) -> list:
    """Write PNG panels for the run; returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = result.config
    summaries = result.summaries()
    paths = []

    for kappa in config.kappa_grid:
        for sigma in config.sigma_grid:
            for alpha_c in config.alpha_corrupt_grid:
                fig, ax = plt.subplots(figsize=(6.0, 4.2))
                drew = False
                for solver in config.solvers:
                    pairs = [
                        (s.cell.n, s.mean_error)
                        for s in summaries
                        if s.solver == solver
                        and s.cell.kappa == kappa
                        and s.cell.sigma == sigma
                        and s.cell.alpha_corrupt == alpha_c
                    ]
                    xs, ys = _finite(sorted(pairs))
                    if xs:
                        ax.plot(xs, ys, marker="o", label=solver)
                        drew = True
                if drew:
                    ax.set_xscale("log")
                    ax.set_yscale("log")
                    ax.set_xlabel("n")
                    ax.set_ylabel("parameter error")
                    ax.set_title(
                        f"kappa={kappa:g}, sigma={sigma:g}, corruption={alpha_c:g}"
                    )
                    ax.legend(fontsize=8)
                    fig.tight_layout()
                    name = (
                        f"error_vs_n__kappa{_slug(kappa)}"
                        f"__sigma{_slug(sigma)}__corrupt{_slug(alpha_c)}.png"
                    )
                    fig.savefig(out_dir / name, dpi=150)
                    paths.append(out_dir / name)
                plt.close(fig)

    if len(config.alpha_corrupt_grid) > 1:
        for n in config.n_grid:
            fig, ax = plt.subplots(figsize=(6.0, 4.2))
            drew = False
            for solver in config.solvers:
                pairs = [
                    (s.cell.alpha_corrupt, s.mean_error)
                    for s in summaries
                    if s.solver == solver and s.cell.n == n
                ]
                xs, ys = _finite(sorted(pairs))
                if xs:
                    ax.plot(xs, ys, marker="o", label=solver)
                    drew = True
            if drew:
                ax.set_yscale("log")
                ax.set_xlabel("corrupted fraction")
                ax.set_ylabel("parameter error")
                ax.set_title(f"n={n}")
                ax.legend(fontsize=8)
                fig.tight_layout()
                name = f"error_vs_corruption__n{n}.png"
                fig.savefig(out_dir / name, dpi=150)
                paths.append(out_dir / name)
            plt.close(fig)
    return paths
