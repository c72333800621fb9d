"""Reference solvers: OLS, tail-averaged one-pass SGD, streaming DP-SGD with
whole-gradient clipping, and sufficient-statistics perturbation (DP-SSP).

The streaming solver deliberately keeps the vulnerability the two-sided clip
fixes: its single norm clip on x_i * r_i lets small-covariate points carry
arbitrarily corrupted residuals under the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import Dataset, clip_rows, solve_spd
from .estimators import DEFAULT_C1, private_distance_estimator
from .privacy import PrivacyBudget, derive_round_budget, gaussian_noise_std
from .rng import standard_normal


@dataclass
class BaselineConfig:
    """Dispatch record for the harness: which solver plus its knobs."""

    which: str
    T: int = 0
    eta: float = 0.0
    budget: Optional[PrivacyBudget] = None
    theta_schedule: Optional[Sequence[float]] = None
    row_bound: float = 1.0
    label_bound: float = 1.0

    _SOLVERS = ("ols", "sgd", "streaming_dp_sgd", "dp_ssp")

    def __post_init__(self):
        if self.which not in self._SOLVERS:
            raise ValueError(f"unknown baseline {self.which!r}")
        if self.which in ("streaming_dp_sgd", "dp_ssp") and self.budget is None:
            raise ValueError(f"{self.which} requires a privacy budget")
        if self.which == "dp_ssp" and self.row_bound <= 0:
            raise ValueError("dp_ssp requires a positive row_bound")


def ols(data: Dataset) -> np.ndarray:
    """Ordinary least squares through the normal equations."""
    X, y = data.covariates, data.responses
    return solve_spd(X.T @ X, X.T @ y)


def one_pass_sgd(
    data: Dataset, lambda_max: float, T: int, rng: np.random.Generator
) -> np.ndarray:
    """One-pass constant-step SGD with tail averaging.

    The shuffled data splits into T disjoint minibatches of floor(n/T) (each
    sample touched at most once); the step size is 1/(2*lambda_max); the
    output averages the last ceil(T/2) iterates.
    """
    if T < 1:
        raise ValueError("T must be a positive integer")
    if T > data.n:
        raise ValueError("T must not exceed the sample count")
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    eta = 1.0 / (2.0 * lambda_max)
    batch = data.n // T
    perm = rng.permutation(data.n)
    if __debug__:
        visited = np.zeros(data.n, dtype=bool)
    w = np.zeros(data.d)
    iterates = []
    for t in range(T):
        idx = perm[t * batch : (t + 1) * batch]
        if __debug__:
            assert not visited[idx].any(), "sample visited twice"
            visited[idx] = True
        X = data.covariates[idx]
        residual = X @ w - data.responses[idx]
        w = w - eta * (X.T @ residual) / batch
        iterates.append(w)
    tail = math.ceil(T / 2)
    return np.mean(iterates[-tail:], axis=0)


def streaming_dp_sgd(
    data: Dataset,
    budget: PrivacyBudget,
    T: int,
    theta_schedule: Union[None, float, Sequence[float]],
    lambda_max: float,
    rng: np.random.Generator,
    alpha_bar: float = 0.1,
    zeta: float = 0.05,
    C1: float = DEFAULT_C1,
) -> np.ndarray:
    """Streaming DP-SGD with whole-gradient norm clipping.

    Disjoint minibatches of floor(n/T); each round clips x_i * r_i to theta_t
    and adds Gaussian noise theta_t * sqrt(2 ln(1.25/delta0)) / (epsilon0 m).
    With ``theta_schedule`` unset, each minibatch is split in half: the first
    half feeds the private distance estimator to calibrate theta_t and the
    second takes the gradient step, so the round stays a parallel composition
    over disjoint data and each sample is still touched once.
    """
    if T < 1 or T > data.n:
        raise ValueError("need 1 <= T <= n")
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    round_budget = derive_round_budget(budget, T)
    eps0, delta0 = round_budget.epsilon0, round_budget.delta0
    eta = 1.0 / (2.0 * lambda_max)
    batch = data.n // T
    perm = rng.permutation(data.n)

    if theta_schedule is None:
        schedule = None
    elif np.isscalar(theta_schedule):
        schedule = [float(theta_schedule)] * T
    else:
        schedule = [float(v) for v in theta_schedule]
        if len(schedule) != T:
            raise ValueError("theta_schedule length must equal T")

    w = np.zeros(data.d)
    for t in range(T):
        idx = perm[t * batch : (t + 1) * batch]
        if schedule is None:
            half = len(idx) // 2
            if half == 0:
                raise ValueError("minibatch too small to split for calibration")
            cal, grad_idx = idx[:half], idx[half:]
            gamma_t = private_distance_estimator(
                data.subset(cal), w, eps0, delta0, alpha_bar, zeta / 3.0, rng, C1=C1
            )
            theta_t = 2.0 * math.sqrt(2.0 * gamma_t)
        else:
            theta_t = schedule[t]
            grad_idx = idx
        X = data.covariates[grad_idx]
        residual = X @ w - data.responses[grad_idx]
        grads = clip_rows(X * residual[:, None], theta_t)
        mean_grad = grads.mean(axis=0)
        std = gaussian_noise_std(theta_t / len(grad_idx), eps0, delta0)
        if std > 0.0:
            mean_grad = mean_grad + std * standard_normal(rng, data.d)
        w = w - eta * mean_grad
    return w


def dp_ssp(
    data: Dataset,
    budget: PrivacyBudget,
    row_bound: float,
    rng: np.random.Generator,
    label_bound: Optional[float] = None,
    eigen_floor: float = 1e-6,
) -> np.ndarray:
    """Sufficient-statistics perturbation: noise X'X and X'y, then solve.

    Rows are clipped to ``row_bound`` and labels to ``label_bound`` before the
    two releases, which each take half the budget (serial composition).  The
    noised Gram matrix is symmetrized and projected to SPD by clamping its
    eigenvalues at ``eigen_floor``.  With an infinite budget (zero noise) and
    an already-PD Gram matrix this reduces to OLS exactly.
    """
    if row_bound <= 0:
        raise ValueError("row_bound must be positive")
    if label_bound is None:
        label_bound = row_bound
    if label_bound <= 0:
        raise ValueError("label_bound must be positive")
    d = data.d
    X = clip_rows(data.covariates, row_bound)
    y = np.clip(data.responses, -label_bound, label_bound)
    gram = X.T @ X
    moment = X.T @ y

    eps_half, delta_half = budget.epsilon / 2.0, budget.delta / 2.0
    gram_std = gaussian_noise_std(row_bound * row_bound, eps_half, delta_half)
    moment_std = gaussian_noise_std(row_bound * label_bound, eps_half, delta_half)

    if gram_std > 0.0:
        iu = np.triu_indices(d)
        noisy_upper = gram[iu] + gram_std * standard_normal(rng, len(iu[0]))
        noisy = np.zeros((d, d))
        noisy[iu] = noisy_upper
        noisy = noisy + np.triu(noisy, 1).T  # mirror: symmetric by construction
        gram = noisy
    if moment_std > 0.0:
        moment = moment + moment_std * standard_normal(rng, d)

    if gram_std == 0.0 and moment_std == 0.0:
        try:
            return solve_spd(gram, moment)
        except ValueError:
            pass  # fall through to the eigenvalue projection
    vals, vecs = np.linalg.eigh(gram)
    vals = np.maximum(vals, eigen_floor)
    projected = (vecs * vals) @ vecs.T
    return solve_spd(projected, moment)
