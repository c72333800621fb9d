"""Robust and private full-batch gradient descent for linear regression.

Each run splits its dataset into three disjoint parts: one calibrates the
covariate-norm clipping threshold once, one re-estimates the residual
clipping threshold every round, and one supplies the clipped, noised
gradients.  Clipping the covariate norm and the residual magnitude
separately keeps the per-sample gradient sensitivity at Theta*theta_t while
denying small-covariate/large-residual points any outsized influence, which
is what makes the update robust to label corruption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Dataset, SubWeibullParams, clip_rows
from .estimators import (
    DEFAULT_C1,
    private_distance_estimator,
    private_norm_estimator,
)
from .privacy import PrivacyBudget, RoundBudget, derive_round_budget
from .rng import standard_normal

OVERFLOW_NORM = 1e8


class IterateOverflowError(RuntimeError):
    """An iterate grew past the overflow guard or went non-finite."""


@dataclass
class GDConfig:
    """Tuning for the robust private GD run.

    The step size comes either from ``eta`` directly or from
    ``1/(C_step * lambda_max)``.  ``alpha`` is the target error rate; it is
    also handed to the distance estimator as its corruption bound unless
    ``alpha_bar`` overrides it.  ``clip_scale`` shrinks the residual
    threshold below its theory value (a practical knob); ``known_trace``
    short-circuits the private norm estimator when the covariance trace is
    taken as known; ``partition_fractions`` reweights the three splits.
    """

    T: int
    budget: PrivacyBudget
    subweibull: SubWeibullParams
    alpha: float = 0.1
    eta: Optional[float] = None
    lambda_max: Optional[float] = None
    C_step: float = 2.0
    alpha_bar: Optional[float] = None
    C1: float = DEFAULT_C1
    C2: float = 1.0
    clip_scale: float = 1.0
    zeta: float = 0.05
    partition_fractions: tuple = (1 / 3, 1 / 3, 1 / 3)
    known_trace: Optional[float] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be a positive integer")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")
        if self.eta is None:
            if self.lambda_max is None:
                raise ValueError("provide eta or lambda_max")
            if self.C_step < 1.1:
                raise ValueError("C_step must be at least 1.1")
            if self.lambda_max <= 0:
                raise ValueError("lambda_max must be positive")
        elif self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.C1 <= 0 or self.C2 <= 0:
            raise ValueError("C1 and C2 must be positive")
        if self.clip_scale <= 0:
            raise ValueError("clip_scale must be positive")
        if not (0 < self.zeta < 1):
            raise ValueError("zeta must lie in (0, 1)")
        fr = tuple(float(f) for f in self.partition_fractions)
        if len(fr) != 3 or any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0):
            raise ValueError("partition_fractions must be three nonnegatives summing to 1")
        if fr[1] <= 0 or fr[2] <= 0:
            raise ValueError("the distance and gradient splits must be nonempty")
        if fr[0] == 0 and self.known_trace is None:
            raise ValueError("an empty norm split requires known_trace")
        self.partition_fractions = fr

    @property
    def step_size(self) -> float:
        if self.eta is not None:
            return self.eta
        return 1.0 / (self.C_step * self.lambda_max)

    @property
    def effective_alpha_bar(self) -> float:
        return self.alpha if self.alpha_bar is None else self.alpha_bar


@dataclass
class HeavyTailConfig(GDConfig):
    """GDConfig plus the resilience profile driving the heavy-tail threshold."""

    rho1: float = 0.0
    rho2: float = 0.0
    rho3: float = 0.0
    rho4: float = 0.0
    moment_k: int = 4
    kappa2: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        for name in ("rho1", "rho2", "rho3", "rho4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.moment_k < 4:
            raise ValueError("moment_k must be at least 4")
        if self.kappa2 <= 0:
            raise ValueError("kappa2 must be positive")


@dataclass
class IterateTrace:
    """Per-round diagnostics: iterates, thresholds, noise scales, clip stats."""

    Theta: float = 0.0
    Gamma: float = 0.0
    iterates: list = field(default_factory=list)  # w_t before each step
    gamma: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    max_clipped_grad_norm: list = field(default_factory=list)
    clipped_clean_count: list = field(default_factory=list)  # only with clean_mask
    split_indices: Optional[tuple] = None  # (s1, s2, s3) row indices

    def __len__(self) -> int:
        return len(self.theta)


def compute_norm_threshold(Gamma: float, K: float, a: float, n: int, zeta0: float) -> float:
    """Covariate-norm clip threshold K * sqrt(2*Gamma) * ln(n/zeta0)**a."""
    if Gamma <= 0:
        raise ValueError("Gamma must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    if n / zeta0 <= 1:
        raise ValueError("n/zeta0 must exceed 1 for a positive log")
    return K * math.sqrt(2.0 * Gamma) * math.log(n / zeta0) ** a


def compute_residual_threshold(
    gamma_t: float, alpha: float, K: float, a: float, C2: float, clip_scale: float = 1.0
) -> float:
    """Residual clip threshold 2*sqrt(2*gamma_t)*sqrt(9*C2*K^2*ln(1/(2a))^2a)."""
    if gamma_t <= 0:
        raise ValueError("gamma_t must be positive")
    if not (0 < alpha < 0.5):
        raise ValueError("alpha must lie in (0, 0.5) so ln(1/(2 alpha)) > 0")
    mult = math.sqrt(9.0 * C2 * K * K * math.log(1.0 / (2.0 * alpha)) ** (2.0 * a))
    return clip_scale * 2.0 * math.sqrt(2.0 * gamma_t) * mult


def compute_residual_threshold_ht(
    gamma_t: float, alpha: float, rho2: float, rho3: float, clip_scale: float = 1.0
) -> float:
    """Heavy-tail threshold 2*sqrt(2*gamma_t)*sqrt(max(8 rho2/a, 8 rho3/a) + 1)."""
    if gamma_t <= 0:
        raise ValueError("gamma_t must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    mult = math.sqrt(max(8.0 * rho2 / alpha, 8.0 * rho3 / alpha) + 1.0)
    return clip_scale * 2.0 * math.sqrt(2.0 * gamma_t) * mult


def noise_scale(Theta: float, theta_t: float, epsilon0: float, delta0: float, n: int) -> float:
    """Gradient noise scale sqrt(2 ln(1.25/delta0)) * Theta * theta_t / (epsilon0 n)."""
    if math.isinf(epsilon0):
        return 0.0
    return math.sqrt(2.0 * math.log(1.25 / delta0)) * Theta * theta_t / (epsilon0 * n)


def _clipped_gradients(
    w: np.ndarray, batch: Dataset, Theta: float, theta_t: float
) -> np.ndarray:
    """Per-sample two-sided-clipped gradients clip_Theta(x_i) * clip_theta(r_i)."""
    residuals = batch.covariates @ w - batch.responses
    clipped_res = np.clip(residuals, -theta_t, theta_t)
    clipped_x = clip_rows(batch.covariates, Theta)
    return clipped_x * clipped_res[:, None]


def _apply_update(
    w: np.ndarray,
    grads: np.ndarray,
    eta: float,
    phi_t: float,
    rng: np.random.Generator,
) -> np.ndarray:
    mean_grad = grads.mean(axis=0)
    if phi_t > 0.0:
        mean_grad = mean_grad + phi_t * standard_normal(rng, w.shape[0])
    return w - eta * mean_grad


def gd_step(
    w_t: np.ndarray,
    batch: Dataset,
    Theta: float,
    theta_t: float,
    eta: float,
    phi_t: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One clipped, noised full-batch gradient step."""
    if batch.n == 0:
        raise ValueError("gd_step requires a nonempty batch")
    if Theta <= 0 or theta_t <= 0 or eta <= 0:
        raise ValueError("Theta, theta_t and eta must be positive")
    w_t = np.asarray(w_t, dtype=np.float64)
    grads = _clipped_gradients(w_t, batch, Theta, theta_t)
    return _apply_update(w_t, grads, eta, phi_t, rng)


def _split_three(
    data: Dataset,
    fractions,
    rng: np.random.Generator,
    clean_mask: Optional[np.ndarray],
):
    """Seeded shuffle, then contiguous splits by the requested fractions."""
    n = data.n
    perm = rng.permutation(n)
    n1 = int(math.floor(fractions[0] * n))
    n2 = int(math.floor(fractions[1] * n))
    n3 = int(math.floor(fractions[2] * n))
    idx1 = perm[:n1]
    idx2 = perm[n1 : n1 + n2]
    idx3 = perm[n1 + n2 : n1 + n2 + n3]
    mask3 = clean_mask[idx3] if clean_mask is not None else None
    return data.subset(idx1), data.subset(idx2), data.subset(idx3), mask3, (idx1, idx2, idx3)


def _run_engine(
    data: Dataset,
    config: GDConfig,
    threshold_fn: Callable[[float], float],
    rng: np.random.Generator,
    clean_mask: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Shared loop behind the light-tailed and heavy-tailed entry points."""
    if data.n < 3:
        raise ValueError("need at least 3 samples to form three splits")
    if clean_mask is not None:
        clean_mask = np.asarray(clean_mask, dtype=bool)
        if clean_mask.shape[0] != data.n:
            raise ValueError("clean_mask length must match the dataset")

    round_budget: RoundBudget = derive_round_budget(config.budget, config.T)
    eps0, delta0 = round_budget.epsilon0, round_budget.delta0
    zeta0 = config.zeta / 3.0
    K, a = config.subweibull.K, config.subweibull.a
    eta = config.step_size

    s1, s2, s3, mask3, split_idx = _split_three(
        data, config.partition_fractions, rng, clean_mask
    )
    n3 = s3.n
    if s2.n == 0 or n3 == 0:
        raise ValueError("distance and gradient splits came out empty")

    if config.known_trace is not None:
        Gamma = float(config.known_trace)
        if Gamma <= 0:
            raise ValueError("known_trace must be positive")
    else:
        Gamma = private_norm_estimator(s1, eps0, delta0, zeta0, rng, C1=config.C1)
    Theta = compute_norm_threshold(Gamma, K, a, n3, zeta0)

    trace = IterateTrace(Theta=Theta, Gamma=Gamma, split_indices=split_idx)
    w = np.zeros(data.d)
    for t in range(config.T):
        gamma_t = private_distance_estimator(
            s2,
            w,
            eps0,
            delta0,
            config.effective_alpha_bar,
            zeta0,
            rng,
            C1=config.C1,
        )
        theta_t = threshold_fn(gamma_t)
        phi_t = noise_scale(Theta, theta_t, eps0, delta0, n3)

        grads = _clipped_gradients(w, s3, Theta, theta_t)
        trace.iterates.append(w.copy())
        trace.gamma.append(gamma_t)
        trace.theta.append(theta_t)
        trace.phi.append(phi_t)
        trace.max_clipped_grad_norm.append(float(np.linalg.norm(grads, axis=1).max()))
        if mask3 is not None:
            residuals = s3.covariates @ w - s3.responses
            n_clipped = int((np.abs(residuals[mask3]) >= theta_t).sum())
            trace.clipped_clean_count.append(n_clipped)

        w = _apply_update(w, grads, eta, phi_t, rng)
        if not np.isfinite(w).all() or np.linalg.norm(w) > OVERFLOW_NORM:
            raise IterateOverflowError(
                f"iterate overflowed at round {t} (norm {np.linalg.norm(w):.3e})"
            )
    return w, trace


def dp_robust_gd(
    data: Dataset,
    config: GDConfig,
    rng: np.random.Generator,
    clean_mask: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Robust private linear regression with the sub-Weibull threshold rule.

    Returns the final iterate and the full trace.  Estimator failures
    (EmptyHistogramError) and iterate overflow propagate as exceptions with
    diagnostics; callers that sweep grids should catch and record them.
    """
    K, a = config.subweibull.K, config.subweibull.a

    def threshold(gamma_t: float) -> float:
        return compute_residual_threshold(
            gamma_t, config.alpha, K, a, config.C2, config.clip_scale
        )

    return _run_engine(data, config, threshold, rng, clean_mask)


def dp_robust_gd_ht(
    data: Dataset,
    config: HeavyTailConfig,
    rng: np.random.Generator,
    clean_mask: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Heavy-tailed variant: same skeleton, resilience-profile threshold rule."""

    def threshold(gamma_t: float) -> float:
        return compute_residual_threshold_ht(
            gamma_t, config.alpha, config.rho2, config.rho3, config.clip_scale
        )

    return _run_engine(data, config, threshold, rng, clean_mask)


def best_iterate(trace: IterateTrace) -> np.ndarray:
    """The iterate whose distance estimate gamma_t was smallest.

    Ties (frequent, since gamma is quantized to bin endpoints) break toward
    the latest round, which has contracted the longest.
    """
    if not trace.gamma:
        raise ValueError("trace holds no rounds")
    gamma = np.asarray(trace.gamma)
    best = int(np.flatnonzero(gamma == gamma.min())[-1])
    return trace.iterates[best]


def default_iterations(kappa: float, n: int) -> int:
    """Default round count T = ceil(3 * kappa * ln n)."""
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if n < 2:
        raise ValueError("n must be at least 2")
    return math.ceil(3.0 * kappa * math.log(n))
