"""Synthetic data generation, label-corruption adversaries, resilience audit.

Covariates are Gaussian with a configurable covariance (optionally projected
to the unit sphere); label noise is Gaussian, uniform, or a symmetrized
Pareto rescaled to the requested variance.  Corruption only ever rewrites
responses; covariates pass through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.linalg import cholesky as _cholesky

from .core import Dataset, ModelSpec
from .rng import open_uniform, standard_normal


@dataclass(frozen=True)
class CorruptionSpec:
    """Which labels an adversary rewrites and what it writes there."""

    kind: str  # constant_label | quantile_targeted | instance_flip
    fraction: float = 0.0
    value: float = 1000.0

    _KINDS = ("constant_label", "quantile_targeted", "instance_flip")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not (0 <= self.fraction < 0.5):
            raise ValueError("corruption fraction must lie in [0, 0.5)")
        if not math.isfinite(self.value):
            raise ValueError("corruption value must be finite")


@dataclass(frozen=True)
class ResilienceProfile:
    """Empirical resilience constants (rho1..rho4) at subset level alpha."""

    rho1: float
    rho2: float
    rho3: float
    rho4: float
    alpha: float

    def __post_init__(self):
        for name in ("rho1", "rho2", "rho3", "rho4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def condition_number_covariance(kappa: float, d: int) -> np.ndarray:
    """Diagonal covariance with a single large eigenvalue: diag(kappa, 1, ..., 1)."""
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    cov = np.eye(d)
    cov[0, 0] = kappa
    return cov


def _sample_noise(spec: ModelSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    fam = spec.noise_family
    if spec.sigma == 0:
        return np.zeros(n)
    if fam.kind == "gaussian":
        return spec.sigma * standard_normal(rng, n)
    if fam.kind == "uniform":
        return spec.sigma * (2.0 * open_uniform(rng, n) - 1.0)
    # Symmetrized Pareto with tail index k+1: the k-th moment is the last
    # finite one.  Rescaled so the variance equals sigma^2.
    m = fam.k + 1
    magnitude = open_uniform(rng, n) ** (-1.0 / m)
    sign = np.where(open_uniform(rng, n) < 0.5, -1.0, 1.0)
    std = math.sqrt(m / (m - 2.0))
    return spec.sigma * sign * magnitude / std


def sample_linear_model(spec: ModelSpec, n: int, rng: np.random.Generator) -> Dataset:
    """Draw n rows of y = x.w* + z with x ~ N(0, Sigma), optionally projected."""
    if n < 1:
        raise ValueError("n must be at least 1")
    L = _cholesky(spec.covariance, lower=True)
    X = standard_normal(rng, (n, spec.d)) @ L.T
    if spec.project_covariates_to_sphere:
        norms = np.linalg.norm(X, axis=1)
        norms[norms == 0] = 1.0
        X = X / norms[:, None]
    z = _sample_noise(spec, n, rng)
    y = X @ spec.w_star + z
    return Dataset(X, y)


def corrupt_labels(
    data: Dataset, spec: CorruptionSpec, rng: np.random.Generator
) -> tuple[Dataset, np.ndarray]:
    """Rewrite floor(fraction * n) responses; covariates are never touched.

    constant_label picks victims uniformly at random; quantile_targeted picks
    the smallest-covariate-norm rows, the points best placed to slip under a
    whole-gradient norm clip.  Returns the corrupted copy and the victim
    index set.
    """
    if spec.kind == "instance_flip":
        raise ValueError("instance_flip corruption is applied by instance_flip_corrupt")
    n = data.n
    m = int(math.floor(spec.fraction * n))
    if m == 0:
        return Dataset(data.covariates.copy(), data.responses.copy()), np.empty(0, dtype=int)
    if spec.kind == "constant_label":
        indices = np.sort(rng.choice(n, size=m, replace=False))
    else:
        norms = np.linalg.norm(data.covariates, axis=1)
        indices = np.sort(np.argsort(norms, kind="stable")[:m])
    responses = data.responses.copy()
    responses[indices] = spec.value
    return Dataset(data.covariates.copy(), responses), indices


def hard_instance_sample(
    alpha: float, sigma: float, sign: int, n: int, rng: np.random.Generator
) -> Dataset:
    """Two-dimensional instance whose sign twin is alpha-corruption-reachable.

    First covariate uniform on [-1, 1].  Second covariate puts mass alpha on
    the atoms {-1, +1} (split evenly) and the remaining mass uniform on
    [-sigma, sigma].  Labels follow w* = (1, sign) with uniform noise on
    [-sigma, sigma].
    """
    if not (0 < alpha < 0.5):
        raise ValueError("alpha must lie in (0, 0.5)")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x1 = 2.0 * open_uniform(rng, n) - 1.0
    u = open_uniform(rng, n)
    spread = sigma * (2.0 * open_uniform(rng, n) - 1.0)
    x2 = np.where(u < alpha, np.where(u < alpha / 2.0, -1.0, 1.0), spread)
    z = sigma * (2.0 * open_uniform(rng, n) - 1.0)
    y = x1 + sign * x2 + z
    return Dataset(np.column_stack([x1, x2]), y)


def hard_instance_covariance(alpha: float, sigma: float) -> np.ndarray:
    """Analytic covariance of the hard instance's covariates."""
    return np.diag([1.0 / 3.0, alpha + (1.0 - alpha) * sigma * sigma / 3.0])


def instance_flip_corrupt(data: Dataset, sign: int) -> Dataset:
    """Relabel the atom rows so the dataset matches the sign-flipped instance.

    Rows with the second covariate off the atoms have the same conditional
    label law in both instances up to O(sigma), so only atom rows (at most an
    alpha fraction) change: y -> y - 2 * sign * x2.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    x2 = data.covariates[:, 1]
    atoms = np.abs(x2) == 1.0
    responses = data.responses.copy()
    responses[atoms] -= 2.0 * sign * x2[atoms]
    return Dataset(data.covariates.copy(), responses)


def _resilience_stats(
    X: np.ndarray,
    residuals: np.ndarray,
    sigma: float,
    cov_inv_sqrt: np.ndarray,
) -> tuple[float, float, float, float]:
    """Exact per-subset suprema of the four resilience deviations.

    The direction suprema have closed forms: whitening by Sigma^(-1/2) turns
    the rho1/rho4 maxima into plain Euclidean norms and the rho2 maximum into
    the spectral deviation of the whitened second moment from the identity.
    """
    m = X.shape[0]
    white = X @ cov_inv_sqrt
    rho1 = float(np.linalg.norm(white.T @ residuals / m)) / sigma
    M = white.T @ white / m - np.eye(X.shape[1])
    rho2 = float(np.abs(np.linalg.eigvalsh(M)).max())
    rho3 = abs(float(residuals @ residuals / m) - sigma * sigma) / (sigma * sigma)
    rho4 = float(np.linalg.norm(white.mean(axis=0)))
    return rho1, rho2, rho3, rho4


def inverse_sqrt_spd(cov: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix via eigendecomposition."""
    vals, vecs = np.linalg.eigh(cov)
    if (vals <= 0).any():
        raise ValueError("matrix is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


def resilience_audit(
    data: Dataset,
    spec: ModelSpec,
    alpha: float,
    trials: int,
    rng: np.random.Generator,
) -> ResilienceProfile:
    """Empirical lower-bound audit of the resilience constants.

    Evaluates the four deviation statistics exactly (closed-form worst-case
    directions) on subsets of size ceil((1-alpha)*n) and returns the maxima.
    When the number of distinct subsets fits within ``trials`` they are all
    enumerated, making the audit exhaustive; otherwise subsets are drawn at
    random, so the result is a lower bound, not a certificate.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not (0 <= alpha < 1):
        raise ValueError("alpha must lie in [0, 1)")
    n = data.n
    size = math.ceil((1.0 - alpha) * n)
    if size < 1:
        raise ValueError("subset size must be at least 1")
    residuals = data.responses - data.covariates @ spec.w_star
    inv_sqrt = inverse_sqrt_spd(spec.covariance)

    maxima = np.zeros(4)
    if math.comb(n, size) <= trials:
        subset_iter = (np.array(c) for c in combinations(range(n), size))
    else:
        subset_iter = (
            np.sort(rng.choice(n, size=size, replace=False)) for _ in range(trials)
        )
    for idx in subset_iter:
        stats = _resilience_stats(
            data.covariates[idx], residuals[idx], spec.sigma, inv_sqrt
        )
        maxima = np.maximum(maxima, stats)
    return ResilienceProfile(
        rho1=float(maxima[0]),
        rho2=float(maxima[1]),
        rho3=float(maxima[2]),
        rho4=float(maxima[3]),
        alpha=alpha,
    )


def save_csv(data: Dataset, path) -> None:
    """Write the dataset as CSV with header x0..x{d-1},y (round-trip floats)."""
    header = ",".join([f"x{j}" for j in range(data.d)] + ["y"])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(data.n):
            row = [repr(float(v)) for v in data.covariates[i]]
            row.append(repr(float(data.responses[i])))
            fh.write(",".join(row) + "\n")


def load_csv(path) -> Dataset:
    """Read a dataset written by :func:`save_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = header.split(",")
        if len(columns) < 2 or columns[-1] != "y":
            raise ValueError(f"unexpected dataset header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    raw = np.array([[float(v) for v in row] for row in rows])
    if raw.ndim != 2 or raw.shape[1] != len(columns):
        raise ValueError("ragged or empty dataset file")
    return Dataset(raw[:, :-1], raw[:, -1])
