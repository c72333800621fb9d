"""Private calibrators for the adaptive clipping thresholds.

Two estimators share one recipe: reduce each sample to a nonnegative scalar,
split the scalars into k random equal partitions, summarize each partition,
and release the left endpoint of the most popular geometric bin through the
stability histogram.

* norm estimator: scalars ||x_i||^2, partition means, bins of base 2**(1/4);
  brackets the covariance trace within a factor sqrt(2).
* distance estimator: scalars (y_i - w_t.x_i)^2, partition means trimmed at
  the (1 - 3*alpha_bar) nearest-rank quantile, bins of base 2; brackets
  ||w_t - w*||_Sigma^2 + sigma^2 within a factor 4 and survives label
  corruption because trimming discards the inflated residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .privacy import BinFamily, stable_histogram

DEFAULT_C1 = 8.0

NORM_BIN_BASE = 2.0 ** 0.25
DISTANCE_BIN_BASE = 2.0


class EmptyHistogramError(RuntimeError):
    """The private histogram zeroed every bin; no estimate can be released."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Calibrator tuning: partition constant C1, corruption bound, failure prob."""

    C1: float = DEFAULT_C1
    alpha_bar: float = 0.05
    zeta: float = 0.05

    def __post_init__(self):
        if self.C1 <= 0:
            raise ValueError("C1 must be positive")
        if not (0 < self.alpha_bar <= 0.1):
            raise ValueError("alpha_bar must lie in (0, 1/10]")
        if not (0 < self.zeta < 1):
            raise ValueError("zeta must lie in (0, 1)")


def partition_count(
    epsilon0: float, delta0: float, zeta: float, C1: float, *, ceil: bool
) -> int:
    """k = C1 * ln(1/(delta0*zeta)) / epsilon0, floored or ceiled.

    The norm estimator floors, the distance estimator ceils.  In the
    noise-free limit (epsilon0 = inf) a single partition is used.
    """
    if math.isinf(epsilon0):
        return 1
    raw = C1 * math.log(1.0 / (delta0 * zeta)) / epsilon0
    k = math.ceil(raw) if ceil else math.floor(raw)
    return max(k, 1)


def _random_partitions(values: np.ndarray, k: int, rng: np.random.Generator):
    """Split scalars into k uniformly random equal blocks, dropping remainder.

    The values are canonically sorted before the seeded shuffle, so the
    partition (and everything downstream) is invariant to the order in which
    the dataset rows arrived.
    """
    m = values.shape[0]
    block = m // k
    if block == 0:
        raise ValueError(f"need at least k={k} samples, got {m}")
    canon = np.sort(values)
    perm = rng.permutation(m)
    shuffled = canon[perm][: k * block]
    return shuffled.reshape(k, block)


def _trimmed_partition_means(groups: np.ndarray, q: float) -> np.ndarray:
    """Vectorized per-row quantile trim and mean over a k x B block matrix.

    Row j computes trimmed_mean_below(row, quantile_nearest_rank(row, q)):
    sort the row, take the nearest-rank element psi, average everything at or
    below psi against the full block size.
    """
    k, block = groups.shape
    idx = min(max(math.ceil(q * block) - 1, 0), block - 1)
    ordered = np.sort(groups, axis=1)
    psi = ordered[:, idx]
    kept = np.where(ordered <= psi[:, None], ordered, 0.0)
    return kept.sum(axis=1) / block


def private_norm_estimator(
    data: Dataset,
    epsilon0: float,
    delta0: float,
    zeta: float,
    rng: np.random.Generator,
    C1: float = DEFAULT_C1,
) -> float:
    """Estimate the average squared covariate norm (the covariance trace).

    Returns the left endpoint of the winning geometric bin (base 2**(1/4)).
    Raises EmptyHistogramError when the private histogram releases nothing
    and ValueError when the sample is smaller than the partition count.
    """
    k = partition_count(epsilon0, delta0, zeta, C1, ceil=False)
    if data.n < k:
        raise ValueError(
            f"norm estimator needs n >= k partitions (n={data.n}, k={k})"
        )
    sq_norms = np.einsum("ij,ij->i", data.covariates, data.covariates)
    groups = _random_partitions(sq_norms, k, rng)
    means = groups.mean(axis=1)
    release = stable_histogram(
        means, BinFamily.geometric(NORM_BIN_BASE), epsilon0, delta0, rng
    )
    if release.argmax_bin is None:
        raise EmptyHistogramError("norm estimator: all histogram bins were zeroed")
    return release.argmax_bin[0]


def private_distance_estimator(
    data: Dataset,
    w_t: np.ndarray,
    epsilon0: float,
    delta0: float,
    alpha_bar: float,
    zeta: float,
    rng: np.random.Generator,
    C1: float = DEFAULT_C1,
) -> float:
    """Estimate ||w_t - w*||_Sigma^2 + sigma^2 from trimmed squared residuals.

    Per partition, residuals above the (1 - 3*alpha_bar) nearest-rank
    quantile are trimmed (the divisor stays the full block size) before the
    stability histogram picks the most popular base-2 bin.  Returns the bin's
    left endpoint; raises EmptyHistogramError on an empty release.
    """
    if not (0 < alpha_bar <= 0.1):
        raise ValueError("alpha_bar must lie in (0, 1/10]")
    k = partition_count(epsilon0, delta0, zeta, C1, ceil=True)
    if data.n < k:
        raise ValueError(
            f"distance estimator needs n >= k partitions (n={data.n}, k={k})"
        )
    w_t = np.asarray(w_t, dtype=np.float64)
    residuals = data.responses - data.covariates @ w_t
    b = residuals * residuals
    groups = _random_partitions(b, k, rng)
    stats = _trimmed_partition_means(groups, 1.0 - 3.0 * alpha_bar)
    release = stable_histogram(
        stats, BinFamily.geometric(DISTANCE_BIN_BASE), epsilon0, delta0, rng
    )
    if release.argmax_bin is None:
        raise EmptyHistogramError(
            "distance estimator: all histogram bins were zeroed"
        )
    return release.argmax_bin[0]
