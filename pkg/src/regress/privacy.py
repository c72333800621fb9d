"""Differential-privacy primitives.

The Gaussian mechanism, Laplace noise, a stability-based private histogram
over geometric or arithmetic bin families, and the per-round budget split
that turns an end-to-end (epsilon, delta) guarantee into T composable
(epsilon0, delta0) rounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .rng import laplace as _laplace_draw
from .rng import standard_normal


@dataclass(frozen=True)
class PrivacyBudget:
    """End-to-end (epsilon, delta).  epsilon = inf disables noise entirely."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class RoundBudget:
    """Per-round (epsilon0, delta0) for T rounds of composition.

    Constructed through :func:`derive_round_budget`; the fields satisfy
    delta0 = delta/(2T) and epsilon0 = epsilon/(4 sqrt(T ln(1/delta0))).
    """

    epsilon0: float
    delta0: float
    rounds: int

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if not (0 < self.delta0 < 1):
            raise ValueError("delta0 must lie in (0, 1)")
        if self.rounds < 1:
            raise ValueError("rounds must be a positive integer")


def derive_round_budget(budget: PrivacyBudget, T: int) -> RoundBudget:
    """Split (epsilon, delta) into T rounds by advanced composition.

    delta0 = delta/(2T); epsilon0 = epsilon/(4 sqrt(T ln(1/delta0))).
    The composition lemma's epsilon <= 0.9 smallness condition is not
    enforced, matching how the split is applied unconditionally upstream.
    """
    if T < 1:
        raise ValueError("T must be a positive integer")
    delta0 = budget.delta / (2 * T)
    if delta0 >= 1:
        raise ValueError("delta/(2T) must be below 1")
    epsilon0 = budget.epsilon / (4.0 * math.sqrt(T * math.log(1.0 / delta0)))
    return RoundBudget(epsilon0=epsilon0, delta0=delta0, rounds=T)


def compose_serial(budgets) -> tuple[float, float]:
    """Basic serial composition: epsilons and deltas add."""
    eps = sum(b.epsilon for b in budgets)
    delta = sum(b.delta for b in budgets)
    return eps, delta


def compose_parallel(budgets) -> tuple[float, float]:
    """Parallel composition over disjoint data: the max of each parameter."""
    eps = max(b.epsilon for b in budgets)
    delta = max(b.delta for b in budgets)
    return eps, delta


def gaussian_noise_std(sensitivity: float, epsilon: float, delta: float) -> float:
    """Noise scale sensitivity * sqrt(2 ln(1.25/delta)) / epsilon."""
    if sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    if sensitivity == 0:
        return 0.0
    if math.isinf(epsilon):
        return 0.0
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def gaussian_mechanism(
    value: np.ndarray,
    sensitivity: float,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Add calibrated i.i.d. normal noise to a vector-valued query.

    Zero sensitivity (or infinite epsilon) returns the value unchanged and
    consumes no randomness, which keeps seeded streams aligned between noisy
    and noise-free runs.
    """
    value = np.asarray(value, dtype=np.float64)
    std = gaussian_noise_std(sensitivity, epsilon, delta)
    if std == 0.0:
        return value.copy()
    return value + std * standard_normal(rng, value.shape)


def laplace_noise(scale: float, rng: np.random.Generator) -> float:
    """One symmetric Laplace draw with P(|Y| >= h*scale) = exp(-h)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    return float(_laplace_draw(rng, scale))


ZERO_BIN = None  # bin index marker for the singleton [0, 0] bin


def _dyadic_exponent(base: float):
    """Detect base == 2**(num/den) for a small dyadic fraction num/den.

    Both estimator bin families (base 2 and base 2**(1/4)) are powers of two,
    and computing their endpoints as 2.0**(i*num/den) keeps integer powers of
    two exact (e.g. the bin starting at 4.0 really starts at 4.0).
    """
    r = math.log2(base)
    for den in (1, 2, 4, 8, 16):
        num = round(r * den)
        if num > 0 and abs(r * den - num) < 1e-12 and 2.0 ** (num / den) == base:
            return num, den
    return None


def geometric_bin_index(v: float, base: float) -> Optional[int]:
    """Index i with base**i <= v < base**(i+1); exact powers start their bin.

    v = 0 maps to the zero-bin marker.  The log is corrected so the bracket
    invariant holds exactly in floating point.
    """
    return BinFamily.geometric(base).index_of(v)


@dataclass(frozen=True)
class BinFamily:
    """Disjoint bins covering [0, inf) plus the distinguished [0, 0] bin.

    ``geometric``: [base**i, base**(i+1)) for integer i.
    ``arithmetic``: [i*width, (i+1)*width) for integer i >= 0.
    """

    kind: str
    base: float = 2.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("geometric", "arithmetic"):
            raise ValueError(f"unknown bin family {self.kind!r}")
        if self.kind == "geometric" and self.base <= 1:
            raise ValueError("geometric base must exceed 1")
        if self.kind == "arithmetic" and self.width <= 0:
            raise ValueError("arithmetic width must be positive")

    @classmethod
    def geometric(cls, base: float) -> "BinFamily":
        return cls("geometric", base=base)

    @classmethod
    def arithmetic(cls, width: float) -> "BinFamily":
        return cls("arithmetic", width=width)

    def _power(self, index) -> float:
        dyadic = _dyadic_exponent(self.base)
        if dyadic is not None:
            num, den = dyadic
            return 2.0 ** (index * num / den)
        return self.base ** index

    def index_of(self, v: float) -> Optional[int]:
        if v < 0:
            raise ValueError("bins cover [0, inf) only")
        if v == 0:
            return ZERO_BIN
        if self.kind == "arithmetic":
            return int(math.floor(v / self.width))
        i = math.floor(math.log(v) / math.log(self.base))
        while self._power(i) > v:
            i -= 1
        while self._power(i + 1) <= v:
            i += 1
        return i

    def indices_of(self, values: np.ndarray) -> np.ndarray:
        """Vectorized index_of over positive values (zero handled by callers)."""
        v = np.asarray(values, dtype=np.float64)
        if (v <= 0).any():
            raise ValueError("vectorized binning expects strictly positive values")
        if self.kind == "arithmetic":
            return np.floor(v / self.width).astype(np.int64)
        dyadic = _dyadic_exponent(self.base)
        if dyadic is not None:
            num, den = dyadic
            i = np.floor(np.log2(v) * den / num).astype(np.int64)
            power = lambda j: np.power(2.0, j * (num / den))  # noqa: E731
        else:
            i = np.floor(np.log(v) / math.log(self.base)).astype(np.int64)
            power = lambda j: np.power(self.base, j.astype(np.float64))  # noqa: E731
        # settle floating-point edge cases so base**i <= v < base**(i+1) exactly
        for _ in range(4):
            over = power(i + 1) <= v
            under = power(i) > v
            if not (over.any() or under.any()):
                break
            i = i + over.astype(np.int64) - under.astype(np.int64)
        return i

    def interval(self, index: Optional[int]) -> tuple[float, float]:
        if index is ZERO_BIN:
            return (0.0, 0.0)
        if self.kind == "geometric":
            return (self._power(index), self._power(index + 1))
        return (index * self.width, (index + 1) * self.width)


@dataclass
class HistogramRelease:
    """Stability-histogram output.

    ``noisy_proportions`` holds only bins that were nonempty in the raw
    histogram (noise is added to nonempty bins only); thresholded-away bins
    appear with value 0.  ``argmax_bin`` is the surviving bin interval with
    the largest noisy proportion, or None when everything was zeroed.
    """

    noisy_proportions: dict = field(default_factory=dict)
    argmax_bin: Optional[tuple[float, float]] = None


def _bin_sort_key(bins: BinFamily, index) -> float:
    return bins.interval(index)[0]


def stable_histogram(
    points,
    bins: BinFamily,
    epsilon0: float,
    delta0: float,
    rng: np.random.Generator,
) -> HistogramRelease:
    """Stability-based private histogram over nonnegative reals.

    Raw proportions over nonempty bins get Laplace(2/(epsilon0*m)) noise;
    noisy proportions strictly below (2 ln(2/delta0))/(epsilon0*m) + 1/m are
    zeroed.  Ties for the argmax break toward the smaller left endpoint.
    With epsilon0 = inf the release is exact (zero noise, threshold 1/m) and
    consumes no randomness.
    """
    points = np.asarray(points, dtype=np.float64)
    if not (0 < delta0 < 1):
        raise ValueError("delta0 must lie in (0, 1)")
    m = points.shape[0]
    if m == 0:
        return HistogramRelease({}, None)
    if (points < 0).any():
        raise ValueError("histogram points must be nonnegative")
    if delta0 >= 1.0 / m:
        warnings.warn(
            f"stability histogram expects delta0 < 1/m (delta0={delta0}, m={m})",
            RuntimeWarning,
            stacklevel=2,
        )

    counts: dict = {}
    n_zero = int((points == 0).sum())
    if n_zero:
        counts[ZERO_BIN] = n_zero
    positive = points[points > 0]
    if positive.size:
        idx, idx_counts = np.unique(bins.indices_of(positive), return_counts=True)
        for i, c in zip(idx, idx_counts):
            counts[int(i)] = int(c)

    if math.isinf(epsilon0):
        noise_scale = 0.0
        tau = 1.0 / m
    else:
        noise_scale = 2.0 / (epsilon0 * m)
        tau = 2.0 * math.log(2.0 / delta0) / (epsilon0 * m) + 1.0 / m

    ordered = sorted(counts, key=lambda idx: _bin_sort_key(bins, idx))
    noisy: dict = {}
    for idx in ordered:
        p = counts[idx] / m
        if noise_scale > 0.0:
            p += float(_laplace_draw(rng, noise_scale))
        noisy[idx] = p if p >= tau else 0.0

    argmax_bin = None
    best = 0.0
    for idx in ordered:  # ordered by left endpoint: ties keep the smaller
        if noisy[idx] > best:
            best = noisy[idx]
            argmax_bin = bins.interval(idx)
    return HistogramRelease(noisy_proportions=noisy, argmax_bin=argmax_bin)
