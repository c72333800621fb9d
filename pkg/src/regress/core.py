"""Shared numerical types and elementary operations.

Everything here is a pure function on plain float64 numpy arrays: the clip
operators, the covariance-weighted error metric, nearest-rank quantiles,
threshold-trimmed means, and a dense SPD solve.  Matrices are dense and
row-major; dimensions are expected to stay in the hundreds at most.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky as _cholesky
from scipy.linalg.lapack import dpotrf, dpotrs


class NotSPDError(ValueError):
    """Raised when a Cholesky factorization hits a nonpositive pivot."""


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {m.shape}")
    return m


def _as_vector(v) -> np.ndarray:
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d array, got shape {x.shape}")
    return x


@dataclass
class Dataset:
    """Covariate matrix (n x d) paired with a response vector (n,)."""

    covariates: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        self.covariates = _as_matrix(self.covariates)
        self.responses = _as_vector(self.responses)
        if self.covariates.shape[0] != self.responses.shape[0]:
            raise ValueError(
                f"{self.covariates.shape[0]} covariate rows vs "
                f"{self.responses.shape[0]} responses"
            )
        if not np.isfinite(self.covariates).all():
            raise ValueError("covariates contain non-finite entries")
        if not np.isfinite(self.responses).all():
            raise ValueError("responses contain non-finite entries")

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.covariates[indices], self.responses[indices])


@dataclass(frozen=True)
class NoiseFamily:
    """Label-noise family: gaussian, uniform, or symmetrized-Pareto heavy tail.

    For the heavy-tailed family, ``k`` is the highest finite moment order
    (tail index k+1) and ``kappa2`` the hypercontractivity constant carried
    along as configuration.
    """

    kind: str
    k: int = 4
    kappa2: float = 1.0

    _KINDS = ("gaussian", "uniform", "heavy_tailed")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown noise family {self.kind!r}")
        if self.kind == "heavy_tailed":
            if self.k < 4:
                raise ValueError("heavy-tailed noise requires k >= 4")
            if self.kappa2 <= 0:
                raise ValueError("kappa2 must be positive")

    @classmethod
    def gaussian(cls) -> "NoiseFamily":
        return cls("gaussian")

    @classmethod
    def uniform(cls) -> "NoiseFamily":
        return cls("uniform")

    @classmethod
    def heavy_tailed(cls, k: int = 4, kappa2: float = 1.0) -> "NoiseFamily":
        return cls("heavy_tailed", k=k, kappa2=kappa2)


@dataclass
class ModelSpec:
    """Ground-truth generative parameters for synthesis and error measurement."""

    w_star: np.ndarray
    sigma: float
    covariance: np.ndarray
    noise_family: NoiseFamily = field(default_factory=NoiseFamily.uniform)
    project_covariates_to_sphere: bool = False

    def __post_init__(self):
        self.w_star = _as_vector(self.w_star)
        self.covariance = _as_matrix(self.covariance)
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        d = self.w_star.shape[0]
        if self.covariance.shape != (d, d):
            raise ValueError("covariance shape does not match w_star")
        if not np.isfinite(self.w_star).all():
            raise ValueError("w_star contains non-finite entries")
        # SPD check: Cholesky must succeed.
        try:
            _cholesky(self.covariance, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"covariance is not SPD: {exc}") from exc

    @property
    def d(self) -> int:
        return self.w_star.shape[0]


@dataclass(frozen=True)
class SubWeibullParams:
    """Tail parameters (K, a); a = 0.5 recovers the sub-Gaussian family."""

    K: float
    a: float

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.a < 0.5:
            raise ValueError("a must be at least 0.5")


def clip_vector(x: np.ndarray, a: float) -> np.ndarray:
    """Rescale x onto the ball of radius a: x * min(1, a/||x||)."""
    if a < 0:
        raise ValueError("clip threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm <= a:
        return x.copy()
    if norm == 0.0:
        return x.copy()
    return x * (a / norm)


def clip_rows(x: np.ndarray, a: float) -> np.ndarray:
    """Row-wise vector clip for an n x d matrix."""
    if a < 0:
        raise ValueError("clip threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    scale = np.ones_like(norms)
    over = norms > a
    # a = 0 with zero rows stays finite: scale only where norm > a >= 0.
    scale[over] = a / norms[over]
    return x * scale[:, None]


def clip_scalar(r: float, a: float) -> float:
    """Clamp magnitude while preserving sign: sign(r) * min(|r|, a)."""
    if a < 0:
        raise ValueError("clip threshold must be nonnegative")
    return float(math.copysign(min(abs(r), a), r))


def sigma_norm_error(w: np.ndarray, w_star: np.ndarray, covariance: np.ndarray) -> float:
    """Covariance-weighted parameter error sqrt((w-w*)' Sigma (w-w*))."""
    w = _as_vector(w)
    w_star = _as_vector(w_star)
    cov = _as_matrix(covariance)
    if w.shape != w_star.shape or cov.shape != (w.shape[0], w.shape[0]):
        raise ValueError("dimension mismatch between w, w_star, covariance")
    diff = w - w_star
    quad = float(diff @ cov @ diff)
    return math.sqrt(max(quad, 0.0))


def quantile_nearest_rank(values, q: float) -> float:
    """Nearest-rank quantile: sorted ascending, element ceil(q*m) - 1.

    The index is clamped to [0, m-1], so q = 0 gives the min and q = 1 the
    max.  The result is always an element of ``values``.
    """
    v = _as_vector(values)
    m = v.shape[0]
    if m == 0:
        raise ValueError("quantile of empty input")
    idx = math.ceil(q * m) - 1
    idx = min(max(idx, 0), m - 1)
    return float(np.sort(v)[idx])


def trimmed_mean_below(values, threshold: float) -> float:
    """Mean with values above the threshold dropped but the divisor kept full.

    Matches the estimator step (1/|G|) sum b_i 1{b_i <= psi}: the sum skips
    trimmed values while the count does not.
    """
    v = _as_vector(values)
    if v.shape[0] == 0:
        raise ValueError("trimmed mean of empty input")
    return float(v[v <= threshold].sum() / v.shape[0])


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for SPD A by Cholesky factorization.

    Raises NotSPDError naming the failing pivot when A is not positive
    definite within LAPACK's tolerance.
    """
    A = _as_matrix(A)
    b = _as_vector(b)
    d = A.shape[0]
    if A.shape != (d, d) or b.shape[0] != d:
        raise ValueError("A must be square and match b")
    c, info = dpotrf(A, lower=1, overwrite_a=0)
    if info > 0:
        raise NotSPDError(f"matrix is not SPD: pivot {info} is nonpositive")
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    x, info = dpotrs(c, b, lower=1)
    if info != 0:
        raise NotSPDError(f"triangular solve failed with code {info}")
    return x
