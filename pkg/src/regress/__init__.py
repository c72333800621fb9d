"""Differentially private, label-corruption-robust linear regression.

Full-batch gradient descent with two-sided adaptive clipping, the private
calibrators behind its thresholds, DP primitives, synthetic-data adversaries,
reference baselines, and a seeded experiment harness with a CSV/figure
reporting CLI.
"""

from .core import (
    Dataset,
    ModelSpec,
    NoiseFamily,
    NotSPDError,
    SubWeibullParams,
    clip_scalar,
    clip_vector,
    quantile_nearest_rank,
    sigma_norm_error,
    solve_spd,
    trimmed_mean_below,
)
from .datagen import (
    CorruptionSpec,
    ResilienceProfile,
    corrupt_labels,
    hard_instance_sample,
    instance_flip_corrupt,
    resilience_audit,
    sample_linear_model,
)
from .estimators import (
    EmptyHistogramError,
    EstimatorConfig,
    private_distance_estimator,
    private_norm_estimator,
)
from .harness import ExperimentConfig, RunResult, emit_csv, run_experiment
from .privacy import (
    BinFamily,
    HistogramRelease,
    PrivacyBudget,
    RoundBudget,
    derive_round_budget,
    gaussian_mechanism,
    geometric_bin_index,
    laplace_noise,
    stable_histogram,
)
from .regression import (
    GDConfig,
    HeavyTailConfig,
    IterateTrace,
    best_iterate,
    compute_norm_threshold,
    compute_residual_threshold,
    compute_residual_threshold_ht,
    default_iterations,
    dp_robust_gd,
    dp_robust_gd_ht,
    gd_step,
    noise_scale,
)
from .rng import make_rng, spawn_seed

__version__ = "0.1.0"
