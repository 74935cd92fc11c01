"""Adaptive-scale robust sparse linear regression.

Weighted l1-penalized Huber fits over a dyadic scale grid, pairwise-comparison
selection of the transition parameter, a one-step efficiency correction backed
by a sparse precision estimate, and asymptotic confidence intervals, plus a
simulation harness exercising the whole pipeline.
"""

__version__ = "0.1.0"

from .dataset import Dataset, SimSpec, generate, load_csv, make_rng, student_t_sample, write_csv
from .huber import (
    BacktrackingStep,
    Estimate,
    FixedStep,
    HuberConfig,
    WeightSpec,
    default_lambda,
    fit_huber,
    gradient,
    huber_deriv,
    huber_loss,
    kkt_check,
    objective,
    soft_threshold,
    weight,
)
from .scale import MoMConfig, ScaleGrid, default_grid_depth, mad, median_of_means, sigma_bounds
from .lepski import Comparison, LepskiConfig, LepskiResult, SelectionError, adaptive_fit, select
from .score import (
    ScoreDiagnostics,
    ScoreFunction,
    a_hat,
    gaussian_score,
    get_score,
    make_score,
    residual_scale,
    t3_score,
)
from .glasso import (
    PrecisionEstimate,
    default_glasso_lambda,
    graphical_lasso,
    kkt_residual,
    precision_to_csv,
    sample_cov,
    sparsity_triplets,
)
from .inference import (
    ConfidenceRegion,
    OneStepEstimate,
    confidence_region,
    efficiency_identity_check,
    normal_quantile,
    one_step,
)
from .experiments import (
    ExperimentReport,
    ExperimentSpec,
    run_consistency,
    run_coverage,
    run_mom_mad_checks,
)
