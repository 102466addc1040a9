"""Multi-view k-means clustering with Gaussian-kernel (exponential) distances."""

from .data import (
    DataError,
    MultiViewDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    validate,
)
from .estimators import (
    BetaPolicy,
    EstimatorError,
    beta_center_spread,
    beta_inverse_variance,
    beta_mean_absolute_deviation,
    beta_mean_center_scaled,
    estimate_p_mountain,
)
from .metrics import MetricReport, acc, ari, evaluate, nmi, pairwise_prf
from .solver import FitResult, SolverConfig, fit, fit_single_view_kmeans

__version__ = "0.1.0"
