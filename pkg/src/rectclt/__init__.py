"""Numerical checks of high-dimensional Berry-Esseen bounds over rectangles."""
__version__ = "0.1.0"

from .bounds import (
    BoundInputs,
    epsilon_ladder,
    grad_norm_probe,
    lopes_rhs,
    nazarov_rhs,
    phi_eps,
    proof_epsilon_choice,
    theorem1_rhs,
)
from .distributions import (
    Gaussian,
    Multiplier,
    Product,
    SampleBatch,
    Spike,
    exact_covariance,
    gaussian_match,
    normalized_sum,
    sample,
    spike_zero_probability,
)
from .errors import BudgetError, ConfigError, NotPSDError, RectCLTError, SizeGuardError, ValidationError
from .estimators import (
    EstimateWithCI,
    RectangleFamily,
    mu_hat,
    pseudo_moment_hat,
    rate_fit,
    smoothed_mu_hat,
    zeta3_lower_hat,
)
from .matrix_core import CovarianceSpec, factor_for_sampling, gaussian_split, min_eigenvalue
from .oracle import (
    AtomicLaw,
    convolve,
    exact_mu_atomic,
    exact_mu_atomic_vs_gaussian,
    exact_pseudo_moment,
    pseudo_moment_vs_gaussian,
    scale,
)
