"""Exact Lyapunov exponents of Gaussian random matrix products, with Monte Carlo checks."""

__version__ = "0.1.0"

from .errors import ChainFailure, DegenerateSpectrumError, DomainError, PrecisionExhaustedError
from .special import DEFAULT_CONTEXT, PrecisionContext, digamma, euler_gamma, log_gamma
from .exact import (
    CovarianceSpectrum,
    DiffusionParams,
    GlqPoint,
    LinearProfile,
    LyapunovSpectrum,
    complex_exponent,
    complex_spectrum,
    diffusive_spectrum,
    glq_general,
    glq_isotropic,
    isotropic_complex_spectrum,
    isotropic_real_spectrum,
    mu_max_closed,
    mu_min_closed,
    parse_profile,
    profile_spectrum,
    real_mu1_d2,
    sum_rule_complex,
    sum_rule_real,
)
from .mc import (
    ChainConfig,
    McEstimate,
    RngStream,
    diffusive_estimate,
    product_estimate,
    single_step_estimate,
)
