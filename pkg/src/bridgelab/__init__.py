"""Sampling and Monte Carlo checks for alpha-Wiener bridges and the
exponential-functional identities of Bougerol and Donati-Martin, Matsumoto
and Yor."""

from .functionals import (
    DomainError,
    ExponentialFunctional,
    FunctionalValue,
    IdentityKind,
    closed_form_beta0,
    evaluate_functional,
    kind_grid,
    log_functionals,
    target,
    truncated_half_target,
)
from .montecarlo import (
    Estimate,
    IdentityReport,
    MCConfig,
    cov_check,
    density_check,
    estimate_identity,
    estimate_power_exponent,
    estimate_via_transform,
    ks_bougerol,
)
from .sampling import (
    FactorizationError,
    PathBatch,
    TimeGrid,
    cholesky_factor,
    cov_alpha,
    cov_matrix,
    make_grid,
    sample_exact,
    sample_half_time_change,
    sample_sde,
    write_paths_csv,
)
from .transforms import (
    HalfToBridge,
    HalfToWiener,
    ToBridge,
    ToWiener,
    half_to_bridge,
    half_to_wiener,
    to_bridge_from_alpha,
    to_wiener_from_alpha,
)

__version__ = "0.1.0"
