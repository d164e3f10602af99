"""Regularity criteria, characteristic functions, Fourier-inverted densities
and exact Monte Carlo for linear SDEs driven by Levy noise."""

__version__ = "0.1.0"

from .charfn import (  # noqa: F401
    CharFn,
    charfn,
    charfn_decay_scan,
    decay_bound_1d,
    decay_bound_multid,
    decay_constants_1d,
    derivative_bound,
    occupation_lower_bound,
    psi,
    psi_derivative,
    psi_gradient,
    singularity_witness,
    sphere_infimum_rate,
)
from .criteria import (  # noqa: F401
    RegularityReport,
    assemble_report,
    condition32_diagnostic,
    condition_iii_diagnostic,
    h1_check,
    h2_check,
    h2prime_check,
    hypoellipticity_mass,
    infinite_mass_check,
    kallenberg_1d_diagnostic,
    kalman_check,
)
from .density import (  # noqa: F401
    DensityGrid,
    invert_1d,
    invert_2d,
    lp_irregularity_probe,
    window_center,
    window_lower_bound,
)
from .linalg import Subspace, expm, expm_integral, numerical_rank, span_of  # noqa: F401
from .measures import (  # noqa: F401
    AtomFamily,
    DensityComponent,
    LevyMeasureSpec,
    PowerLawProfile,
    TabulatedProfile,
    compensator_mean,
    directional_truncated_moment,
    essential_linear_support,
    mass_above,
    moment_above_one,
    rho,
    truncated_second_moment,
    yamazato_check,
)
from .model import OUModel, gaussian_covariance, load_model, make_model  # noqa: F401
from .simulate import (  # noqa: F401
    SampleBatch,
    SimConfig,
    compare_to_density,
    sample_endpoint,
    sample_endpoint_split,
    sample_path,
)
