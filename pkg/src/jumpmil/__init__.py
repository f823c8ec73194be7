"""Strong approximation of scalar jump-diffusion SDEs with randomized Milstein schemes."""

__version__ = "0.1.0"

from .convergence import (  # noqa: E402
    ConvergenceReport,
    LevelErrors,
    exact_error,
    fit_slope,
    run_convergence_experiment,
    successive_error,
    theoretical_rate,
)
from .driver_paths import (  # noqa: E402
    CellNoise,
    Grid,
    IteratedIntegrals,
    PathBatch,
    PathPrimitive,
    SeedSpec,
    build_grid,
    cell_iterated_integrals,
    coarsen,
    sample_batch,
    sample_fine_path,
)
from .errors import (  # noqa: E402
    DataCorruptionError,
    InvalidArgumentError,
    JccError,
    JumpMilError,
    NumericalOverflowError,
)
from .levy_area import (  # noqa: E402
    exact_levy_area,
    left_point_levy_area,
    run_levy_mse_experiment,
    theoretical_trapezoid_mse,
    trapezoid_levy_area,
)
from .schemes import SchemeKind, Trajectory, run_scheme, run_scheme_batch  # noqa: E402
from .sde_problem import (  # noqa: E402
    Coefficient,
    SdeProblem,
    builtin_example_sde,
    builtin_jcc_family,
    builtin_linear_jump_diffusion,
    check_jcc,
    l1_apply,
    lm1_apply,
    spot_check_assumptions,
)
