"""Numerical toolkit for semilinear SPDEs driven by Gaussian rough paths.

Pipeline: sample a Gaussian driver and lift it to a geometric rough path,
measure it through Hoelder norms / control functions / greedy partitions,
integrate controlled paths against it with the semigroup rough integral,
solve the mild equation by Picard iteration on greedy steps, linearize along
the solution, and estimate Lyapunov spectra and stability diagnostics.
"""

from .controlled import (
    ControlledPath,
    ControlledVector,
    DNorm,
    dnorm,
    grid_rough_integral,
    local_expansion_defect,
    sewing_integral,
    write_defect_csv,
)
from .driver import (
    GreedyPartition,
    GridPath,
    HoelderNorms,
    RoughPathGrid,
    cm_variation,
    control_value,
    greedy_partition,
    hoelder_norms,
    lift_piecewise_linear,
    restrict,
    sample_fbm,
    translate,
)
from .errors import ConfigError, GridError, NumericalFailure, RoughSpdeError
from .linearize import (
    DecayReport,
    DriverConfig,
    LyapunovReport,
    TangentPath,
    build_cocycle_matrix,
    lyapunov_spectrum,
    solve_linearized,
    stability_probe,
    stable_direction_check,
)
from .operators import (
    ConstantDiffusion,
    MultiplierDiffusion,
    NemytskiiDiffusion,
    NemytskiiDrift,
    SpatialProfile,
    ZeroDiffusion,
    ZeroDrift,
)
from .solver import (
    BoundReport,
    MildSolution,
    MomentConfig,
    ProblemSpec,
    SolverConfig,
    apriori_bound,
    default_eps,
    mild_residual,
    moment_experiment,
    parameter_violations,
    solve_mild,
)
from .spectral import (
    Semigroup,
    SpectralBasis,
    SpectralField,
    apply_multiplier,
    apply_pointwise,
    apply_semigroup,
    norm_alpha,
)

__version__ = "0.1.0"
