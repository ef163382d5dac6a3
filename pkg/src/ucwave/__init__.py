"""Stabilized primal-dual space-time FEM for unique continuation of the 1D
wave equation from interior data, with the weight-geometry machinery and an
experiment harness for convergence and adversarial-noise studies."""

from .exceptions import (
    AssemblyError,
    ConfigurationError,
    EigenError,
    FactorizationError,
    NumericalError,
    SolverQualityError,
    UcwaveError,
    UsageError,
)
from .forms import (
    DofLayout,
    SaddleSystem,
    StabilizationWeights,
    assemble_A,
    assemble_data_mass,
    assemble_dual_stab,
    assemble_jump_stab,
    assemble_primal_stab,
    assemble_saddle,
    mass_blocks,
    spectral_system,
    triple_norm,
)
from .geometry import (
    GeometryConfig,
    Region,
    WeightParams,
    check_pseudoconvexity,
    derive_params,
    gamma_contains,
    grad_margin,
    psi,
    region_contains,
)
from .mesh import SpaceTimeMesh, build_mesh, refine
from .solver import (
    BlockTriFactorization,
    EigenResult,
    factorize,
    smallest_eigenpair,
    solve,
)
from .spaces import (
    FieldPair,
    SlabSpace,
    TraceSpace,
    build_trace_space,
    check_A1,
    default_gamma_predicate,
    eval_field,
    fourier_mode,
    interpolate,
    lift,
)
from .experiments import (
    DEFAULT_CONFIG,
    ExperimentReport,
    ManufacturedSolution,
    NoiseSpec,
    eoc,
    error_norm,
    fit_slope,
    load_config,
    make_noise,
    region_errors,
    run_cm_study,
    run_convergence,
    run_geometry_check,
    run_region_sweep,
    run_trace_experiment,
    run_worst_mode_study,
)

__version__ = "0.1.0"
