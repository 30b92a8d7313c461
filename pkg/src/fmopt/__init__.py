"""Fluence-map optimization benchmark toolkit for IMRT dosimetry."""

from .dose import (
    BeamConfig,
    DoseInfluenceMatrix,
    PencilBeamParams,
    adjoint_apply,
    compute_influence_matrix,
    dose_from_fluence,
)
from .dvh import DVHCurve, GoalCheck, compute_dvh, evaluate_goals
from .errors import ConfigurationError, DimensionError
from .objective import (
    DoseGoal,
    DoseObjective,
    EvalResult,
    GoalKind,
    ObjectiveSpec,
    bixel_neighbor_pairs,
    default_goals,
    default_objective_spec,
    standard_initial_fluence,
)
from .optimizers import (
    ConvergenceTrace,
    IterationRecord,
    OptimizerConfig,
    OptimizerId,
    Termination,
    lbfgs_two_loop,
    newton_inner_solve,
    run,
    wolfe_line_search,
)
from .phantom import (
    CASE_NAMES,
    CaseSpec,
    Cylinder,
    Ellipsoid,
    HalfShell,
    Phantom,
    Sphere,
    StructureMask,
    StructureSpec,
    VoxelGrid,
    build_builtin_case,
    build_case,
    builtin_case_spec,
    rasterize_primitive,
)

__version__ = "0.1.0"
