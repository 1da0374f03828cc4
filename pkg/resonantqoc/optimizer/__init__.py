from .extremals import (
    IndexPartition,
    WindowReport,
    classify_extremal,
    clean_windows,
    distribution_rank,
    find_clean_window,
    fit_normal_lift,
    partition_indexes,
    probe_abnormal,
    spanning_family_rank,
    spanning_tree,
)
from .lift import PMPLift, PMPResidualReport, pmp_residual
from .steps import StepCache
from .transcription import (
    PenaltyState,
    ReducedProblem,
    SolveOptions,
    SolveResult,
    adjoint_gradient,
    penalized_objective,
    solve_reduced,
)
