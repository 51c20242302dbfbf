"""Green functions of lattice random walks killed on leaving a cone."""

__version__ = "0.1.0"

from .asym import (
    Prediction,
    StudyTable,
    Verdict,
    WindowPolicy,
    martin_kernel,
    nearest_lattice_point,
    predict_green,
    prefactor_constant,
    prefactor_select,
    ray_study,
)
from .errors import (
    ConeGreenError,
    ConvergenceError,
    DomainError,
    ModelError,
    TruncationError,
    UnstableStudyError,
)
from .genfun import (
    BoundaryData,
    eval_p,
    find_interior_min,
    grad_p,
    hess_p,
    second_moments,
    solve_alpha,
    twisted_measure,
)
from .green import (
    ExitLaw,
    GreenEstimate,
    HarmonicEstimate,
    KilledWalkDP,
    exit_law_dp,
    free_green_dp,
    green_dp,
    green_mc,
    harmonic_h,
    harmonicity_residual,
    run_killed_dp,
    survival_mc,
)
from .model import (
    Cone,
    JumpMeasure,
    LatticeWindow,
    WalkModel,
    check_a1,
    check_a2,
    cone_contains,
    load_model,
    save_model,
)
from .series import (
    TorusGrid,
    eval_calp,
    eval_f_truncated,
    eval_h_truncated,
    free_green_quadrature,
    functional_eq_residual,
    killed_green_quadrature,
)



__all__ = [
    "BoundaryData",
    "Cone",
    "ConeGreenError",
    "ConvergenceError",
    "DomainError",
    "ExitLaw",
    "GreenEstimate",
    "HarmonicEstimate",
    "JumpMeasure",
    "KilledWalkDP",
    "LatticeWindow",
    "ModelError",
    "Prediction",
    "StudyTable",
    "TorusGrid",
    "TruncationError",
    "UnstableStudyError",
    "Verdict",
    "WalkModel",
    "WindowPolicy",
    "check_a1",
    "check_a2",
    "cone_contains",
    "eval_calp",
    "eval_f_truncated",
    "eval_h_truncated",
    "eval_p",
    "exit_law_dp",
    "find_interior_min",
    "free_green_dp",
    "free_green_quadrature",
    "functional_eq_residual",
    "grad_p",
    "green_dp",
    "green_mc",
    "harmonic_h",
    "harmonicity_residual",
    "hess_p",
    "killed_green_quadrature",
    "load_model",
    "martin_kernel",
    "nearest_lattice_point",
    "predict_green",
    "prefactor_constant",
    "prefactor_select",
    "ray_study",
    "run_killed_dp",
    "save_model",
    "second_moments",
    "solve_alpha",
    "survival_mc",
    "twisted_measure",
]
