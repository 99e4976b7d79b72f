"""saddlecomp: disciplined modeling and solution of convex-concave saddle
problems via automated conic dualization."""

__version__ = "0.1.0"

from . import atoms, expressions, rules, saddle_atoms
from .expressions import (
    Constant, Constraint, Curvature, LocalVariable, Shape, Sign, Variable,
    curvature_of, evaluate, sign_of, substitute, variables_of,
)
from .atoms import (
    abs, exp, geo_mean, hstack, index, log, log_sum_exp, maximum, minimum,
    multiply, norm1, norm2, norm_inf, pos, reshape, sqrt, square, sum,
    sum_squares, transpose,
)
from .saddle_atoms import (
    inner, quasidef_quad_form, saddle_inner, saddle_quad_form,
    weighted_log_sum_exp, weighted_norm2,
)
from .rules import Diagnostic, RolePartition, check_no_mixing, classify_roles, is_dsp
from .conic import (
    Cone, ConeProgram, SetRep, Solution, SolverOptions, backend_capabilities,
    default_backend, dual_cone, solve_cone,
)
from .canon import canonicalize_dcp
from .dualize import (
    EpigraphRep, HypographRep, SaddleConicForm, dualize_saddle_max,
    dualize_saddle_min, mirror_form, represent_set, saddle_conic_form,
)
from .problems import (
    Maximize, Minimize, MinimizeMaximize, Problem, SaddlePointProblem,
    saddle_point_programs,
    SolveFailure, SolveReport, evaluate_with_se, infer_roles, saddle_max,
    saddle_min, se_value, solve_saddle_point, solve_saddle_problem,
)
