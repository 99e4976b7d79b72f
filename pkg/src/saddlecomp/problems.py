"""User-facing problem layer.

``SaddlePointProblem`` solves  min_x max_y f(x, y)  by dualizing both f and
-f: the f problem yields the value and the convex-side solution, the -f
problem (roles swapped) the concave-side solution.  The problem is reported
solved only when the two optimal values agree to within the gap tolerance,
which certifies that the inf/sup swap behind the dualization was valid; on
success every variable's ``value`` is written in a single commit.

``saddle_max`` and ``saddle_min`` build saddle-extremum expressions over
local (dummy) variables; they are convex respectively concave and usable
anywhere a DCP expression of that curvature is, including constraints.
Problems containing them are restrictions in general: minimization returns
an upper bound on the optimum and feasible variables, exact whenever strong
duality holds for the inner extremum (e.g. compact polyhedral sets).
"""

from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from .canon import RowBuilder, canonicalize_dcp, dcp_diagnostics
from .conic import INFEASIBLE, OPTIMAL, UNBOUNDED, SolverOptions, solve_cone
from .dualize import (
    VarLayout, dualize_saddle_max, mirror_form, represent_set,
    saddle_conic_form, se_inner_set, se_roles,
)
from .errors import DspError
from .expressions import Constraint, SaddleExtremum, Variable, variables_of
from .rules import Diagnostic, RolePartition, classify_roles, is_dsp

SOLVED = "Solved"
GAP_TOO_LARGE = "GapTooLarge"
SOLVER_FAILURE = "SolverFailure"
NOT_DSP = "NotDSP"

DEFAULT_GAP_TOL = 1e-6
GAP_ABS_FLOOR = 1e-8


@dataclass
class SolveReport:
    value: float = np.nan
    gap: float = None
    status: str = SOLVER_FAILURE
    x_star: dict = field(default_factory=dict)  # variable name -> value
    y_star: dict = field(default_factory=dict)
    tolerance: float = DEFAULT_GAP_TOL
    diagnostics: list = field(default_factory=list)
    backend_status: str = None
    bound: str = None  # 'upper'/'lower' for restriction solves
    value_mirror: float = None  # optimal value of the mirrored (-f) problem

    @property
    def solved(self):
        return self.status == SOLVED


class ValueStore:
    """Stages variable values and writes them in one commit, so a failed
    solve never changes any variable."""

    def __init__(self):
        self._staged = []

    def stage(self, var, value):
        self._staged.append((var, value))

    def commit(self):
        for var, value in self._staged:
            var.value = value


class MinimizeMaximize:
    """Saddle objective: minimize over the convex variables, maximize over
    the concave ones."""

    def __init__(self, expr):
        self.expr = ex.as_expr(expr)
        if not self.expr.shape.is_scalar():
            raise DspError("objective must be scalar")

    def is_dsp(self):
        return is_dsp(self.expr)[0]


def _constraint_sides(constraints, role_of):
    """Split constraints by the single side their variables live on."""
    xcons, ycons = [], []
    for i, con in enumerate(constraints):
        vids = {v.id for v in con.variables()}
        roles = {role_of[v] for v in vids}
        if not vids:
            if con.violation({}) > 1e-12:
                raise DspError(f"constant constraint {i} is violated: {con!r}")
            continue
        if roles == {"convex"}:
            xcons.append(con)
        elif roles == {"concave"}:
            ycons.append(con)
        else:
            raise DspError(
                f"constraint {i} mixes convex and concave variables: {con!r}",
                [Diagnostic("MixedVariables", f"constraints[{i}]",
                            "a constraint may reference only one side")])
    return xcons, ycons


def infer_roles(problem) -> RolePartition:
    """Resolve every variable's role from the objective's atom-forced roles,
    the declared lists, and fixed-point propagation across constraints."""
    expr = problem.objective.expr
    base = classify_roles(expr)
    assigned = {v.id: "convex" for v in base.convex_vars}
    assigned.update({v.id: "concave" for v in base.concave_vars})
    all_vars = {v.id: v for v in base.all_vars()}
    for con in problem.constraints:
        for v in con.variables():
            all_vars.setdefault(v.id, v)

    def declare(vars_list, role):
        for v in vars_list:
            prev = assigned.get(v.id)
            if prev is not None and prev != role:
                raise DspError(
                    f"variable {v.name} declared {role} but inferred {prev}",
                    [Diagnostic("MixedVariables", "roles", v.name)])
            assigned[v.id] = role
            all_vars.setdefault(v.id, v)

    declare(problem.declared_cvx, "convex")
    declare(problem.declared_ccv, "concave")

    groups = [sorted({v.id for v in con.variables()}) for con in problem.constraints]
    changed = True
    while changed:
        changed = False
        for g in groups:
            roles = {assigned[vid] for vid in g if vid in assigned}
            if len(roles) > 1:
                names = [all_vars[vid].name for vid in g]
                raise DspError(
                    f"constraint propagation mixes roles among {names}",
                    [Diagnostic("MixedVariables", "constraints",
                                f"variables {names} share a constraint but "
                                "have conflicting roles")])
            if len(roles) == 1:
                role = roles.pop()
                for vid in g:
                    if vid not in assigned:
                        assigned[vid] = role
                        changed = True

    missing = sorted(vid for vid in all_vars if vid not in assigned)
    if missing:
        names = [all_vars[vid].name for vid in missing]
        raise DspError(
            f"the role of {names} is ambiguous; pass them in cvx_vars or "
            "ccv_vars",
            [Diagnostic("AmbiguousRole", "roles",
                        f"variables {names} must appear in one of the lists")])
    part = RolePartition()
    for vid in sorted(all_vars):
        v = all_vars[vid]
        (part.convex_vars if assigned[vid] == "convex"
         else part.concave_vars).append(v)
    return part


class SaddlePointProblem:
    """min-max problem over a DSP-compliant objective with side-separated
    DCP constraints."""

    def __init__(self, objective, constraints=None, cvx_vars=None, ccv_vars=None):
        if not isinstance(objective, MinimizeMaximize):
            raise TypeError("objective must be a MinimizeMaximize")
        self.objective = objective
        self.constraints = list(constraints or [])
        self.declared_cvx = list(cvx_vars or [])
        self.declared_ccv = list(ccv_vars or [])
        self.value = None
        self.report = None
        self._roles = None

    def is_dsp(self):
        ok, _ = is_dsp(self.objective.expr)
        if not ok:
            return False
        try:
            self.roles()
        except DspError:
            return False
        return True

    def diagnostics(self):
        ok, diags = is_dsp(self.objective.expr)
        if not ok:
            return diags
        try:
            self.roles()
        except DspError as err:
            return err.diagnostics
        return []

    def roles(self) -> RolePartition:
        if self._roles is None:
            self._roles = infer_roles(self)
        return self._roles

    def convex_variables(self):
        return list(self.roles().convex_vars)

    def concave_variables(self):
        return list(self.roles().concave_vars)

    def affine_variables(self):
        return list(self.roles().affine_vars)

    def solve(self, tol=DEFAULT_GAP_TOL, abs_floor=GAP_ABS_FLOOR,
              backend=None, eps=None) -> float:
        self.report = solve_saddle_point(self, tol=tol, abs_floor=abs_floor,
                                         backend=backend, eps=eps)
        if self.report.status == SOLVED:
            self.value = self.report.value
            return self.value
        raise SolveFailure(self.report)


class SolveFailure(RuntimeError):
    def __init__(self, report):
        super().__init__(f"solve failed with status {report.status}"
                         + (f" (gap {report.gap:.3e})"
                            if report.gap is not None else "")
                         + (f" (backend {report.backend_status})"
                            if report.backend_status else ""))
        self.report = report


def _unpack_primal(builder, primal, variables):
    out = {}
    for v in variables:
        cols = builder.var_cols[v.id]
        piece = primal[cols]
        if v.is_symmetric:
            from .packing import smat
            out[v.id] = smat(piece)
        elif v.shape.is_scalar():
            out[v.id] = float(piece[0])
        else:
            out[v.id] = piece.reshape(v.shape.dims, order="F")
    return out


def _dualized_program(expr_form, outer_vars, outer_cons, inner_vars, inner_cons):
    inner_rep = represent_set(inner_vars, inner_cons)
    builder = RowBuilder()
    for v in outer_vars:
        builder.register_variable(v)
    for con in outer_cons:
        builder.add_constraint(con)
    value = dualize_saddle_max(expr_form, inner_rep).emit(builder)
    return builder, builder.to_cone_program(value)


def saddle_point_programs(problem):
    """The two dualized cone programs behind a saddle point solve:
    (builder_f, prog_f, builder_mirror, prog_mirror, roles).  The first
    minimizes the dualized sup_y f over X; the second minimizes the
    dualized sup_x(-f) over Y.  Raises DspError on non-compliance."""
    ok, diags = is_dsp(problem.objective.expr)
    if not ok:
        raise DspError("objective is not DSP-compliant", diags)
    roles = problem.roles()
    expr = problem.objective.expr
    role_of = {v.id: "convex" for v in roles.convex_vars}
    role_of.update({v.id: "concave" for v in roles.concave_vars})
    xcons, ycons = _constraint_sides(problem.constraints, role_of)
    ax, ay = _constraint_sides(ex.attached_constraints_of(expr), role_of)
    form = saddle_conic_form(expr, roles)
    builder_a, prog_a = _dualized_program(
        form, roles.convex_vars, xcons + ax, roles.concave_vars, ycons + ay)
    builder_b, prog_b = _dualized_program(
        mirror_form(form), roles.concave_vars, ycons + ay,
        roles.convex_vars, xcons + ax)
    return builder_a, prog_a, builder_b, prog_b, roles


def solve_saddle_point(problem, tol=DEFAULT_GAP_TOL, abs_floor=GAP_ABS_FLOOR,
                       backend=None, eps=None) -> SolveReport:
    """Dualize both f and -f, solve the two cone programs, and certify the
    duality gap.  On success the convex-side solution comes from the f
    problem and the concave-side solution from the -f problem."""
    try:
        builder_a, prog_a, builder_b, prog_b, roles = saddle_point_programs(problem)
    except DspError as err:
        return SolveReport(status=NOT_DSP, diagnostics=err.diagnostics or
                           [Diagnostic("CurvatureViolation", "root", str(err))],
                           tolerance=tol)
    opts = SolverOptions(backend=backend, eps=eps)
    sol_a = solve_cone(prog_a, opts)
    if sol_a.status != OPTIMAL:
        hint = (" (the concave set may be empty)"
                if sol_a.status == UNBOUNDED else "")
        return SolveReport(status=SOLVER_FAILURE, backend_status=sol_a.status,
                           tolerance=tol,
                           diagnostics=[Diagnostic(
                               "CurvatureViolation", "root",
                               f"dualized min problem: {sol_a.status}{hint}")])
    sol_b = solve_cone(prog_b, opts)
    if sol_b.status != OPTIMAL:
        hint = (" (the convex set may be empty)"
                if sol_b.status == UNBOUNDED else "")
        return SolveReport(status=SOLVER_FAILURE, backend_status=sol_b.status,
                           tolerance=tol,
                           diagnostics=[Diagnostic(
                               "CurvatureViolation", "root",
                               f"dualized max problem: {sol_b.status}{hint}")])

    v_plus, v_minus = sol_a.obj, sol_b.obj
    gap = abs(v_plus + v_minus) / max(1.0, abs(v_plus))
    report = SolveReport(value=v_plus, gap=gap, tolerance=tol,
                         value_mirror=v_minus)
    if gap > tol and abs(v_plus + v_minus) > abs_floor:
        report.status = GAP_TOO_LARGE
        return report

    x_vals = _unpack_primal(builder_a, sol_a.primal, roles.convex_vars)
    y_vals = _unpack_primal(builder_b, sol_b.primal, roles.concave_vars)
    store = ValueStore()
    for v in roles.convex_vars:
        store.stage(v, x_vals[v.id])
    for v in roles.concave_vars:
        store.stage(v, y_vals[v.id])
    store.commit()
    report.status = SOLVED
    report.x_star = {v.name: x_vals[v.id] for v in roles.convex_vars}
    report.y_star = {v.name: y_vals[v.id] for v in roles.concave_vars}
    return report


# ---------------------------------------------------------------------------
# Saddle extremum functions


def _validate_extremum(body, set_constraints, direction):
    body = ex.as_expr(body)
    if not body.shape.is_scalar():
        raise DspError("saddle extremum bodies must be scalar")
    ok, diags = is_dsp(body)
    if not ok:
        raise DspError(f"saddle_{direction} body is not DSP-compliant", diags)
    part = classify_roles(body)
    con_vars = []
    for con in set_constraints:
        con_vars.extend(con.variables())
    diags = []
    for v in con_vars:
        if not v.is_local:
            diags.append(Diagnostic(
                "NonLocalVariable", "constraints",
                f"{v.name} is not a LocalVariable but appears in the "
                "constraints"))
    inner = part.concave_vars if direction == "max" else part.convex_vars
    outer = part.convex_vars if direction == "max" else part.concave_vars
    inner_word = "concave" if direction == "max" else "convex"
    for v in inner:
        if not v.is_local:
            diags.append(Diagnostic(
                "NonLocalVariable", "body",
                f"{v.name} is not a LocalVariable but appears as a "
                f"{inner_word} variable of the saddle function"))
    for v in outer:
        if v.is_local:
            diags.append(Diagnostic(
                "NonLocalVariable", "body",
                f"local variable {v.name} appears on the outer side of "
                f"saddle_{direction}"))
    if diags:
        raise DspError(f"saddle_{direction} is not DSP-compliant", diags)
    locals_ = sorted({v.id: v for v in con_vars if v.is_local}.values(),
                     key=lambda v: v.id)
    body_locals = [v for v in variables_of(body) if v.is_local]
    merged = {v.id: v for v in locals_}
    merged.update({v.id: v for v in body_locals})
    node = SaddleExtremum(body, sorted(merged.values(), key=lambda v: v.id),
                          set_constraints, direction)
    for v in node.local_vars:
        owner = getattr(v, "_se_owner", None)
        if owner is not None:
            raise DspError(
                f"local variable {v.name} already belongs to another saddle "
                "extremum",
                [Diagnostic("NonLocalVariable", "body",
                            f"{v.name} cannot appear in more than one SE "
                            "function")])
    for v in node.local_vars:
        v._se_owner = node
    return node


def saddle_max(body, set_constraints):
    """Convex expression sup over the local variables of a saddle body,
    subject to DCP constraints on the locals."""
    return _validate_extremum(body, list(set_constraints), "max")


def saddle_min(body, set_constraints):
    """Concave expression inf over the local variables; the mirror image of
    saddle_max."""
    return _validate_extremum(body, list(set_constraints), "min")


def se_value(node, env=None):
    """Numeric value of an SE at given outer-variable values: one small
    cone solve of the inner extremum."""
    free = [v for v in variables_of(node) if v.id not in
            {w.id for w in node.local_vars}]
    values = {}
    for v in free:
        val = env.get(v.id) if env is not None else v.value
        if val is None:
            raise ValueError(f"variable {v.name} has no value")
        values[v.id] = val
    fixed = ex.substitute(node.body, values)
    cons = list(node.set_constraints)
    for con in ex.attached_constraints_of(fixed):
        cons.append(con)
    sense = "max" if node.direction == "max" else "min"
    _, prog = canonicalize_dcp(fixed, cons, sense=sense)
    sol = solve_cone(prog)
    if sol.status != OPTIMAL:
        raise SolveFailure(SolveReport(status=SOLVER_FAILURE,
                                       backend_status=sol.status))
    return -sol.obj if sense == "max" else sol.obj


def evaluate_with_se(expr, env=None):
    """Evaluate an expression, resolving saddle extrema by inner solves."""
    expr = ex.as_expr(expr)
    if not ex.contains_saddle_atom(expr) and not _contains_se(expr):
        return ex.evaluate(expr, env)
    if isinstance(expr, SaddleExtremum):
        return np.asarray(se_value(expr, env))
    if isinstance(expr, (ex.Constant, ex.Variable)):
        return ex.evaluate(expr, env)
    kids = [evaluate_with_se(c, env) for c in expr.children]
    clone = ex._rebuild(expr, [ex.Constant(k) for k in kids])
    return ex.evaluate(clone, {})


def _contains_se(e):
    if isinstance(e, SaddleExtremum):
        return True
    return any(_contains_se(c) for c in e.children)


# ---------------------------------------------------------------------------
# Saddle problems (DCP problems containing SE functions)


class Minimize:
    sense = "min"

    def __init__(self, expr):
        self.expr = ex.as_expr(expr)


class Maximize:
    sense = "max"

    def __init__(self, expr):
        self.expr = ex.as_expr(expr)


class Problem:
    """Convex problem whose expressions may contain saddle extrema."""

    def __init__(self, objective, constraints=None):
        if not isinstance(objective, (Minimize, Maximize)):
            raise TypeError("objective must be Minimize or Maximize")
        self.objective = objective
        self.constraints = list(constraints or [])
        self.value = None
        self.report = None

    def is_dsp(self):
        return not self.diagnostics()

    def diagnostics(self):
        diags = list(dcp_diagnostics(self.objective.expr, self.constraints,
                                     self.objective.sense))
        diags.extend(_scope_diagnostics(self))
        return diags

    def solve(self, backend=None, eps=None):
        self.report = solve_saddle_problem(self, backend=backend, eps=eps)
        if self.report.status != SOLVED:
            raise SolveFailure(self.report)
        self.value = self.report.value
        return self.value


def _scope_diagnostics(problem):
    """Local variables must live inside exactly one SE function."""
    diags = []
    ses = []

    def collect(e):
        if isinstance(e, SaddleExtremum):
            ses.append(e)
            return
        for c in e.children:
            collect(c)

    def check_outside(e, where):
        if isinstance(e, SaddleExtremum):
            return
        if isinstance(e, Variable) and e.is_local:
            diags.append(Diagnostic(
                "NonLocalVariable", where,
                f"local variable {e.name} used outside any saddle extremum"))
        for c in e.children:
            check_outside(c, where)

    collect(problem.objective.expr)
    check_outside(problem.objective.expr, "objective")
    for i, con in enumerate(problem.constraints):
        collect(con.lhs)
        collect(con.rhs)
        check_outside(con.lhs, f"constraints[{i}]")
        check_outside(con.rhs, f"constraints[{i}]")
    return diags


def solve_saddle_problem(problem, backend=None, eps=None) -> SolveReport:
    """Single cone solve of the lowered problem.  The value is an upper
    bound for minimization (lower for maximization), exact when strong
    duality holds for every inner extremum; local variables receive a
    particular inner maximizer/minimizer, with no further guarantees."""
    diags = problem.diagnostics()
    if diags:
        return SolveReport(status=NOT_DSP, diagnostics=diags)
    sense = problem.objective.sense
    try:
        _builder, prog = canonicalize_dcp(problem.objective.expr,
                                          problem.constraints, sense=sense,
                                          check=False)
    except DspError as err:
        return SolveReport(status=NOT_DSP, diagnostics=err.diagnostics)
    sol = solve_cone(prog, SolverOptions(backend=backend, eps=eps))
    if sol.status != OPTIMAL:
        return SolveReport(status=SOLVER_FAILURE, backend_status=sol.status)
    value = -sol.obj if sense == "max" else sol.obj

    regular = [v for v in _problem_variables(problem) if not v.is_local]
    vals = _unpack_primal(_builder, sol.primal, regular)
    store = ValueStore()
    for v in regular:
        store.stage(v, vals[v.id])

    # a particular maximizer/minimizer for each SE's local variables
    ses = []

    def collect(e):
        if isinstance(e, SaddleExtremum):
            ses.append(e)
        for c in e.children:
            collect(c)

    collect(problem.objective.expr)
    for con in problem.constraints:
        collect(con.lhs)
        collect(con.rhs)
    for node in ses:
        local_vals = _recover_locals(node, vals)
        for v in node.local_vars:
            store.stage(v, local_vals[v.id])
    store.commit()
    report = SolveReport(value=value, status=SOLVED,
                         bound="upper" if sense == "min" else "lower")
    report.x_star = {v.name: vals[v.id] for v in regular}
    return report


def _problem_variables(problem):
    seen = {}
    for v in variables_of(problem.objective.expr):
        seen[v.id] = v
    for con in problem.constraints:
        for v in con.variables():
            seen[v.id] = v
    return [seen[i] for i in sorted(seen)]


def _recover_locals(node, regular_vals):
    """Solve the inner extremum at the fixed outer solution."""
    values = {vid: val for vid, val in regular_vals.items()}
    fixed = ex.substitute(node.body, values)
    cons = list(node.set_constraints)
    for con in ex.attached_constraints_of(fixed):
        cons.append(con)
    sense = "max" if node.direction == "max" else "min"
    builder, prog = canonicalize_dcp(fixed, cons, sense=sense)
    sol = solve_cone(prog)
    if sol.status != OPTIMAL:
        raise SolveFailure(SolveReport(status=SOLVER_FAILURE,
                                       backend_status=sol.status))
    return _unpack_primal(builder, sol.primal, node.local_vars)
