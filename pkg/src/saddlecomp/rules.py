"""Saddle calculus compliance: is_dsp, role classification, no-mixing rule.

A compliant expression is a conic combination of saddle atoms (with affine
or monotone pre-composition inside the atoms' arguments), promoted DCP
convex/concave expressions, and saddle-extremum functions.  The check is
sound but deliberately incomplete: expressions representing saddle
functions in non-compliant form are rejected with diagnostics.

Scaling a saddle summand by a negative constant negates it and swaps the
roles of that summand's variables, applied at the level of whole saddle
subexpressions only (never inside an atom).
"""

from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from .expressions import (
    AffineOp, Constant, Curvature, SaddleAtom, SaddleExtremum, Variable,
    variables_of,
)

DIAGNOSTIC_CODES = (
    "MixedVariables", "CurvatureViolation", "MonotonicityViolation",
    "NonLocalVariable", "AmbiguousRole",
)


@dataclass
class Diagnostic:
    code: str
    path: str
    message: str

    def __post_init__(self):
        assert self.code in DIAGNOSTIC_CODES, self.code

    def __str__(self):
        return f"[{self.code}] at {self.path}: {self.message}"


@dataclass
class RolePartition:
    """Disjoint partition of an expression's variables by role."""

    convex_vars: list = field(default_factory=list)
    concave_vars: list = field(default_factory=list)
    affine_vars: list = field(default_factory=list)

    def all_vars(self):
        return sorted(self.convex_vars + self.concave_vars + self.affine_vars,
                      key=lambda v: v.id)

    def names(self):
        return ([v.name for v in self.convex_vars],
                [v.name for v in self.concave_vars],
                [v.name for v in self.affine_vars])


def _path(indices):
    return "root" + "".join(f".children[{i}]" for i in indices)


def decompose(e, coef=1.0, indices=()):
    """Flatten the conic-combination structure into (coef, node, path)
    summands.  Only add, negate, and scalar scaling are combination
    operations; anything else is a terminal."""
    if isinstance(e, AffineOp) and e.op == "add":
        out = []
        for i, c in enumerate(e.children):
            out.extend(decompose(c, coef, indices + (i,)))
        return out
    if isinstance(e, AffineOp) and e.op == "negate":
        return decompose(e.children[0], -coef, indices + (0,))
    if isinstance(e, AffineOp) and e.op == "scale":
        return decompose(e.children[0], coef * e.data, indices + (0,))
    return [(coef, e, _path(indices))]


def curvature_focus(e, var_id) -> Curvature:
    """Curvature of ``e`` as a function of one variable, all others held
    fixed (their declared signs are kept)."""
    if isinstance(e, Variable):
        return Curvature.AFFINE if e.id == var_id else Curvature.CONSTANT
    if isinstance(e, Constant):
        return Curvature.CONSTANT
    if isinstance(e, SaddleExtremum):
        free = any(v.id == var_id for v in variables_of(e))
        if not free:
            return Curvature.CONSTANT
        return e.curvature
    kids = [curvature_focus(c, var_id) for c in e.children]
    if all(k.is_constant() for k in kids):
        return Curvature.CONSTANT
    if isinstance(e, SaddleAtom):
        raise TypeError("saddle atom reached in focused curvature")
    if isinstance(e, AffineOp):
        if e.op == "negate":
            return kids[0].flipped()
        if e.op == "scale":
            return kids[0] if e.data >= 0 else kids[0].flipped()
        if e.op in ("multiply", "matmul"):
            arr = e.data[0] if e.op == "matmul" else e.data
            if np.all(arr >= 0):
                return kids[0]
            if np.all(arr <= 0):
                return kids[0].flipped()
            return kids[0] if kids[0].is_affine() else Curvature.UNKNOWN
        out = Curvature.CONSTANT
        for k in kids:
            out = out + k
        return out
    # DCP atom: composition rule against the focused child curvatures
    d = e.descriptor
    if d.curvature is Curvature.UNKNOWN:
        return Curvature.UNKNOWN
    for i, c in enumerate(e.children):
        kc = kids[i]
        if kc.is_affine():
            continue
        mono = d.monotonicity(i, c.sign) if d.monotonicity else ex.NOT_MONOTONE
        want_cvx = (d.curvature is Curvature.CONVEX and mono == ex.NONDECREASING) or \
                   (d.curvature is Curvature.CONCAVE and mono == ex.NONINCREASING)
        want_ccv = (d.curvature is Curvature.CONVEX and mono == ex.NONINCREASING) or \
                   (d.curvature is Curvature.CONCAVE and mono == ex.NONDECREASING)
        if want_cvx and kc.is_convex():
            continue
        if want_ccv and kc.is_concave():
            continue
        return Curvature.UNKNOWN
    return d.curvature


class _RoleCollector:
    def __init__(self):
        self.forced = {}  # var_id -> set of "convex"/"concave"
        self.vars = {}
        self.diagnostics = []

    def force(self, var, role, path, reason):
        self.vars[var.id] = var
        roles = self.forced.setdefault(var.id, set())
        roles.add(role)
        if len(roles) > 1:
            self.diagnostics.append(Diagnostic(
                "MixedVariables", path,
                f"variable {var.name} is used as both a convex and a concave "
                f"variable ({reason})"))

    def see(self, var):
        self.vars[var.id] = var
        self.forced.setdefault(var.id, set())


def _analyze(e):
    """Shared engine for is_dsp and classify_roles."""
    collector = _RoleCollector()
    for v in variables_of(e):
        collector.see(v)

    for coef, node, path in decompose(e):
        if isinstance(node, SaddleAtom):
            _analyze_saddle_atom(coef, node, path, collector)
        elif isinstance(node, SaddleExtremum):
            _analyze_extremum(coef, node, path, collector)
        else:
            _analyze_dcp_term(coef, node, path, collector)
    return collector


def _analyze_saddle_atom(coef, node, path, collector):
    swap = coef < 0
    for code, message in node.descriptor.saddle_check(node):
        collector.diagnostics.append(Diagnostic(code, path, message))
    for arg in node.convex_args():
        for v in variables_of(arg):
            collector.force(v, "concave" if swap else "convex", path,
                            f"{'negated ' if swap else ''}{node.name} argument")
    for arg in node.concave_args():
        for v in variables_of(arg):
            collector.force(v, "convex" if swap else "concave", path,
                            f"{'negated ' if swap else ''}{node.name} argument")


def _analyze_extremum(coef, node, path, collector):
    swap = coef < 0
    local_ids = {v.id for v in node.local_vars}
    outer = "concave" if (node.direction == "max") == swap else "convex"
    inner_role = "convex" if outer == "concave" else "concave"
    for v in variables_of(node):
        if v.id in local_ids:
            collector.force(v, inner_role, path, "saddle extremum local variable")
        else:
            collector.force(v, outer, path, f"saddle_{node.direction} free variable")


def _analyze_dcp_term(coef, node, path, collector):
    try:
        cur = node.curvature
    except TypeError:
        collector.diagnostics.append(Diagnostic(
            "CurvatureViolation", path,
            "saddle expressions may only be combined by nonnegative scaling, "
            "negation, and addition; found one nested under another operation"))
        return
    if coef < 0:
        cur = cur.flipped()
    if cur.is_constant():
        return
    if cur is Curvature.UNKNOWN:
        collector.diagnostics.append(Diagnostic(
            "CurvatureViolation", path,
            "term has unknown curvature and is not a saddle atom"))
        return
    if cur is Curvature.AFFINE:
        return  # variables stay ambiguous
    role = "convex" if cur is Curvature.CONVEX else "concave"
    se_local_roles = {}
    _collect_se_locals(node, se_local_roles)
    for v in variables_of(node):
        if v.id in se_local_roles:
            # a local's extremal role is intrinsic to its SE function
            collector.force(v, se_local_roles[v.id], path,
                            "saddle extremum local variable")
            continue
        focus = curvature_focus(node, v.id)
        if coef < 0:
            focus = focus.flipped()
        if not focus.is_affine():
            collector.force(v, role, path, f"promoted {cur.value} term")


def _collect_se_locals(node, out):
    if isinstance(node, SaddleExtremum):
        role = "concave" if node.direction == "max" else "convex"
        for v in node.local_vars:
            out[v.id] = role
    for c in node.children:
        _collect_se_locals(c, out)


def is_dsp(e):
    """(compliant, diagnostics) for an expression under the saddle calculus."""
    e = ex.as_expr(e)
    collector = _analyze(e)
    return (not collector.diagnostics, collector.diagnostics)


def classify_roles(e) -> RolePartition:
    """Partition variables into unambiguously convex, unambiguously concave,
    and affine (ambiguous) roles.  The partition is produced even for
    non-compliant expressions; conflicted variables land on the convex side.
    """
    e = ex.as_expr(e)
    collector = _analyze(e)
    part = RolePartition()
    for vid in sorted(collector.forced):
        var = collector.vars[vid]
        roles = collector.forced[vid]
        if "convex" in roles:
            part.convex_vars.append(var)
        elif "concave" in roles:
            part.concave_vars.append(var)
        else:
            part.affine_vars.append(var)
    return part


def check_no_mixing(parts) -> tuple:
    """True when no variable is convex in one partition and concave in
    another; otherwise (False, diagnostics naming the variables)."""
    seen = {}
    diagnostics = []
    for part in parts:
        for v in part.convex_vars:
            seen.setdefault(v.id, (v, set()))[1].add("convex")
        for v in part.concave_vars:
            seen.setdefault(v.id, (v, set()))[1].add("concave")
    for v, roles in seen.values():
        if len(roles) > 1:
            diagnostics.append(Diagnostic(
                "MixedVariables", "root",
                f"variable {v.name} is convex in one summand and concave in another"))
    return (not diagnostics, diagnostics)
