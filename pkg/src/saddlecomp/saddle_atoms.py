"""Saddle atoms: scalar functions convex in one argument group and concave
in the other.

Each atom evaluates numerically from its defining formula, declares which
argument is the convex side and which the concave side, attaches domain
constraints where required (e.g. ``G >= 0``), and knows how to rewrite
itself into a plain DCP expression once one side is fixed to a constant.
The conic templates used for dualization live in ``dualize``; their
correctness is enforced by the representation-oracle tests rather than
trusted by construction.
"""

import numpy as np

from . import atoms as at
from . import expressions as ex
from .errors import ShapeError
from .expressions import (
    AtomDescriptor, Constant, Constraint, Curvature, SaddleAtom, Sign,
    as_expr, register_atom, variables_of,
)
from .packing import psd_factor

__all__ = [
    "inner", "saddle_inner", "weighted_norm2", "weighted_log_sum_exp",
    "quasidef_quad_form", "saddle_quad_form",
]


def _as_vector(e):
    e = as_expr(e)
    if e.shape.is_scalar():
        return ex.reshape(e, (1,))
    if e.shape.ndim == 1:
        return e
    raise ShapeError("saddle atom arguments must be scalars or vectors")


def _nonneg_constraint(e):
    return Constraint("<=", as_expr(0.0), e)


def _disjoint_check(node):
    cvx_ids = {v.id for a in node.convex_args() for v in variables_of(a)}
    ccv = [v for a in node.concave_args() for v in variables_of(a)]
    shared = sorted({v.name for v in ccv if v.id in cvx_ids})
    if shared:
        return [("MixedVariables",
                 f"variables {shared} appear in both arguments of {node.name}")]
    return []


def _curvature_or_none(e):
    try:
        return e.curvature
    except TypeError:
        return None


def _arg_curvature_check(node, slot, need, label):
    arg = node.children[slot]
    cur = _curvature_or_none(arg)
    if cur is None:
        return [("CurvatureViolation",
                 f"argument {slot + 1} of {node.name} contains a nested saddle atom")]
    ok = cur.is_affine() if need == "affine" else (
        cur.is_convex() if need == "convex" else cur.is_concave())
    if not ok:
        return [("CurvatureViolation",
                 f"argument {slot + 1} of {node.name} ({label}) must be DCP "
                 f"{need}, got {cur.value}")]
    return []


# ---------------------------------------------------------------------------
# inner(x, y) = x' y, bi-affine


def inner(x, y):
    """Inner product of two affine expressions; the first argument is the
    convex side by convention."""
    x, y = _as_vector(x), _as_vector(y)
    if x.size != y.size:
        raise ShapeError(f"inner arguments have sizes {x.size} and {y.size}")
    return SaddleAtom("inner", [x, y], ex.SCALAR)


def _inner_check(node):
    diags = []
    diags += _arg_curvature_check(node, 0, "affine", "convex side")
    diags += _arg_curvature_check(node, 1, "affine", "concave side")
    diags += _disjoint_check(node)
    return diags


def _inner_fix_concave(node, kids):
    gval = kids[1].value_array
    return ex.sum_entries(ex.multiply(gval, node.children[0]))


def _inner_fix_convex(node, kids):
    fval = kids[0].value_array
    return ex.sum_entries(ex.multiply(fval, node.children[1]))


register_atom(AtomDescriptor(
    "inner", Curvature.UNKNOWN, is_saddle=True,
    convex_slots=(0,), concave_slots=(1,),
    eval_fn=lambda v, d: np.asarray(np.dot(np.atleast_1d(v[0]), np.atleast_1d(v[1]))),
    saddle_check=_inner_check,
    fix_concave=_inner_fix_concave,
    fix_convex=_inner_fix_convex,
))


# ---------------------------------------------------------------------------
# saddle_inner(F, G) = F(x)' G(y)


def saddle_inner(F, G):
    """F(x)'G(y) with F elementwise convex and nonnegative, G elementwise
    concave.  Attaches ``G >= 0`` when G is not provably nonnegative."""
    F, G = _as_vector(F), _as_vector(G)
    if F.size != G.size:
        raise ShapeError(f"saddle_inner arguments have sizes {F.size} and {G.size}")
    attached = [] if G.sign.is_nonneg() else [_nonneg_constraint(G)]
    return SaddleAtom("saddle_inner", [F, G], ex.SCALAR, attached=attached)


def _saddle_inner_check(node):
    diags = []
    diags += _arg_curvature_check(node, 0, "convex", "convex side")
    diags += _arg_curvature_check(node, 1, "concave", "concave side")
    if _curvature_or_none(node.children[0]) is not None and \
            not node.children[0].sign.is_nonneg():
        diags.append(("CurvatureViolation",
                      "argument 1 of saddle_inner must be nonnegative"))
    diags += _disjoint_check(node)
    return diags


def _saddle_inner_fix_concave(node, kids):
    gval = kids[1].value_array
    return ex.sum_entries(ex.multiply(gval, node.children[0]))


def _saddle_inner_fix_convex(node, kids):
    fval = kids[0].value_array
    return ex.sum_entries(ex.multiply(fval, node.children[1]))


def _saddle_inner_sign(node):
    if node.children[0].sign.is_nonneg() and node.children[1].sign.is_nonneg():
        return Sign.NONNEGATIVE
    return Sign.UNKNOWN


register_atom(AtomDescriptor(
    "saddle_inner", Curvature.UNKNOWN, is_saddle=True,
    convex_slots=(0,), concave_slots=(1,),
    sign_fn=_saddle_inner_sign,
    eval_fn=lambda v, d: np.asarray(np.dot(np.atleast_1d(v[0]), np.atleast_1d(v[1]))),
    saddle_check=_saddle_inner_check,
    fix_concave=_saddle_inner_fix_concave,
    fix_convex=_saddle_inner_fix_convex,
))


# ---------------------------------------------------------------------------
# weighted_norm2(x, y) = (sum_i y_i x_i^2)^(1/2)


def weighted_norm2(x, y):
    """Weighted l2 norm (sum_i y_i x_i^2)^(1/2) with weights y >= 0."""
    x, y = _as_vector(x), _as_vector(y)
    if x.size != y.size:
        raise ShapeError("weighted_norm2 arguments must have equal length")
    attached = [] if y.sign.is_nonneg() else [_nonneg_constraint(y)]
    return SaddleAtom("weighted_norm2", [x, y], ex.SCALAR, attached=attached)


def _weighted_norm2_check(node):
    diags = []
    x = node.children[0]
    cur = _curvature_or_none(x)
    if cur is None:
        diags.append(("CurvatureViolation",
                      "argument 1 of weighted_norm2 contains a nested saddle atom"))
    elif not cur.is_affine():
        if not cur.is_convex():
            diags.append(("CurvatureViolation",
                          "argument 1 of weighted_norm2 must be affine or convex"))
        elif not x.sign.is_nonneg():
            diags.append(("MonotonicityViolation",
                          "weighted_norm2 is only nondecreasing in nonnegative "
                          "arguments; a convex first argument must be nonnegative"))
    diags += _arg_curvature_check(node, 1, "concave", "weights")
    diags += _disjoint_check(node)
    return diags


def _weighted_norm2_eval(v, d):
    w = np.atleast_1d(v[1])
    if np.any(w < -1e-12):
        raise ValueError("weighted_norm2 weights must be nonnegative")
    return np.asarray(np.sqrt(np.sum(np.clip(w, 0, None) * np.square(np.atleast_1d(v[0])))))


def _weighted_norm2_fix_concave(node, kids):
    w = np.clip(kids[1].value_array, 0.0, None)
    return at.norm2(ex.multiply(np.sqrt(w), node.children[0]))


def _weighted_norm2_fix_convex(node, kids):
    xval = kids[0].value_array
    return at.sqrt(ex.sum_entries(ex.multiply(np.square(xval), node.children[1])))


register_atom(AtomDescriptor(
    "weighted_norm2", Curvature.UNKNOWN, is_saddle=True,
    convex_slots=(0,), concave_slots=(1,),
    sign_fn=lambda n: Sign.NONNEGATIVE,
    eval_fn=_weighted_norm2_eval,
    saddle_check=_weighted_norm2_check,
    fix_concave=_weighted_norm2_fix_concave,
    fix_convex=_weighted_norm2_fix_convex,
))


# ---------------------------------------------------------------------------
# weighted_log_sum_exp(x, y) = log(sum_i y_i exp(x_i))


def weighted_log_sum_exp(x, y):
    """log(sum_i y_i exp(x_i)) with weights y >= 0."""
    x, y = _as_vector(x), _as_vector(y)
    if x.size != y.size:
        raise ShapeError("weighted_log_sum_exp arguments must have equal length")
    attached = [] if y.sign.is_nonneg() else [_nonneg_constraint(y)]
    return SaddleAtom("weighted_log_sum_exp", [x, y], ex.SCALAR, attached=attached)


def _wlse_check(node):
    diags = []
    diags += _arg_curvature_check(node, 0, "convex", "exponents")
    diags += _arg_curvature_check(node, 1, "concave", "weights")
    diags += _disjoint_check(node)
    return diags


def _wlse_eval(v, d):
    w = np.atleast_1d(v[1])
    if np.any(w < -1e-12):
        raise ValueError("weighted_log_sum_exp weights must be nonnegative")
    total = np.sum(np.clip(w, 0, None) * np.exp(np.atleast_1d(v[0])))
    if total <= 0:
        raise ValueError("weighted_log_sum_exp undefined: all weights are zero")
    return np.asarray(np.log(total))


def _wlse_fix_concave(node, kids):
    w = kids[1].value_array
    keep = np.nonzero(w > 0)[0]
    if keep.size == 0:
        raise ValueError("weighted_log_sum_exp undefined: all weights are zero")
    x = node.children[0]
    if keep.size < w.size:
        x = ex.index(x, keep)
    return at.log_sum_exp(x + Constant(np.log(w[keep])))


def _wlse_fix_convex(node, kids):
    xval = kids[0].value_array
    return at.log(ex.sum_entries(ex.multiply(np.exp(xval), node.children[1])))


register_atom(AtomDescriptor(
    "weighted_log_sum_exp", Curvature.UNKNOWN, is_saddle=True,
    convex_slots=(0,), concave_slots=(1,),
    eval_fn=_wlse_eval,
    saddle_check=_wlse_check,
    fix_concave=_wlse_fix_concave,
    fix_convex=_wlse_fix_convex,
))


# ---------------------------------------------------------------------------
# quasidef_quad_form(x, y, P, Q, S) = [x;y]' [[P,S],[S',Q]] [x;y]


def quasidef_quad_form(x, y, P, Q, S):
    """Quadratic form in (x, y) with a quasi-semidefinite matrix:
    P and -Q must be positive semidefinite (eigenvalue floor -1e-9)."""
    x, y = _as_vector(x), _as_vector(y)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    S = np.asarray(S, dtype=float).reshape(x.size, y.size)
    if P.shape != (x.size, x.size) or Q.shape != (y.size, y.size):
        raise ShapeError("quasidef_quad_form block shapes do not match arguments")
    try:
        LP = psd_factor(P)
    except ValueError as err:
        raise ValueError(f"P block: {err}") from None
    try:
        LM = psd_factor(-Q)
    except ValueError as err:
        raise ValueError(f"-Q block: {err}") from None
    data = {"P": P, "Q": Q, "S": S, "LP": LP, "LM": LM}
    return SaddleAtom("quasidef_quad_form", [x, y], ex.SCALAR, data=data)


def _qqf_check(node):
    diags = []
    diags += _arg_curvature_check(node, 0, "affine", "convex side")
    diags += _arg_curvature_check(node, 1, "affine", "concave side")
    diags += _disjoint_check(node)
    return diags


def _qqf_eval(v, d):
    x, y = np.atleast_1d(v[0]), np.atleast_1d(v[1])
    return np.asarray(x @ d["P"] @ x + 2.0 * x @ d["S"] @ y + y @ d["Q"] @ y)


def _qqf_fix_concave(node, kids):
    yval = kids[1].value_array
    d = node.data
    x = node.children[0]
    quad = at.sum_squares(node.data["LP"].T @ x)
    lin = ex.sum_entries(ex.multiply(2.0 * (d["S"] @ yval), x))
    const = Constant(float(yval @ d["Q"] @ yval))
    return quad + lin + const


def _qqf_fix_convex(node, kids):
    xval = kids[0].value_array
    d = node.data
    y = node.children[1]
    quad = ex.negate(at.sum_squares(node.data["LM"].T @ y))
    lin = ex.sum_entries(ex.multiply(2.0 * (d["S"].T @ xval), y))
    const = Constant(float(xval @ d["P"] @ xval))
    return quad + lin + const


register_atom(AtomDescriptor(
    "quasidef_quad_form", Curvature.UNKNOWN, is_saddle=True,
    convex_slots=(0,), concave_slots=(1,),
    eval_fn=_qqf_eval,
    saddle_check=_qqf_check,
    fix_concave=_qqf_fix_concave,
    fix_convex=_qqf_fix_convex,
))


# ---------------------------------------------------------------------------
# saddle_quad_form(x, Y) = x' Y x with Y a PSD matrix expression


def saddle_quad_form(x, Y):
    """x'Yx, convex in the affine x and linear in the PSD matrix Y.

    Y must be a psd-attributed matrix variable; its cone membership is part
    of the concave side's domain.
    """
    x = _as_vector(x)
    Y = as_expr(Y)
    if Y.shape.ndim != 2 or Y.shape.dims[0] != Y.shape.dims[1]:
        raise ShapeError("saddle_quad_form needs a square matrix argument")
    if Y.shape.dims[0] != x.size:
        raise ShapeError("saddle_quad_form dimensions do not match")
    return SaddleAtom("saddle_quad_form", [x, Y], ex.SCALAR)


def _sqf_check(node):
    diags = []
    diags += _arg_curvature_check(node, 0, "affine", "convex side")
    Y = node.children[1]
    if not (isinstance(Y, ex.Variable) and Y.is_psd) and not isinstance(Y, Constant):
        diags.append(("CurvatureViolation",
                      "argument 2 of saddle_quad_form must be a psd-attributed "
                      "matrix variable"))
    diags += _disjoint_check(node)
    return diags


def _sqf_eval(v, d):
    x, Y = np.atleast_1d(v[0]), np.atleast_2d(v[1])
    return np.asarray(x @ Y @ x)


def _sqf_fix_concave(node, kids):
    Yval = kids[1].value_array
    L = psd_factor(Yval, floor=-1e-7)
    return at.sum_squares(L.T @ node.children[0])


def _sqf_fix_convex(node, kids):
    xval = kids[0].value_array
    return ex.sum_entries(ex.multiply(np.outer(xval, xval), node.children[1]))


register_atom(AtomDescriptor(
    "saddle_quad_form", Curvature.UNKNOWN, is_saddle=True,
    convex_slots=(0,), concave_slots=(1,),
    sign_fn=lambda n: Sign.NONNEGATIVE,
    eval_fn=_sqf_eval,
    saddle_check=_sqf_check,
    fix_concave=_sqf_fix_concave,
    fix_convex=_sqf_fix_convex,
))
