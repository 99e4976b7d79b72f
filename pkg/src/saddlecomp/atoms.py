"""The DCP atom set: convex, concave, and structural atoms.

Only the atoms needed by the saddle atoms, the demos, and the test oracles
are included; this is deliberately not a general-purpose atom library.
"""

import numpy as np

from . import expressions as ex
from .errors import ShapeError
from .expressions import (
    ATOMS, NONDECREASING, NONINCREASING, NOT_MONOTONE,
    AtomDescriptor, Curvature, DcpAtom, Shape, Sign, as_expr, register_atom,
)

__all__ = [
    "square", "abs", "pos", "exp", "norm1", "norm2", "norm_inf",
    "sum_squares", "log_sum_exp", "maximum", "log", "minimum", "sqrt",
    "geo_mean", "sum", "hstack", "multiply", "reshape", "transpose", "index",
]

_abs = abs
_sum = sum


def _sign_mono(i, child_sign):
    """Monotonicity of |.|-like atoms: direction follows the child's sign."""
    if child_sign.is_nonneg():
        return NONDECREASING
    if child_sign.is_nonpos():
        return NONINCREASING
    return NOT_MONOTONE


def _nondec(i, child_sign):
    return NONDECREASING


def _vector_arg(e, name):
    e = as_expr(e)
    if e.shape.ndim > 1:
        raise ShapeError(f"{name} expects a scalar or vector argument")
    return e


def _elementwise(name, args):
    args = [as_expr(a) for a in args]
    dims = {a.shape.dims for a in args if not a.shape.is_scalar()}
    if len(dims) > 1:
        raise ShapeError(f"{name}: mismatched shapes {sorted(dims)}")
    if dims:
        target = Shape(dims.pop())
        args = [ex.promote(a, target) if a.shape.is_scalar() else a for a in args]
    else:
        target = ex.SCALAR
    return args, target


# -- convex atoms -----------------------------------------------------------

def square(x):
    x = as_expr(x)
    return DcpAtom("square", [x], x.shape)


def abs(x):  # noqa: A001 - mirrors the usual modeling-language name
    x = as_expr(x)
    return DcpAtom("abs", [x], x.shape)


def pos(x):
    x = as_expr(x)
    return DcpAtom("pos", [x], x.shape)


def exp(x):
    x = as_expr(x)
    return DcpAtom("exp", [x], x.shape)


def norm1(x):
    return DcpAtom("norm1", [_vector_arg(x, "norm1")], ex.SCALAR)


def norm2(x):
    return DcpAtom("norm2", [_vector_arg(x, "norm2")], ex.SCALAR)


def norm_inf(x):
    return DcpAtom("norm_inf", [_vector_arg(x, "norm_inf")], ex.SCALAR)


def sum_squares(x):
    x = as_expr(x)
    return DcpAtom("sum_squares", [x], ex.SCALAR)


def log_sum_exp(x):
    return DcpAtom("log_sum_exp", [_vector_arg(x, "log_sum_exp")], ex.SCALAR)


def maximum(*args):
    args, target = _elementwise("maximum", args)
    return DcpAtom("maximum", args, target)


# -- concave atoms ----------------------------------------------------------

def log(x):
    x = as_expr(x)
    return DcpAtom("log", [x], x.shape)


def minimum(*args):
    args, target = _elementwise("minimum", args)
    return DcpAtom("minimum", args, target)


def sqrt(x):
    x = as_expr(x)
    return DcpAtom("sqrt", [x], x.shape)


def geo_mean(x):
    return DcpAtom("geo_mean", [_vector_arg(x, "geo_mean")], ex.SCALAR)


# -- affine entry points re-exported for a uniform API ----------------------

def sum(x):  # noqa: A001
    return ex.sum_entries(x)


hstack = ex.hstack
multiply = ex.multiply
reshape = ex.reshape
transpose = ex.transpose
index = ex.index


# ---------------------------------------------------------------------------
# Descriptor registrations

def _max_sign(node):
    kids = [c.sign for c in node.children]
    if any(k.is_nonneg() for k in kids):
        return Sign.NONNEGATIVE
    if all(k.is_nonpos() for k in kids):
        return Sign.NONPOSITIVE
    return Sign.UNKNOWN


def _min_sign(node):
    kids = [c.sign for c in node.children]
    if any(k.is_nonpos() for k in kids):
        return Sign.NONPOSITIVE
    if all(k.is_nonneg() for k in kids):
        return Sign.NONNEGATIVE
    return Sign.UNKNOWN


def _geo_mean_eval(vals, data):
    v = np.atleast_1d(vals[0])
    if np.any(v < 0):
        raise ValueError("geo_mean argument must be nonnegative")
    return np.asarray(np.prod(v) ** (1.0 / v.size))


for _d in [
    AtomDescriptor("square", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_sign_mono,
                   eval_fn=lambda v, d: np.square(v[0])),
    AtomDescriptor("abs", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_sign_mono,
                   eval_fn=lambda v, d: np.abs(v[0])),
    AtomDescriptor("pos", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.maximum(v[0], 0.0)),
    AtomDescriptor("exp", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.exp(v[0])),
    AtomDescriptor("norm1", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_sign_mono,
                   eval_fn=lambda v, d: np.asarray(np.sum(np.abs(v[0])))),
    AtomDescriptor("norm2", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_sign_mono,
                   eval_fn=lambda v, d: np.asarray(np.linalg.norm(np.atleast_1d(v[0])))),
    AtomDescriptor("norm_inf", Curvature.CONVEX, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_sign_mono,
                   eval_fn=lambda v, d: np.asarray(np.max(np.abs(v[0])))),
    AtomDescriptor("sum_squares", Curvature.CONVEX,
                   sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_sign_mono,
                   eval_fn=lambda v, d: np.asarray(np.sum(np.square(v[0])))),
    AtomDescriptor("log_sum_exp", Curvature.CONVEX,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.asarray(
                       np.log(np.sum(np.exp(np.atleast_1d(v[0])))))),
    AtomDescriptor("maximum", Curvature.CONVEX, sign_fn=_max_sign,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.maximum.reduce(v)),
    AtomDescriptor("log", Curvature.CONCAVE,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.log(v[0])),
    AtomDescriptor("minimum", Curvature.CONCAVE, sign_fn=_min_sign,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.minimum.reduce(v)),
    AtomDescriptor("sqrt", Curvature.CONCAVE, sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_nondec,
                   eval_fn=lambda v, d: np.sqrt(v[0])),
    AtomDescriptor("geo_mean", Curvature.CONCAVE,
                   sign_fn=lambda n: Sign.NONNEGATIVE,
                   monotonicity=_nondec,
                   eval_fn=_geo_mean_eval),
    # Undisciplined products exist so raw bilinear forms can be built and
    # then rejected by the rule checker with a proper diagnostic.
    AtomDescriptor("multiply_expr", Curvature.UNKNOWN,
                   eval_fn=lambda v, d: v[0] * v[1]),
    AtomDescriptor("matprod", Curvature.UNKNOWN,
                   eval_fn=lambda v, d: np.asarray(v[0] @ v[1])),
]:
    register_atom(_d)
