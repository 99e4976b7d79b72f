"""DCP canonicalization: epigraph lowering of expressions onto cone rows.

``RowBuilder`` accumulates columns and cone-membership rows.  Rows are
stored as affine expressions ``v`` over the columns with the semantics
``v(z) in K``; converting to standard form ``A z + s = b, s in K`` sets
``A_row = -coeffs(v)`` and ``b_row = const(v)``.  Row order is the block
creation order and column order the registration order, so identical input
produces identical programs.

Each atom lowers through its graph implementation (epigraph for convex
atoms, hypograph for concave ones).  The representations are exact as sets,
not only at optimality, which the dualization engine relies on when it
dualizes constraint sets.
"""

import numpy as np
import scipy.sparse as sp

from . import expressions as ex
from . import linops
from .conic import Cone, ConeProgram, EXP, NONNEG, PSD, SOC, ZERO
from .errors import DspError
from .rules import Diagnostic


class AffExpr:
    """Sparse affine expression over builder columns."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def col(j, coef=1.0):
        return AffExpr({int(j): float(coef)})

    @staticmethod
    def constant(v):
        return AffExpr({}, v)

    def copy(self):
        return AffExpr(self.terms, self.const)

    def __add__(self, other):
        if not isinstance(other, AffExpr):
            return AffExpr(self.terms, self.const + float(other))
        out = AffExpr(self.terms, self.const + other.const)
        for j, c in other.terms.items():
            out.terms[j] = out.terms.get(j, 0.0) + c
        return out

    __radd__ = __add__

    def __sub__(self, other):
        return self + (other * -1.0 if isinstance(other, AffExpr) else -float(other))

    def __rsub__(self, other):
        return (self * -1.0) + float(other)

    def __mul__(self, scalar):
        s = float(scalar)
        return AffExpr({j: c * s for j, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, z):
        return self.const + sum(c * z[j] for j, c in self.terms.items())


def combine(T, exprs, consts=None):
    """Rows of T applied to a list of AffExprs (dense, desk scale)."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    out = []
    for i in range(T.shape[0]):
        acc = AffExpr.constant(consts[i] if consts is not None else 0.0)
        for j, e in enumerate(exprs):
            if T[i, j] != 0.0:
                acc = acc + e * T[i, j]
        out.append(acc)
    return out


class RowBuilder:
    """Accumulates columns, cone rows, and variable registrations."""

    def __init__(self):
        self.ranges = []  # (label, start, size)
        self.num_cols = 0
        self.var_cols = {}  # var id -> ndarray of column indices
        self.blocks = []  # (Cone, [AffExpr])
        self._labels = set()
        self._uid = 0

    # -- columns ------------------------------------------------------------

    def fresh_label(self, base):
        label = base
        while label in self._labels:
            self._uid += 1
            label = f"{base}#{self._uid}"
        self._labels.add(label)
        return label

    def add_cols(self, base, size):
        label = self.fresh_label(base)
        start = self.num_cols
        self.num_cols += size
        self.ranges.append((label, start, size))
        return np.arange(start, start + size)

    def register_variable(self, var, domain_rows=True):
        if var.id in self.var_cols:
            return self.var_cols[var.id]
        cols = self.add_cols(var.name, var.packed_size)
        self.var_cols[var.id] = cols
        if domain_rows:
            if var.is_nonneg:
                self.add_block(NONNEG, [AffExpr.col(j) for j in cols])
            if var.is_psd:
                self.add_block(Cone(PSD, var.shape.dims[0]),
                               [AffExpr.col(j) for j in cols])
        return cols

    # -- rows -----------------------------------------------------------------

    def add_block(self, cone, exprs):
        if isinstance(cone, str):
            cone = Cone(cone, len(exprs))
        assert cone.nrows == len(exprs)
        self.blocks.append((cone, list(exprs)))

    @property
    def num_rows(self):
        return sum(c.nrows for c, _ in self.blocks)

    # -- lowering ---------------------------------------------------------------

    def affine(self, e):
        """Affine expression -> list of AffExprs over registered columns."""
        try:
            coeffs, const = linops.affine_coeffs(e)
        except ValueError as err:
            raise DspError(f"expected an affine expression: {err}") from None
        exprs = [AffExpr.constant(v) for v in const]
        for vid, mat in coeffs.items():
            cols = self.var_cols[vid]
            for i in range(mat.shape[0]):
                for j, col in enumerate(cols):
                    if mat[i, j] != 0.0:
                        exprs[i].terms[int(col)] = exprs[i].terms.get(int(col), 0.0) + mat[i, j]
        return exprs

    def lower(self, e, want):
        """Lower ``e`` in a convex or concave position ('affine' demands
        structural affinity).  Returns one AffExpr per entry, column-major."""
        e = ex.as_expr(e)
        if isinstance(e, (ex.Constant, ex.Variable)):
            return self.affine(e)
        if isinstance(e, ex.SaddleExtremum):
            ok = (want == "convex" and e.direction == "max") or \
                 (want == "concave" and e.direction == "min")
            if not ok:
                raise DspError(f"saddle_{e.direction} used in a {want} position")
            return _SE_LOWERING(self, e)
        if isinstance(e, ex.SaddleAtom):
            raise DspError("saddle atoms cannot appear in a DCP lowering")
        if want == "affine" or e.curvature.is_affine():
            return self.affine(e)
        if isinstance(e, ex.AffineOp):
            return self._lower_affine_op(e, want)
        return self._lower_atom(e, want)

    def _lower_affine_op(self, e, want):
        if e.op == "add":
            kids = [self.lower(c, want) for c in e.children]
            return [sum(ks[i] for ks in kids) for i in range(e.size)]
        if e.op == "negate":
            kid = self.lower(e.children[0], _flip(want))
            return [k * -1.0 for k in kid]
        if e.op == "scale":
            kid = self.lower(e.children[0], want if e.data >= 0 else _flip(want))
            return [k * e.data for k in kid]
        if e.op in ("multiply", "matmul"):
            arr = e.data[0] if e.op == "matmul" else e.data
            if np.all(arr >= 0):
                kid_want = want
            elif np.all(arr <= 0):
                kid_want = _flip(want)
            else:
                kid_want = "affine"
            kid = self.lower(e.children[0], kid_want)
            return combine(linops._op_matrix(e), kid)
        # gather, sum, hstack, promote preserve position
        if e.op == "hstack":
            out = []
            for c in e.children:
                out.extend(self.lower(c, want))
            return out
        kid = self.lower(e.children[0], want)
        return combine(linops._op_matrix(e), kid)

    def _lower_atom(self, e, want):
        d = e.descriptor
        if want == "convex" and d.curvature is not ex.Curvature.CONVEX:
            raise DspError(f"{e.name} is not convex; cannot appear here")
        if want == "concave" and d.curvature is not ex.Curvature.CONCAVE:
            raise DspError(f"{e.name} is not concave; cannot appear here")
        kid_exprs = []
        for i, c in enumerate(e.children):
            mono = d.monotonicity(i, c.sign) if d.monotonicity else ex.NOT_MONOTONE
            if mono == ex.NONDECREASING:
                kid_want = want
            elif mono == ex.NONINCREASING:
                kid_want = _flip(want)
            else:
                kid_want = "affine"
            kid_exprs.append(self.lower(c, kid_want))
        return GRAPH_IMPLS[e.name](self, e, kid_exprs)

    def add_constraint(self, con):
        """Lower one relational constraint into rows."""
        if con.op == "==":
            lhs = self.lower(con.lhs, "affine")
            rhs = self.lower(con.rhs, "affine")
            self.add_block(ZERO, [l - r for l, r in zip(lhs, rhs)])
        else:
            lhs = self.lower(con.lhs, "convex")
            rhs = self.lower(con.rhs, "concave")
            self.add_block(NONNEG, [r - l for l, r in zip(lhs, rhs)])

    # -- extraction ---------------------------------------------------------

    def rows_dense(self):
        """(M, k, cones): rows as v(z) = k - M z, i.e. M z + s = k."""
        m = self.num_rows
        M = np.zeros((m, self.num_cols))
        k = np.zeros(m)
        cones = []
        r = 0
        for cone, exprs in self.blocks:
            cones.append(cone)
            for v in exprs:
                for j, c in v.terms.items():
                    M[r, j] = -c
                k[r] = v.const
                r += 1
        return M, k, cones

    def to_cone_program(self, objective: AffExpr) -> ConeProgram:
        offset = objective.const
        one = None
        if offset != 0.0:
            one = self.add_cols("__one", 1)[0]
            self.add_block(ZERO, [AffExpr.col(one) - 1.0])
        c = np.zeros(self.num_cols)
        for j, v in objective.terms.items():
            c[j] = v
        if one is not None:
            c[one] = offset
        M, k, cones = self.rows_dense()
        var_index = {label: (start, start + size) for label, start, size in self.ranges}
        return ConeProgram(c=c, A=sp.csc_matrix(M), b=k, cones=cones,
                           var_index=var_index)


def _flip(want):
    return {"convex": "concave", "concave": "convex", "affine": "affine"}[want]


# ---------------------------------------------------------------------------
# Saddle-extremum lowering hook (installed by the dualization module)

def _missing_se(builder, node):
    raise DspError("saddle extremum lowering is not installed")


_SE_LOWERING = _missing_se


def set_se_lowering(fn):
    global _SE_LOWERING
    _SE_LOWERING = fn


# ---------------------------------------------------------------------------
# Graph implementations


def _fresh(builder, base, size):
    cols = builder.add_cols(base, size)
    return [AffExpr.col(j) for j in cols]


def _graph_square(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__sq", len(z))
    for zi, ti in zip(z, t):
        builder.add_block(Cone(SOC, 3), [ti + 1.0, zi * 2.0, 1.0 - ti])
    return t


def _graph_abs(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__abs", len(z))
    builder.add_block(NONNEG, [ti - zi for zi, ti in zip(z, t)] +
                      [ti + zi for zi, ti in zip(z, t)])
    return t


def _graph_pos(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__pos", len(z))
    builder.add_block(NONNEG, [ti - zi for zi, ti in zip(z, t)] + list(t))
    return t


def _graph_exp(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__exp", len(z))
    for zi, ti in zip(z, t):
        builder.add_block(Cone(EXP, 3), [zi, AffExpr.constant(1.0), ti])
    return t


def _graph_norm1(builder, node, kids):
    z = kids[0]
    v = _fresh(builder, "__n1", len(z))
    builder.add_block(NONNEG, [vi - zi for zi, vi in zip(z, v)] +
                      [vi + zi for zi, vi in zip(z, v)])
    return [sum(v, AffExpr.constant(0.0))]


def _graph_norm2(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__n2", 1)[0]
    builder.add_block(Cone(SOC, 1 + len(z)), [t] + list(z))
    return [t]


def _graph_norm_inf(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__ninf", 1)[0]
    builder.add_block(NONNEG, [t - zi for zi in z] + [t + zi for zi in z])
    return [t]


def _graph_sum_squares(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__ssq", 1)[0]
    builder.add_block(Cone(SOC, 2 + len(z)),
                      [t + 1.0] + [zi * 2.0 for zi in z] + [t - 1.0])
    return [t]


def _graph_log_sum_exp(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__lse", 1)[0]
    u = _fresh(builder, "__lse_u", len(z))
    builder.add_block(NONNEG, [AffExpr.constant(1.0) - sum(u, AffExpr.constant(0.0))])
    for zi, ui in zip(z, u):
        builder.add_block(Cone(EXP, 3), [zi - t, AffExpr.constant(1.0), ui])
    return [t]


def _graph_maximum(builder, node, kids):
    size = len(kids[0])
    t = _fresh(builder, "__max", size)
    rows = []
    for kid in kids:
        rows.extend(t[i] - kid[i] for i in range(size))
    builder.add_block(NONNEG, rows)
    return t


def _graph_minimum(builder, node, kids):
    size = len(kids[0])
    t = _fresh(builder, "__min", size)
    rows = []
    for kid in kids:
        rows.extend(kid[i] - t[i] for i in range(size))
    builder.add_block(NONNEG, rows)
    return t


def _graph_log(builder, node, kids):
    z = kids[0]
    t = _fresh(builder, "__log", len(z))
    for zi, ti in zip(z, t):
        builder.add_block(Cone(EXP, 3), [ti, AffExpr.constant(1.0), zi])
    return t


def _graph_sqrt(builder, node, kids):
    # s*s <= z via a three-row second-order cone; s may take either sign,
    # so the projection onto (z, s) is the exact hypograph of sqrt.
    z = kids[0]
    s = _fresh(builder, "__sqrt", len(z))
    for zi, si in zip(z, s):
        builder.add_block(Cone(SOC, 3), [zi + 1.0, si * 2.0, zi - 1.0])
    return s


def _graph_geo_mean(builder, node, kids):
    z = list(kids[0])
    n = len(z)
    if n == 1:
        return z
    t = _fresh(builder, "__gm", 1)[0]
    s = _fresh(builder, "__gm_s", 1)[0]
    builder.add_block(NONNEG, [s, s - t])
    depth = int(np.ceil(np.log2(n)))
    leaves = z + [s] * (2 ** depth - n)
    level = leaves
    while len(level) > 1:
        nxt = []
        for a, b in zip(level[0::2], level[1::2]):
            g = _fresh(builder, "__gm_n", 1)[0]
            # g*g <= a*b (rotated cone as a standard SOC block)
            builder.add_block(Cone(SOC, 3), [a + b, g * 2.0, a - b])
            nxt.append(g)
        level = nxt
    builder.add_block(NONNEG, [level[0] - s])
    return [t]


GRAPH_IMPLS = {
    "square": _graph_square,
    "abs": _graph_abs,
    "pos": _graph_pos,
    "exp": _graph_exp,
    "norm1": _graph_norm1,
    "norm2": _graph_norm2,
    "norm_inf": _graph_norm_inf,
    "sum_squares": _graph_sum_squares,
    "log_sum_exp": _graph_log_sum_exp,
    "maximum": _graph_maximum,
    "minimum": _graph_minimum,
    "log": _graph_log,
    "sqrt": _graph_sqrt,
    "geo_mean": _graph_geo_mean,
}


# ---------------------------------------------------------------------------
# Whole-problem canonicalization


def dcp_diagnostics(objective, constraints, sense):
    """Diagnostics explaining why a problem is not DCP; empty when it is."""
    diags = []
    if ex.contains_saddle_atom(objective) or any(
            ex.contains_saddle_atom(c.residual()) for c in constraints):
        diags.append(Diagnostic("CurvatureViolation", "root",
                                "saddle atoms must be dualized before "
                                "canonicalization"))
        return diags
    cur = objective.curvature
    need = cur.is_convex() if sense == "min" else cur.is_concave()
    if not need:
        diags.append(Diagnostic(
            "CurvatureViolation", "root",
            f"objective must be {'convex' if sense == 'min' else 'concave'}, "
            f"got {cur.value}"))
    for i, con in enumerate(constraints):
        if not con.is_dcp():
            diags.append(Diagnostic(
                "CurvatureViolation", f"constraints[{i}]",
                f"constraint is not DCP: {con!r}"))
    return diags


def canonicalize_dcp(objective, constraints, sense="min", check=True) -> ConeProgram:
    """Lower a DCP problem (objective plus relational constraints) to a
    standard-form cone program whose optimal value matches the problem's.

    Maximization negates the objective; the returned program is always a
    minimization and its objective includes any constant offset through a
    pinned auxiliary column.
    """
    objective = ex.as_expr(objective)
    constraints = list(constraints)
    if check:
        diags = dcp_diagnostics(objective, constraints, sense)
        if diags:
            raise DspError("problem is not DCP", diags)
    builder = RowBuilder()
    vs = {v.id: v for v in ex.variables_of(objective)}
    for con in constraints:
        for v in con.variables():
            vs.setdefault(v.id, v)
    for vid in sorted(vs):
        builder.register_variable(vs[vid])
    if sense == "min":
        obj = builder.lower(objective, "convex")[0]
    else:
        obj = builder.lower(ex.negate(objective), "convex")[0]
    for con in constraints:
        builder.add_constraint(con)
    return builder, builder.to_cone_program(obj)
