"""Automated dualization of compliant saddle expressions.

A saddle expression compiles to the conic template

    phi(x, y) = inf_{f,t,u} { f'y + t  |  P f + t p + Q u + R x <=_K s },

with f ranging over the packed coordinates of the concave variables and t
scalar.  Atoms contribute template blocks; conic combinations concatenate
them and share f coordinates through index maps; affine pre-composition
folds into R and the y-coordinate mapping; promoted convex terms enter t
through their epigraphs; promoted concave terms (and the concave arguments
of atoms, weighted by nonnegative template variables) enter through the
conic dual of their hypograph representations.

Dualizing the supremum over a represented set Y = {y | Cy + Dv <=_K e}
swaps the inf and sup and replaces the inner supremum by an infimum over a
multiplier in the dual cone, yielding rows

    lambda'e + t <= epi,  C'lambda = f,  D'lambda = 0,  lambda >=_{K*} 0,

together with the template rows: a tractable conic representation of the
epigraph of the saddle max.  Validity of the swap is never checked
syntactically; the problem layer certifies it numerically at solve time.

The mirrored template (of -phi with the roles swapped) is obtained
mechanically by conic duality applied to the template itself, so saddle
min functions reuse the same machinery on the mirrored form.
"""

from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from . import linops
from .canon import AffExpr, RowBuilder, combine, set_se_lowering
from .conic import Cone, ConeProgram, FREE, NONNEG, PSD, SOC, EXP, ZERO, dual_cone, SetRep
from .errors import DspError
from .packing import pack_matrix, svec, smat, triangle_indices
from .rules import Diagnostic, classify_roles, decompose
import scipy.sparse as sp


class VarLayout:
    """Packed coordinate layout for an ordered (id-sorted) variable list."""

    def __init__(self, variables):
        self.vars = sorted(variables, key=lambda v: v.id)
        self.offsets = {}
        off = 0
        for v in self.vars:
            self.offsets[v.id] = off
            off += v.packed_size
        self.dim = off

    def coords(self, var):
        off = self.offsets[var.id]
        return np.arange(off, off + var.packed_size)

    def pack(self, env):
        out = np.zeros(self.dim)
        for v in self.vars:
            val = np.asarray(env[v.id], dtype=float)
            out[self.coords(v)] = svec(val) if v.is_symmetric \
                else np.atleast_1d(val).flatten(order="F")
        return out

    def unpack(self, vec):
        out = {}
        for v in self.vars:
            piece = vec[self.coords(v)]
            if v.is_symmetric:
                out[v.id] = smat(piece)
            elif v.shape.is_scalar():
                out[v.id] = float(piece[0])
            else:
                out[v.id] = piece.reshape(v.shape.dims, order="F")
        return out


@dataclass
class SaddleConicForm:
    """The (P, Q, R, p, s, K) template of a saddle expression."""

    P: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    s: np.ndarray
    cones: list
    x_layout: VarLayout
    y_layout: VarLayout

    @property
    def f_dim(self):
        return self.P.shape[1]

    @property
    def u_dim(self):
        return self.Q.shape[1]

    @property
    def x_dim(self):
        return self.R.shape[1]

    @property
    def num_rows(self):
        return self.P.shape[0]

    def inner_program(self, x_packed, y_packed) -> ConeProgram:
        """Cone program computing inf{f'y + t | rows} at fixed x: the
        representation oracle solves this and compares with direct
        evaluation."""
        nf, nu, nx = self.f_dim, self.u_dim, self.x_dim
        n = nf + 1 + nu + nx
        c = np.concatenate([y_packed, [1.0], np.zeros(nu + nx)])
        M = np.hstack([self.P, self.p.reshape(-1, 1), self.Q, self.R])
        A = np.vstack([M, np.hstack([np.zeros((nx, nf + 1 + nu)), np.eye(nx)])])
        b = np.concatenate([self.s, x_packed])
        cones = list(self.cones) + ([Cone(ZERO, nx)] if nx else [])
        return ConeProgram(c=c, A=sp.csc_matrix(A), b=b, cones=cones,
                           var_index={"f": (0, nf), "t": (nf, nf + 1),
                                      "u": (nf + 1, nf + 1 + nu),
                                      "x": (nf + 1 + nu, n)})


def mirror_form(form: SaddleConicForm) -> SaddleConicForm:
    """Template of -phi with the convex and concave roles swapped.

    Mechanical conic dualization of the template's inner infimum over
    (f, t, u, x):

        -phi(x, y) = inf_{nu, ft, tt} { ft'x + tt |
            P'nu + y = 0,  p'nu = -1,  Q'nu = 0,  R'nu + ft = 0,
            s'nu <= tt,  nu >=_{K*} 0 }.
    """
    m, k, nx, rows = form.f_dim, form.u_dim, form.x_dim, form.num_rows
    # new column order: [ft (nx), tt (1), nu (rows), y-old (m)]
    nf2, nu2 = nx, rows
    ncols = nf2 + 1 + nu2 + m
    ft = np.arange(nf2)
    tt = nf2
    nu = np.arange(nf2 + 1, nf2 + 1 + nu2)
    yc = np.arange(nf2 + 1 + nu2, ncols)

    blocks = []  # (cone, M_rows, k_rows) with semantics k - M z in K
    def add(cone, M, kvec):
        blocks.append((cone, M, kvec))

    # P'nu + y = 0
    M = np.zeros((m, ncols))
    M[:, nu] = form.P.T
    M[:, yc] = np.eye(m)
    add(Cone(ZERO, m) if m else None, M, np.zeros(m))
    # p'nu = -1
    M = np.zeros((1, ncols))
    M[0, nu] = form.p
    add(Cone(ZERO, 1), M, np.array([-1.0]))
    # Q'nu = 0
    if k:
        M = np.zeros((k, ncols))
        M[:, nu] = form.Q.T
        add(Cone(ZERO, k), M, np.zeros(k))
    # R'nu + ft = 0
    if nx:
        M = np.zeros((nx, ncols))
        M[:, nu] = form.R.T
        M[:, ft] = np.eye(nx)
        add(Cone(ZERO, nx), M, np.zeros(nx))
    # s'nu - tt <= 0
    M = np.zeros((1, ncols))
    M[0, nu] = form.s
    M[0, tt] = -1.0
    add(Cone(NONNEG, 1), M, np.zeros(1))
    # nu in K*
    off = 0
    for cone in form.cones:
        dual = dual_cone(cone)
        nr = cone.nrows
        if dual.kind != FREE:
            M = np.zeros((nr, ncols))
            M[:, nu[off:off + nr]] = -np.eye(nr)
            add(dual, M, np.zeros(nr))
        off += nr

    Ms = np.vstack([M for c, M, _ in blocks if c is not None])
    ks = np.concatenate([kv for c, _, kv in blocks if c is not None])
    cones = [c for c, _, _ in blocks if c is not None]
    # back to <=_K convention: k - M z in K means template matrix is M
    return SaddleConicForm(
        P=Ms[:, ft.reshape(-1)] if nf2 else Ms[:, 0:0],
        p=Ms[:, tt],
        Q=Ms[:, nu],
        R=Ms[:, yc] if m else Ms[:, 0:0],
        s=ks,
        cones=cones,
        x_layout=form.y_layout,
        y_layout=form.x_layout,
    )


# ---------------------------------------------------------------------------
# Set representation


def represent_set(local_vars, constraints) -> SetRep:
    """Conic representation {z | exists u: A z + B u <=_K c} of the set cut
    out by DCP constraints over ``local_vars`` (plus their attribute
    domains).  Constraints referencing any other variable are rejected."""
    layout = VarLayout(local_vars)
    allowed = {v.id for v in layout.vars}
    builder = RowBuilder()
    for v in layout.vars:
        builder.register_variable(v, domain_rows=True)
    for i, con in enumerate(constraints):
        bad = sorted(v.name for v in con.variables() if v.id not in allowed)
        if bad:
            raise DspError(
                f"set constraint {i} references non-member variables {bad}",
                [Diagnostic("NonLocalVariable", f"constraints[{i}]",
                            f"variables {bad} are not members of the set's "
                            "variable scope")])
        if not con.is_dcp():
            raise DspError(f"set constraint {i} is not DCP",
                           [Diagnostic("CurvatureViolation", f"constraints[{i}]",
                                       f"{con!r} is not DCP")])
        builder.add_constraint(con)
    M, kvec, cones = builder.rows_dense()
    d = layout.dim
    return SetRep(Amat=M[:, :d], Bmat=M[:, d:], cvec=kvec, cones=cones,
                  main_dim=d)


# ---------------------------------------------------------------------------
# Form builder


class FormBuilder:
    """Accumulates template rows, phi (the y coefficients), and tau while
    walking the conic-combination structure of a saddle expression."""

    def __init__(self, roles):
        self.x_layout = VarLayout(roles.convex_vars)
        self.y_layout = VarLayout(roles.concave_vars)
        self.role = {v.id: "convex" for v in roles.convex_vars}
        self.role.update({v.id: "concave" for v in roles.concave_vars})
        self.builder = RowBuilder()
        for v in self.x_layout.vars:
            self.builder.register_variable(v, domain_rows=False)
        self.x_cols_end = self.builder.num_cols
        self.phi = [AffExpr.constant(0.0) for _ in range(self.y_layout.dim)]
        self.tau = AffExpr.constant(0.0)

    # -- concave machinery ---------------------------------------------------

    def concave_dual_contribution(self, g_vector_expr, weights, scale=1.0):
        """Contribute scale * sum_i weights_i * G_i(y) for concave G and
        nonnegative weights (AffExprs or floats), through the conic dual of
        G's joint hypograph representation."""
        g = ex.as_expr(g_vector_expr)
        n = g.size
        sub = RowBuilder()
        gvars = sorted(ex.variables_of(g), key=lambda v: v.id)
        for v in gvars:
            if self.role.get(v.id) != "concave":
                raise DspError(
                    f"variable {v.name} appears on the concave side of a term "
                    "but is not a concave-role variable")
            sub.register_variable(v, domain_rows=True)
        ydim = sub.num_cols
        wcols = sub.add_cols("__w", n)
        glow = sub.lower(g, "concave")
        sub.add_block(NONNEG, [glow[i] - AffExpr.col(wcols[i]) for i in range(n)])
        M, kvec, cones = sub.rows_dense()
        G = M[:, :ydim]
        Gamma = M[:, wcols[0]:wcols[0] + n]
        H = np.delete(M[:, ydim:], np.arange(wcols[0] - ydim, wcols[0] - ydim + n),
                      axis=1)
        rows = M.shape[0]

        mu = self.builder.add_cols("__mu", rows)
        mu_exprs = [AffExpr.col(j) for j in mu]
        off = 0
        for cone in cones:
            dual = dual_cone(cone)
            if dual.kind != FREE:
                self.builder.add_block(dual, mu_exprs[off:off + cone.nrows])
            off += cone.nrows
        # Gamma' mu = weights
        for i in range(n):
            w = weights[i] if isinstance(weights[i], AffExpr) \
                else AffExpr.constant(weights[i])
            lhs = AffExpr.constant(0.0)
            for r in range(rows):
                if Gamma[r, i] != 0.0:
                    lhs = lhs + mu_exprs[r] * Gamma[r, i]
            self.builder.add_block(ZERO, [lhs - w])
        # H' mu = 0
        for j in range(H.shape[1]):
            col = H[:, j]
            if np.any(col != 0.0):
                lhs = AffExpr.constant(0.0)
                for r in np.nonzero(col)[0]:
                    lhs = lhs + mu_exprs[r] * col[r]
                self.builder.add_block(ZERO, [lhs])
        # phi -= scale * G' mu ; tau += scale * k' mu
        for v in gvars:
            subcols = sub.var_cols[v.id]
            gcoords = self.y_layout.coords(v)
            for local_j, coord in zip(subcols, gcoords):
                col = G[:, local_j]
                for r in np.nonzero(col)[0]:
                    self.phi[coord] = self.phi[coord] + mu_exprs[r] * (-col[r] * scale)
        for r in range(rows):
            if kvec[r] != 0.0:
                self.tau = self.tau + mu_exprs[r] * (kvec[r] * scale)

    def y_affine_maps(self, e):
        """(C, d) with packed(e) = C y + d over the global concave layout."""
        coeffs, const = linops.affine_coeffs(e)
        C = np.zeros((const.size, self.y_layout.dim))
        for vid, mat in coeffs.items():
            var = next(v for v in self.y_layout.vars if v.id == vid)
            C[:, self.y_layout.coords(var)] = mat
        return C, const

    def add_phi_affine(self, C, d, f_exprs, scale=1.0):
        """phi += scale * C' f(x),  tau += scale * d' f(x)."""
        for coord in range(self.y_layout.dim):
            col = C[:, coord]
            for k in np.nonzero(col)[0]:
                self.phi[coord] = self.phi[coord] + f_exprs[k] * (col[k] * scale)
        for k in np.nonzero(d)[0]:
            self.tau = self.tau + f_exprs[k] * (d[k] * scale)

    # -- extraction -----------------------------------------------------------

    def finish(self) -> SaddleConicForm:
        b = self.builder
        m = self.y_layout.dim
        fcols = b.add_cols("__f", m) if m else np.arange(0)
        tcol = b.add_cols("__t", 1)[0]
        zero_rows = [AffExpr.col(fcols[j]) - self.phi[j] for j in range(m)]
        zero_rows.append(AffExpr.col(tcol) - self.tau)
        b.add_block(Cone(ZERO, m + 1), zero_rows)
        M, kvec, cones = b.rows_dense()
        xe = self.x_cols_end
        ucols = np.arange(xe, fcols[0] if m else tcol)
        return SaddleConicForm(
            P=M[:, fcols] if m else M[:, 0:0],
            p=M[:, tcol],
            Q=M[:, ucols],
            R=M[:, :xe],
            s=kvec,
            cones=cones,
            x_layout=self.x_layout,
            y_layout=self.y_layout,
        )


def saddle_conic_form(e, roles) -> SaddleConicForm:
    """Compile a DSP-compliant expression (with fixed roles; no ambiguous
    variables) into its conic saddle template."""
    e = ex.as_expr(e)
    if not e.shape.is_scalar():
        raise DspError("saddle expressions must be scalar")
    if roles.affine_vars:
        names = [v.name for v in roles.affine_vars]
        raise DspError(f"roles must be fully resolved; ambiguous: {names}",
                       [Diagnostic("AmbiguousRole", "root",
                                   f"variables {names} have no assigned role")])
    fb = FormBuilder(roles)
    for coef, node, path in decompose(e):
        _emit_term(fb, coef, node, path)
    return fb.finish()


def _emit_term(fb, coef, node, path):
    if coef == 0.0:
        return
    if isinstance(node, ex.SaddleAtom):
        if coef >= 0:
            _ATOM_EMITTERS[node.name](fb, node, coef)
        else:
            _emit_mirrored_atom(fb, node, -coef)
        return
    # promoted DCP term (possibly containing saddle extrema)
    try:
        cur = node.curvature
    except TypeError:
        raise DspError(
            "saddle expressions may only be combined by conic combination",
            [Diagnostic("CurvatureViolation", path,
                        "saddle atom nested under a non-conic operation")])
    if coef < 0:
        cur = cur.flipped()
    if cur.is_constant():
        fb.tau = fb.tau + coef * float(ex.evaluate(node, {}))
        return
    if cur is ex.Curvature.AFFINE:
        coeffs, const = linops.affine_coeffs(node)
        fb.tau = fb.tau + coef * const[0]
        for vid, mat in coeffs.items():
            role = fb.role.get(vid)
            if role == "convex":
                cols = fb.builder.var_cols[vid]
                for j, col in enumerate(cols):
                    if mat[0, j] != 0.0:
                        fb.tau = fb.tau + AffExpr.col(col) * (coef * mat[0, j])
            elif role == "concave":
                var = next(v for v in fb.y_layout.vars if v.id == vid)
                coords = fb.y_layout.coords(var)
                for j, coord in enumerate(coords):
                    if mat[0, j] != 0.0:
                        fb.phi[coord] = fb.phi[coord] + coef * mat[0, j]
            else:
                raise DspError(f"variable id {vid} has no resolved role")
        return
    if cur is ex.Curvature.CONVEX:
        for v in ex.variables_of(node):
            if fb.role.get(v.id) != "convex" and not v.is_local:
                raise DspError(
                    f"convex term uses variable {v.name} which is not on the "
                    "convex side", [Diagnostic("MixedVariables", path, v.name)])
        low = fb.builder.lower(node, "convex" if coef > 0 else "concave")
        fb.tau = fb.tau + low[0] * coef
        return
    if cur is ex.Curvature.CONCAVE:
        h = ex.scale(coef, node)
        fb.concave_dual_contribution(h, [1.0])
        return
    raise DspError("term has unknown curvature",
                   [Diagnostic("CurvatureViolation", path,
                               f"{node!r} has unknown curvature")])


def _emit_mirrored_atom(fb, node, scale):
    """A negated saddle atom: negate and swap roles, realized by emitting
    the mirrored single-atom template as a sub-form."""
    sub_roles = classify_roles(node)
    if sub_roles.affine_vars:
        raise DspError(
            f"cannot mirror {node.name}: ambiguous variables "
            f"{[v.name for v in sub_roles.affine_vars]}")
    sub = saddle_conic_form(node, sub_roles)
    mirrored = mirror_form(sub)
    _emit_subform(fb, mirrored, scale)


def _emit_subform(fb, form, scale):
    """Compose a sub-template into the parent builder: its rows are added
    over fresh (f, t, u) columns, its f'y + t value is scaled into
    (phi, tau), and its x-side variables map onto parent columns."""
    b = fb.builder
    fcols = b.add_cols("__sf", form.f_dim) if form.f_dim else np.arange(0)
    tcol = b.add_cols("__st", 1)[0]
    ucols = b.add_cols("__su", form.u_dim) if form.u_dim else np.arange(0)
    xmap = []
    for v in form.x_layout.vars:
        if fb.role.get(v.id) != "convex":
            raise DspError(
                f"variable {v.name} must be on the convex side of the parent "
                "expression")
        xmap.extend(b.var_cols[v.id])
    xmap = np.asarray(xmap, dtype=int)

    r = 0
    for cone in form.cones:
        nr = cone.nrows
        exprs = []
        for i in range(r, r + nr):
            v = AffExpr.constant(form.s[i])
            for j in np.nonzero(form.P[i])[0]:
                v = v - AffExpr.col(fcols[j]) * form.P[i, j]
            if form.p[i] != 0.0:
                v = v - AffExpr.col(tcol) * form.p[i]
            for j in np.nonzero(form.Q[i])[0]:
                v = v - AffExpr.col(ucols[j]) * form.Q[i, j]
            for j in np.nonzero(form.R[i])[0]:
                v = v - AffExpr.col(xmap[j]) * form.R[i, j]
            exprs.append(v)
        b.add_block(cone, exprs)
        r += nr

    for v in form.y_layout.vars:
        sub_coords = form.y_layout.coords(v)
        par_coords = fb.y_layout.coords(v)
        for sc, pc in zip(sub_coords, par_coords):
            fb.phi[pc] = fb.phi[pc] + AffExpr.col(fcols[sc]) * scale
    fb.tau = fb.tau + AffExpr.col(tcol) * scale


# ---------------------------------------------------------------------------
# Atom emitters (forward templates)


def _emit_inner(fb, node, scale):
    F, G = node.children
    f_exprs = fb.builder.affine(F)
    C, d = fb.y_affine_maps(G)
    fb.add_phi_affine(C, d, f_exprs, scale)


def _emit_saddle_inner(fb, node, scale):
    F, G = node.children
    n = F.size
    rho = [AffExpr.col(j) for j in fb.builder.add_cols("__rho", n)]
    flow = fb.builder.lower(F, "convex")
    fb.builder.add_block(NONNEG, [rho[i] - flow[i] for i in range(n)])
    fb.concave_dual_contribution(G, [r * scale for r in rho])


def _emit_weighted_norm2(fb, node, scale):
    X, G = node.children
    n = X.size
    xlow = fb.builder.lower(X, "convex" if not X.curvature.is_affine() else "affine")
    h = [AffExpr.col(j) for j in fb.builder.add_cols("__h", n)]
    t0 = AffExpr.col(fb.builder.add_cols("__t0", 1)[0])
    for i in range(n):
        # x_i^2 <= 2 h_i t0  (rotated cone as a standard block)
        fb.builder.add_block(Cone(SOC, 3),
                             [h[i] + t0, xlow[i] * np.sqrt(2.0), h[i] - t0])
    fb.concave_dual_contribution(G, [hi * scale for hi in h])
    fb.tau = fb.tau + t0 * (0.5 * scale)


def _emit_weighted_log_sum_exp(fb, node, scale):
    X, G = node.children
    n = X.size
    xlow = fb.builder.lower(X, "convex")
    h = [AffExpr.col(j) for j in fb.builder.add_cols("__h", n)]
    t0 = AffExpr.col(fb.builder.add_cols("__t0", 1)[0])
    for i in range(n):
        fb.builder.add_block(Cone(EXP, 3),
                             [xlow[i] - t0 - 1.0, AffExpr.constant(1.0), h[i]])
    fb.concave_dual_contribution(G, [hi * scale for hi in h])
    fb.tau = fb.tau + t0 * scale


def _emit_quasidef(fb, node, scale):
    X, Y = node.children
    d = node.data
    P, S, LP, LM = d["P"], d["S"], d["LP"], d["LM"]
    M = -d["Q"]
    ny = Y.size
    xlow = fb.builder.affine(X)
    w = [AffExpr.col(j) for j in fb.builder.add_cols("__w", ny)]
    tq = AffExpr.col(fb.builder.add_cols("__tq", 1)[0])
    # tq >= |LP' x|^2 + |LM' w|^2
    lpx = combine(LP.T, xlow)
    lmw = combine(LM.T, w)
    fb.builder.add_block(Cone(SOC, 2 + len(lpx) + len(lmw)),
                         [tq + 1.0] + [v * 2.0 for v in lpx + lmw] + [tq - 1.0])
    C, dvec = fb.y_affine_maps(Y)
    # value contribution: (2 S' x - 2 M w)' E(y) + tq
    inner_vec = [2.0 * v for v in combine(S.T, xlow)]
    mw = combine(M, w)
    inner_vec = [iv - 2.0 * mv for iv, mv in zip(inner_vec, mw)]
    fb.add_phi_affine(C, dvec, inner_vec, scale)
    fb.tau = fb.tau + tq * scale


def _emit_saddle_quad_form(fb, node, scale):
    X, Y = node.children
    n = X.size
    xlow = fb.builder.affine(X)
    npack = n * (n + 1) // 2
    Fcols = fb.builder.add_cols("__F", npack)
    Fexprs = [AffExpr.col(j) for j in Fcols]
    # [[F, x], [x', 1]] is PSD, packed directly in svec coordinates
    tri_n = {ij: k for k, ij in enumerate(triangle_indices(n))}
    rows = []
    for (i, j) in triangle_indices(n + 1):
        if j < n:
            rows.append(Fexprs[tri_n[(i, j)]])
        elif i < n:
            rows.append(xlow[i] * np.sqrt(2.0))
        else:
            rows.append(AffExpr.constant(1.0))
    fb.builder.add_block(Cone(PSD, n + 1), rows)
    # <Y_expr, F> through the packed coordinates of the Y argument
    entry_coeffs, entry_const = linops.affine_coeffs(Y)
    Pk = pack_matrix(n)
    C = np.zeros((npack, fb.y_layout.dim))
    for vid, mat in entry_coeffs.items():
        var = next(v for v in fb.y_layout.vars if v.id == vid)
        C[:, fb.y_layout.coords(var)] = Pk @ mat
    dvec = Pk @ entry_const
    fb.add_phi_affine(C, dvec, Fexprs, scale)


_ATOM_EMITTERS = {
    "inner": _emit_inner,
    "saddle_inner": _emit_saddle_inner,
    "weighted_norm2": _emit_weighted_norm2,
    "weighted_log_sum_exp": _emit_weighted_log_sum_exp,
    "quasidef_quad_form": _emit_quasidef,
    "saddle_quad_form": _emit_saddle_quad_form,
}


# ---------------------------------------------------------------------------
# Dualization


@dataclass
class EpigraphRep:
    """Conic representation of the epigraph of a saddle max
    Phi(x) = sup_{y in Y} phi(x, y)."""

    form: SaddleConicForm
    yset: SetRep

    def emit(self, builder: RowBuilder) -> AffExpr:
        """Add the epigraph rows to a builder and return the affine value
        expression lambda'e + t whose minimal feasible value is Phi(x)."""
        form, yset = self.form, self.yset
        for v in form.x_layout.vars:
            builder.register_variable(v)
        lam_cols = builder.add_cols("__lam", max(yset.Amat.shape[0], 0)) \
            if yset.Amat.shape[0] else np.arange(0)
        lam = [AffExpr.col(j) for j in lam_cols]
        fcols = builder.add_cols("__f", form.f_dim) if form.f_dim else np.arange(0)
        fexprs = [AffExpr.col(j) for j in fcols]
        tcol = AffExpr.col(builder.add_cols("__t", 1)[0])
        ucols = builder.add_cols("__u", form.u_dim) if form.u_dim else np.arange(0)
        uexprs = [AffExpr.col(j) for j in ucols]

        # C' lambda = f
        C, D = yset.Amat, yset.Bmat
        for j in range(form.f_dim):
            v = AffExpr.constant(0.0) - fexprs[j]
            for r in np.nonzero(C[:, j])[0]:
                v = v + lam[r] * C[r, j]
            builder.add_block(ZERO, [v])
        # D' lambda = 0
        for j in range(D.shape[1]):
            col = D[:, j]
            if np.any(col != 0.0):
                v = AffExpr.constant(0.0)
                for r in np.nonzero(col)[0]:
                    v = v + lam[r] * col[r]
                builder.add_block(ZERO, [v])
        # lambda in the dual cone of the set's cones
        off = 0
        for cone in yset.cones:
            dual = dual_cone(cone)
            if dual.kind != FREE:
                builder.add_block(dual, lam[off:off + cone.nrows])
            off += cone.nrows
        # template rows P f + t p + Q u + R x <=_K s
        xmap = []
        for v in form.x_layout.vars:
            xmap.extend(builder.var_cols[v.id])
        xmap = np.asarray(xmap, dtype=int)
        r = 0
        for cone in form.cones:
            nr = cone.nrows
            exprs = []
            for i in range(r, r + nr):
                v = AffExpr.constant(form.s[i])
                for j in np.nonzero(form.P[i])[0]:
                    v = v - fexprs[j] * form.P[i, j]
                if form.p[i] != 0.0:
                    v = v - tcol * form.p[i]
                for j in np.nonzero(form.Q[i])[0]:
                    v = v - uexprs[j] * form.Q[i, j]
                for j in np.nonzero(form.R[i])[0]:
                    v = v - AffExpr.col(xmap[j]) * form.R[i, j]
                exprs.append(v)
            builder.add_block(cone, exprs)
            r += nr

        value = tcol
        for i in np.nonzero(yset.cvec)[0]:
            value = value + lam[i] * yset.cvec[i]
        return value


@dataclass
class HypographRep:
    """Conic representation of the hypograph of a saddle min
    H(y) = inf_{x in X} phi(x, y), as the negated epigraph of the mirrored
    saddle max."""

    epi: EpigraphRep

    def emit(self, builder: RowBuilder) -> AffExpr:
        return -self.epi.emit(builder)


def dualize_saddle_max(form: SaddleConicForm, yset: SetRep) -> EpigraphRep:
    """Tractable epigraph of sup_y phi through Sion's swap and conic
    duality.  The set must be nonempty; emptiness is detected lazily when
    the certification solve reports the inner supremum infeasible."""
    if yset.main_dim != form.f_dim:
        raise ValueError("set dimension does not match the template's f block")
    return EpigraphRep(form=form, yset=yset)


def dualize_saddle_min(form: SaddleConicForm, xset: SetRep) -> HypographRep:
    """Mirror image: negate the expression, swap the roles, dualize as a
    saddle max, and negate the epigraph value."""
    mirrored = mirror_form(form)
    return HypographRep(epi=dualize_saddle_max(mirrored, xset))


# ---------------------------------------------------------------------------
# Saddle-extremum lowering (installed into the canonicalizer)


def se_roles(node):
    """Role partition for a saddle extremum's body: locals on the inner
    side, free variables on the outer side."""
    from .rules import RolePartition
    local_ids = {v.id for v in node.local_vars}
    inner, outer = [], []
    for v in ex.variables_of(node):
        (inner if v.id in local_ids else outer).append(v)
    if node.direction == "max":
        return RolePartition(convex_vars=outer, concave_vars=inner)
    return RolePartition(convex_vars=inner, concave_vars=outer)


def se_inner_set(node) -> SetRep:
    """Represented set the extremum ranges over: the declared constraints
    plus atom-attached domain constraints on the local variables."""
    local_ids = {v.id for v in node.local_vars}
    cons = list(node.set_constraints)
    for con in ex.attached_constraints_of(node.body):
        vids = {v.id for v in con.variables()}
        if vids and vids <= local_ids:
            cons.append(con)
    return represent_set(node.local_vars, cons)


def lower_saddle_extremum(builder: RowBuilder, node) -> list:
    """Graph implementation of SE nodes inside DCP lowering: splice in the
    dualized epigraph (or negated mirrored epigraph) rows."""
    roles = se_roles(node)
    form = saddle_conic_form(node.body, roles)
    inner_set = se_inner_set(node)
    # attached domain constraints on free variables travel to the outer problem
    local_ids = {v.id for v in node.local_vars}
    for con in ex.attached_constraints_of(node.body):
        vids = {v.id for v in con.variables()}
        if vids and not (vids & local_ids):
            for v in con.variables():
                builder.register_variable(v)
            builder.add_constraint(con)
    if node.direction == "max":
        value = dualize_saddle_max(form, inner_set).emit(builder)
    else:
        value = dualize_saddle_min(form, inner_set).emit(builder)
    return [value]


set_se_lowering(lower_saddle_extremum)
