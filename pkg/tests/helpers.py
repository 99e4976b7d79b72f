"""Shared test oracles and utilities, independent of the code paths they
check wherever possible (grids, sampling, scipy.optimize, sorting)."""

import numpy as np

import saddlecomp as sc
from saddlecomp import canon, conic, dualize
from saddlecomp.rules import classify_roles


def midpoint_convex(expr, sampler, rng, segments=1000, tol=1e-9):
    """Brute-force midpoint convexity of an expression on random segments.

    ``sampler(rng)`` yields an in-domain environment {var_id: value}; two
    draws define one segment.  Returns the worst violation (negative or
    tiny values mean convexity held)."""
    worst = -np.inf
    for _ in range(segments):
        e1, e2 = sampler(rng), sampler(rng)
        mid = {k: (np.asarray(e1[k]) + np.asarray(e2[k])) / 2.0 for k in e1}
        fm = float(sc.evaluate(expr, mid))
        f1 = float(sc.evaluate(expr, e1))
        f2 = float(sc.evaluate(expr, e2))
        worst = max(worst, fm - 0.5 * (f1 + f2))
    return worst - tol


def grid_min(fun, lo, hi, rounds=5, pts=61):
    """Coarse-to-fine grid minimization of a vectorized function on a box
    (1-D or 2-D).  Independent oracle for canonicalization checks."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    dim = lo.size
    for _ in range(rounds):
        axes = [np.linspace(lo[d], hi[d], pts) for d in range(dim)]
        if dim == 1:
            vals = fun(axes[0].reshape(-1, 1))
            idx = np.argmin(vals)
            best = np.array([axes[0][idx]])
        else:
            G = np.meshgrid(*axes, indexing="ij")
            pts_mat = np.stack([g.ravel() for g in G], axis=1)
            vals = fun(pts_mat)
            best = pts_mat[np.argmin(vals)]
        span = (hi - lo) / (pts - 1)
        lo = np.maximum(lo, best - 2 * span)
        hi = np.minimum(hi, best + 2 * span)
    return float(np.min(vals)), best


def simplex_grid(n, steps):
    """All points of the n-simplex with coordinates k/steps."""
    if n == 1:
        return np.array([[1.0]])
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], steps, n)
    return np.asarray(out, dtype=float) / steps


def phi_sup_at(expr, yset_cons, xfix, backend=None):
    """Value of sup_{y in Y} expr at fixed convex-side values, through the
    dualization pipeline."""
    roles = classify_roles(expr)
    form = dualize.saddle_conic_form(expr, roles)
    cons = list(yset_cons)
    for con in sc.expressions.attached_constraints_of(expr):
        cons.append(con)
    yset = dualize.represent_set(roles.concave_vars, cons)
    b = canon.RowBuilder()
    for v in roles.convex_vars:
        b.register_variable(v)
    for var, val in xfix.items():
        b.add_constraint(var == val)
    value = dualize.dualize_saddle_max(form, yset).emit(b)
    prog = b.to_cone_program(value)
    sol = conic.solve_cone(prog, conic.SolverOptions(backend=backend))
    assert sol.status == conic.OPTIMAL, sol.status
    return sol.obj


def rep_oracle_gap(expr, xvals, yvals, backend=None, form=None):
    """|inf-template value - direct evaluation| at fixed in-domain points."""
    if form is None:
        form = dualize.saddle_conic_form(expr, classify_roles(expr))
    prog = form.inner_program(form.x_layout.pack(xvals),
                              form.y_layout.pack(yvals))
    for eps in (1e-9, 1e-8):
        sol = conic.solve_cone(prog, conic.SolverOptions(backend=backend, eps=eps))
        if sol.status == conic.OPTIMAL:
            break
    assert sol.status == conic.OPTIMAL, sol.status
    env = dict(xvals)
    env.update(yvals)
    return abs(sol.obj - float(sc.evaluate(expr, env)))


def random_polytope(rng, n, extra_facets):
    """Bounded polytope {c | F c <= g} containing a known interior point:
    a random box plus random cuts through its neighborhood."""
    center = rng.uniform(-1.0, 1.0, size=n)
    half = rng.uniform(0.5, 1.5, size=n)
    F = np.vstack([np.eye(n), -np.eye(n)])
    g = np.concatenate([center + half, -(center - half)])
    for _ in range(extra_facets):
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        b = a @ center + rng.uniform(0.2, 1.0)
        F = np.vstack([F, a])
        g = np.append(g, b)
    return F, g, center
