"""Demo corpus: small named problems with embedded synthetic data.

Each builder returns a result dict consumed by the command-line ``demo``
subcommand and by the test suite.  Alongside each solve the demos evaluate
an independent check (an analytic formula, a sorting oracle, or vertex
enumeration) and report the discrepancy.
"""

import itertools

import numpy as np

from . import atoms as at
from . import expressions as ex
from . import saddle_atoms as sa
from .conic import backend_capabilities, PSD
from .errors import CapabilityError
from .problems import (
    Maximize, Minimize, MinimizeMaximize, Problem, SaddlePointProblem,
    se_value,
)

DEMO_NAMES = ("matrix_game", "robust_lp", "robust_production",
              "robust_bond_synthetic", "robust_weights_synthetic",
              "robust_markowitz")


# ---------------------------------------------------------------------------
# Oracles


def box_linear_max(l, u, x):
    """sup_{l <= y <= u} y'x, elementwise closed form."""
    l, u, x = map(np.asarray, (l, u, x))
    return 0.5 * (u + l) @ x + 0.5 * (u - l) @ np.abs(x)


def sum_k_largest(vals, k):
    """Sum of the k largest entries; k need not be an integer."""
    v = np.sort(np.asarray(vals, dtype=float))[::-1]
    whole = int(np.floor(k))
    out = float(np.sum(v[:whole]))
    if whole < v.size and k > whole:
        out += (k - whole) * v[whole]
    return out


def polytope_vertices(F, g, tol=1e-9):
    """All vertices of the (assumed bounded) polyhedron {c | F c <= g} by
    basis enumeration."""
    F, g = np.asarray(F, dtype=float), np.asarray(g, dtype=float)
    m, n = F.shape
    verts = []
    for rows in itertools.combinations(range(m), n):
        sub = F[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        c = np.linalg.solve(sub, g[list(rows)])
        if np.all(F @ c <= g + 1e-8):
            if not any(np.linalg.norm(c - w) < tol for w in verts):
                verts.append(c)
    return verts


def markowitz_worst_case(mu, Sigma, rho, eta, gamma, w):
    """Closed-form worst-case risk-adjusted return for the box-style
    uncertainty set around (mu, Sigma)."""
    mu, Sigma, rho, w = map(np.asarray, (mu, Sigma, rho, w))
    nominal = mu @ w - gamma * w @ Sigma @ w
    sig = np.sqrt(np.diag(Sigma))
    return nominal - rho @ np.abs(w) - gamma * eta * (sig @ np.abs(w)) ** 2


# ---------------------------------------------------------------------------
# Demos


def matrix_game():
    C = np.array([[1.0, 2.0], [3.0, 1.0]])
    x = ex.Variable(2, name="x")
    y = ex.Variable(2, name="y")
    prob = SaddlePointProblem(
        MinimizeMaximize(sa.inner(x, C @ y)),
        [x >= 0, at.sum(x) == 1, y >= 0, at.sum(y) == 1])
    value = prob.solve()
    return {
        "name": "matrix_game",
        "value": value,
        "gap": prob.report.gap,
        "x": x.value,
        "y": y.value,
        "rows": [("game value", value),
                 ("x*", np.round(x.value, 6)),
                 ("y*", np.round(y.value, 6))],
        "checks": [("value vs 5/3", abs(value - 5.0 / 3.0))],
    }


def robust_lp():
    # worst-case cost over C = {c | Fc <= g}; the fixed-x instance has
    # C = [0,1]^2 and x = (1,2), the optimized instance a richer polytope.
    F = np.vstack([np.eye(2), -np.eye(2)])
    g = np.array([1.0, 1.0, 0.0, 0.0])
    x = ex.Variable(2, name="x")
    c_loc = ex.LocalVariable(2, name="c")
    from .problems import saddle_max
    cost_se = saddle_max(sa.inner(x, c_loc), [ex.Constraint("<=", F @ c_loc, g)])
    fixed = Problem(Minimize(cost_se), [x == np.array([1.0, 2.0])])
    fixed_val = fixed.solve()

    F2 = np.vstack([np.eye(2), -np.eye(2), np.ones((1, 2))])
    g2 = np.array([1.0, 2.0, 0.0, 0.0, 2.5])
    x2 = ex.Variable(2, name="x2", nonneg=True)
    c2 = ex.LocalVariable(2, name="c2")
    se2 = saddle_max(sa.inner(x2, c2), [ex.Constraint("<=", F2 @ c2, g2)])
    opt = Problem(Minimize(se2), [at.sum(x2) == 1])
    opt_val = opt.solve()

    verts = polytope_vertices(F2, g2)
    from scipy.optimize import linprog
    # oracle: min over the simplex of the max over vertices, as one LP
    nv = len(verts)
    A_ub = np.hstack([np.vstack(verts), -np.ones((nv, 1))])
    A_eq = np.array([[1.0, 1.0, 0.0]])
    res = linprog(c=[0.0, 0.0, 1.0], A_ub=A_ub, b_ub=np.zeros(nv),
                  A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None), (0, None), (None, None)], method="highs")
    oracle = res.fun
    return {
        "name": "robust_lp",
        "value": opt_val,
        "fixed_value": fixed_val,
        "x": x2.value,
        "rows": [("worst-case cost, x=(1,2), C=[0,1]^2", fixed_val),
                 ("optimized robust cost", opt_val),
                 ("x*", np.round(x2.value, 6))],
        "checks": [("fixed instance vs 3.0", abs(fixed_val - 3.0)),
                   ("optimized vs vertex-enumeration LP", abs(opt_val - oracle))],
    }


def robust_production():
    # three goods, box price uncertainty, quadratic production cost
    q0 = np.array([1.0, -1.0, 2.0])
    p_lo = np.array([1.0, 2.0, 0.5])
    p_hi = np.array([2.0, 3.0, 1.5])
    q = ex.Variable(3, name="q")
    p_loc = ex.LocalVariable(3, name="p")
    from .problems import saddle_max
    worst_cost = saddle_max(sa.inner(q, p_loc), [p_loc >= p_lo, p_loc <= p_hi])
    mfg = 0.5 * at.sum_squares(q - q0)
    prob = Problem(Minimize(mfg + worst_cost), [q >= -2, q <= 3])
    value = prob.solve()
    qv = q.value
    analytic = 0.5 * np.sum((qv - q0) ** 2) + box_linear_max(p_lo, p_hi, qv)
    # worst-case price rule: upper limit for goods bought, lower for sold
    rule_price = np.where(qv >= 0, p_hi, p_lo)
    rule_err = float(np.max(np.abs(p_loc.value - rule_price))) \
        if np.all(np.abs(qv) > 1e-6) else 0.0
    return {
        "name": "robust_production",
        "value": value,
        "q": qv,
        "worst_price": p_loc.value,
        "rows": [("total robust cost", value),
                 ("q*", np.round(qv, 6)),
                 ("worst-case prices", np.round(p_loc.value, 6)),
                 ("price rule (hi if buy, lo if sell)", rule_price)],
        "checks": [("objective vs box formula at q*", abs(value - analytic)),
                   ("worst price vs rule", rule_err)],
    }


def _bond_data():
    n, T = 4, 10
    maturities = np.array([4, 6, 8, 10])
    coupons = np.array([1.0, 1.5, 2.0, 2.5])
    C = np.zeros((n, T))
    for i in range(n):
        C[i, :maturities[i]] = coupons[i]
        C[i, maturities[i] - 1] += 100.0
    t = np.arange(1, T + 1, dtype=float)
    y_nom = 0.015 + 0.0005 * t
    prices = C @ np.exp(-t * y_nom)
    return C, t, y_nom, prices


def worst_case_bond_value(h):
    """Saddle min of the portfolio value over the yield-shock set, with
    fresh local variables per call."""
    C, t, y_nom, prices = _bond_data()
    n, T = C.shape
    delta = ex.LocalVariable(T, name="delta")
    discount = at.exp(ex.multiply(-t, ex.Constant(y_nom) + delta))
    terms = [sa.saddle_inner(discount, ex.multiply(C[i], h[i]))
             for i in range(n)]
    yield_set = [at.norm_inf(delta) <= 0.02,
                 at.norm1(delta) <= 0.10,
                 at.sum_squares(delta[1:] - delta[:-1]) <= 1e-4]
    from .problems import saddle_min
    return saddle_min(sum(terms[1:], terms[0]), yield_set)


def robust_bond_synthetic():
    C, t, y_nom, prices = _bond_data()
    n, T = C.shape
    budget = 100.0
    h_mkt = (budget / n) / prices

    h = ex.Variable(n, name="h", nonneg=True)
    V_wc = worst_case_bond_value(h)

    # anchor the limit between the market portfolio's worst case and the
    # best attainable worst case, so the constraint is feasible but binding
    h_fix = ex.Variable(n, name="h_fix", nonneg=True)
    wc_mkt = se_value(worst_case_bond_value(h_fix), {h_fix.id: h_mkt})
    best = Problem(Maximize(V_wc), [prices @ h == budget])
    wc_best = best.solve()
    v_lim = round(wc_mkt + 0.5 * (wc_best - wc_mkt), 2)

    turnover = 0.5 * at.norm1(ex.multiply(prices, h - h_mkt))
    prob = Problem(Minimize(turnover), [prices @ h == budget, V_wc >= v_lim])
    value = prob.solve()
    wc_robust = se_value(V_wc)
    return {
        "name": "robust_bond_synthetic",
        "value": value,
        "v_lim": v_lim,
        "wc_nominal": wc_mkt,
        "wc_robust": wc_robust,
        "h": h.value,
        "rows": [("turn-over distance (nominal)", 0.0),
                 ("turn-over distance (robust)", value),
                 ("worst-case value (nominal)", wc_mkt),
                 ("worst-case value (robust)", wc_robust),
                 ("required worst-case value", v_lim)],
        "checks": [("robust meets limit", max(0.0, v_lim - wc_robust)),
                   ("nominal violates limit", max(0.0, wc_mkt - v_lim))],
    }


def _weights_data():
    rng = np.random.default_rng(7)
    m, nfeat = 12, 3
    A = rng.normal(size=(m, nfeat))
    truth = np.array([1.5, -2.0, 0.5])
    labels = np.sign(A @ truth + 0.3 * rng.normal(size=m))
    labels[labels == 0] = 1.0
    return A, labels


def robust_weights_synthetic():
    A, labels = _weights_data()
    m, nfeat = A.shape
    k, reg = 4.0, 0.05
    theta = ex.Variable(nfeat, name="theta")
    w = ex.Variable(m, name="w", nonneg=True)
    margins = ex.multiply(labels, A @ theta)
    loss = at.pos(1.0 - margins)
    objective = MinimizeMaximize(sa.saddle_inner(loss, w)
                                 + reg * at.sum_squares(theta))
    prob = SaddlePointProblem(objective, [w <= 1, at.sum(w) == k])
    value = prob.solve()
    losses = np.maximum(0.0, 1.0 - labels * (A @ theta.value))
    oracle = sum_k_largest(losses, k) + reg * float(np.sum(theta.value ** 2))
    return {
        "name": "robust_weights_synthetic",
        "value": value,
        "gap": prob.report.gap,
        "theta": theta.value,
        "rows": [("robust weighted loss", value),
                 ("theta*", np.round(theta.value, 6)),
                 ("sum-of-k-largest identity", oracle)],
        "checks": [("value vs k-largest + regularizer", abs(value - oracle))],
    }


def _markowitz_data():
    mu = np.array([0.08, 0.06, 0.04])
    Sigma = np.diag([0.04, 0.02, 0.01])
    rho = np.full(3, 0.02)
    eta, gamma = 0.2, 1.0
    return mu, Sigma, rho, eta, gamma


def markowitz_saddle_min(w, mu, Sigma, rho, eta, gamma):
    n = len(mu)
    delta = ex.LocalVariable(n, name="delta_mu")
    Sigma_pert = ex.LocalVariable((n, n), name="Sigma_pert", psd=True)
    Delta = ex.LocalVariable((n, n), name="Delta")
    sig = np.sqrt(np.diag(Sigma))
    bound = eta * np.outer(sig, sig)
    f = mu @ w + sa.inner(delta, w) \
        - gamma * sa.saddle_quad_form(w, Sigma_pert)
    cons = [at.abs(delta) <= rho,
            ex.Constraint("==", Sigma_pert, ex.Constant(Sigma) + Delta),
            at.abs(Delta) <= bound]
    from .problems import saddle_min
    return saddle_min(f, cons)


def robust_markowitz():
    if PSD not in backend_capabilities():
        raise CapabilityError(
            "robust_markowitz needs PSDTriangle cone support in the backend")
    mu, Sigma, rho, eta, gamma = _markowitz_data()
    n = len(mu)
    w = ex.Variable(n, name="w", nonneg=True)
    G = markowitz_saddle_min(w, mu, Sigma, rho, eta, gamma)
    prob = Problem(Maximize(G), [at.sum(w) == 1])
    value = prob.solve()
    analytic = markowitz_worst_case(mu, Sigma, rho, eta, gamma, w.value)
    nominal = mu @ w.value - gamma * w.value @ Sigma @ w.value
    return {
        "name": "robust_markowitz",
        "value": value,
        "w": w.value,
        "rows": [("worst-case risk adjusted return", value),
                 ("nominal risk adjusted return at w*", nominal),
                 ("w*", np.round(w.value, 6))],
        "checks": [("value vs analytic worst case at w*",
                    abs(value - analytic))],
    }


DEMOS = {
    "matrix_game": matrix_game,
    "robust_lp": robust_lp,
    "robust_production": robust_production,
    "robust_bond_synthetic": robust_bond_synthetic,
    "robust_weights_synthetic": robust_weights_synthetic,
    "robust_markowitz": robust_markowitz,
}


def run_demo(name):
    if name not in DEMOS:
        raise KeyError(name)
    return DEMOS[name]()
