import zlib

import numpy as np
import pytest

import saddlecomp as sc
from saddlecomp import canon, conic, dualize
from saddlecomp.conic import Cone
from saddlecomp.errors import DspError
from saddlecomp.rules import classify_roles

from helpers import phi_sup_at, rep_oracle_gap, simplex_grid


class TestRepresentSet:
    def test_simplex_structure(self):
        y = sc.Variable(2, name="y")
        rep = dualize.represent_set([y], [y >= 0, sc.sum(y) == 1])
        assert rep.main_dim == 2
        assert rep.aux_dim == 0
        kinds = sorted(c.kind for c in rep.cones)
        assert kinds == ["nonneg", "zero"]

    def test_l1_ball_lowering_and_membership(self):
        d = sc.Variable(3, name="d")
        kappa = 1.2
        rep = dualize.represent_set([d], [sc.norm1(d) <= kappa])
        assert rep.aux_dim == 3  # one bounding auxiliary per coordinate
        rng = np.random.default_rng(4)
        for _ in range(300):
            z = rng.uniform(-1.5, 1.5, size=3)
            assert rep.contains(z) == (np.abs(z).sum() <= kappa + 1e-7)

    def test_k_largest_set(self):
        y = sc.Variable(4, name="y")
        rep = dualize.represent_set([y], [y >= 0, y <= 1, sc.sum(y) == 2])
        assert rep.main_dim == 4
        kinds = [c.kind for c in rep.cones]
        assert kinds.count("nonneg") == 2 and kinds.count("zero") == 1
        rng = np.random.default_rng(5)
        for _ in range(200):
            z = rng.uniform(-0.2, 1.2, size=4)
            member = (np.all(z >= -1e-9) and np.all(z <= 1 + 1e-9)
                      and abs(z.sum() - 2) <= 1e-9)
            assert rep.contains(z) == member

    def test_foreign_variable_rejected(self):
        y = sc.Variable(2, name="y")
        w = sc.Variable(name="w")
        with pytest.raises(DspError) as exc:
            dualize.represent_set([y], [sc.sum(y) + w <= 1])
        assert any(d.code == "NonLocalVariable" for d in exc.value.diagnostics)

    def test_attribute_domains_included(self):
        y = sc.Variable(2, name="y", nonneg=True)
        rep = dualize.represent_set([y], [])
        assert any(c.kind == "nonneg" for c in rep.cones)
        assert rep.contains(np.array([0.5, 0.0]))
        assert not rep.contains(np.array([-0.1, 0.5]))


class TestSaddleConicForm:
    def test_inner_is_pure_bookkeeping(self):
        x = sc.Variable(2, name="x")
        y = sc.Variable(2, name="y")
        form = dualize.saddle_conic_form(sc.inner(x, y), classify_roles(sc.inner(x, y)))
        assert all(c.kind == "zero" for c in form.cones)
        rng = np.random.default_rng(0)
        for _ in range(5):
            a, b = rng.normal(size=2), rng.normal(size=2)
            prog = form.inner_program(a, b)
            sol = conic.solve_cone(prog)
            assert abs(sol.obj - a @ b) < 1e-8

    def test_wlse_uses_exponential_cones(self):
        x = sc.Variable(2, name="x")
        y = sc.Variable(2, name="y")
        f = sc.weighted_log_sum_exp(x, y)
        form = dualize.saddle_conic_form(f, classify_roles(f))
        assert sum(1 for c in form.cones if c.kind == "exp") == 2
        gap = rep_oracle_gap(f, {x.id: np.array([0.0, 1.0])},
                             {y.id: np.array([0.5, 0.5])})
        assert gap < 1e-6

    def test_conic_combination_scales_f_and_carries_epigraph(self):
        x = sc.Variable(2, name="x")
        y = sc.Variable(2, name="y")
        f = 2.0 * sc.inner(x, y) + sc.square(x[0])
        form = dualize.saddle_conic_form(f, classify_roles(f))
        rng = np.random.default_rng(1)
        for _ in range(10):
            a, b = rng.normal(size=2), rng.normal(size=2)
            sol = conic.solve_cone(form.inner_program(a, b))
            want = 2.0 * a @ b + a[0] ** 2
            assert abs(sol.obj - want) < 1e-7


ATOM_CASES = []


def _atom_cases():
    if ATOM_CASES:
        return ATOM_CASES
    rng = np.random.default_rng(77)
    x = sc.Variable(3, name="ox"); y = sc.Variable(3, name="oy")
    Y = sc.Variable((3, 3), name="oY", psd=True)
    P = np.diag([1.0, 2.0, 0.5])
    Q = -np.diag([0.3, 1.0, 2.0])
    S = rng.normal(size=(3, 3))

    def vec(r):
        return r.normal(size=3)

    def posvec(r):
        return r.uniform(0.05, 2.0, size=3)

    def psd(r):
        L = r.normal(size=(3, 3)) * 0.6
        return L @ L.T

    ATOM_CASES.extend([
        ("inner", sc.inner(x, 2.0 * y + 0.5), x, y, vec, vec),
        ("saddle_inner", sc.saddle_inner(sc.square(x), sc.log(y) + 1.0),
         x, y, vec, lambda r: r.uniform(0.4, 3.0, size=3)),
        ("weighted_norm2", sc.weighted_norm2(x, y), x, y, vec, posvec),
        ("weighted_log_sum_exp", sc.weighted_log_sum_exp(x, y), x, y, vec, posvec),
        ("quasidef_quad_form", sc.quasidef_quad_form(x, y, P, Q, S),
         x, y, vec, vec),
        ("saddle_quad_form", sc.saddle_quad_form(x, Y), x, Y, vec, psd),
    ])
    return ATOM_CASES


class TestRepresentationOracle:
    """For every atom, solving the inf template at fixed in-domain points
    matches direct evaluation to 1e-6 (100 points per atom)."""

    @pytest.mark.parametrize("case", _atom_cases(), ids=lambda c: c[0])
    def test_atom(self, case):
        name, expr, xv, yv, xs, ys = case
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        worst = 0.0
        for _ in range(100):
            gap = rep_oracle_gap(expr, {xv.id: xs(rng)}, {yv.id: ys(rng)})
            worst = max(worst, gap)
        assert worst < 1e-6, (name, worst)


class TestDualizeSaddleMax:
    def test_matrix_game_value(self):
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        C = np.array([[1.0, 2.0], [3.0, 1.0]])
        f = sc.inner(x, C @ y)
        roles = classify_roles(f)
        form = dualize.saddle_conic_form(f, roles)
        yset = dualize.represent_set([y], [y >= 0, sc.sum(y) == 1])
        b = canon.RowBuilder()
        b.register_variable(x)
        b.add_constraint(x >= 0)
        b.add_constraint(sc.sum(x) == 1)
        value = dualize.dualize_saddle_max(form, yset).emit(b)
        sol = conic.solve_cone(b.to_cone_program(value))
        assert abs(sol.obj - 5.0 / 3.0) < 1e-6

    def test_box_linear_max_formula(self):
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        f = sc.inner(x, y)
        val = phi_sup_at(f, [y >= -1, y <= 1], {x: np.array([1.0, -2.0])})
        assert abs(val - 3.0) < 1e-6

    def test_sum_of_k_largest(self):
        x = sc.Variable(3, name="x"); y = sc.Variable(3, name="y")
        f = sc.inner(x, y)
        val = phi_sup_at(f, [y >= 0, y <= 1, sc.sum(y) == 2],
                         {x: np.array([3.0, 1.0, 2.0])})
        assert abs(val - 5.0) < 1e-6


class TestDualizeSaddleMin:
    def _emit_value(self, rep, outer_var, outer_cons, sense_max=True):
        b = canon.RowBuilder()
        b.register_variable(outer_var)
        for con in outer_cons:
            b.add_constraint(con)
        value = rep.emit(b)
        # maximize the hypograph value = minimize its negation
        prog = b.to_cone_program(value * -1.0 if sense_max else value)
        sol = conic.solve_cone(prog)
        assert sol.status == conic.OPTIMAL
        return -sol.obj if sense_max else sol.obj

    def test_inf_over_simplex_vertex_oracle(self):
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        f = sc.inner(x, y)
        roles = classify_roles(f)
        form = dualize.saddle_conic_form(f, roles)
        xset = dualize.represent_set([x], [x >= 0, sc.sum(x) == 1])
        hypo = dualize.dualize_saddle_min(form, xset)
        b = canon.RowBuilder()
        b.register_variable(y)
        b.add_constraint(y == np.array([1.0, 3.0]))
        value = hypo.emit(b)
        prog = b.to_cone_program(value * -1.0)
        sol = conic.solve_cone(prog)
        assert abs(-sol.obj - 1.0) < 1e-6  # min over vertices of (1,3)

    def test_constant_expression(self):
        x = sc.Variable(name="x"); y = sc.Variable(name="y")
        f = sc.inner(x, y) + 4.0
        roles = classify_roles(f)
        form = dualize.saddle_conic_form(f, roles)
        xset = dualize.represent_set([x], [x == 0])
        hypo = dualize.dualize_saddle_min(form, xset)
        b = canon.RowBuilder()
        b.register_variable(y)
        b.add_constraint(y == 2.0)
        value = hypo.emit(b)
        sol = conic.solve_cone(b.to_cone_program(value * -1.0))
        assert abs(-sol.obj - 4.0) < 1e-7

    def test_robust_lp_fixed_point_vertex_oracle(self):
        # C = [0,1]^2 via F=[I;-I], g=(1,1,0,0); sup_{c} c'x at x=(1,2) is 3
        x = sc.Variable(2, name="x"); c = sc.Variable(2, name="c")
        f = sc.inner(x, c)
        val = phi_sup_at(f, [c >= 0, c <= 1], {x: np.array([1.0, 2.0])})
        assert abs(val - 3.0) < 1e-6

    def test_negation_symmetry_structural(self):
        # dualize_saddle_min emits exactly the negated mirrored saddle max
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        f = sc.inner(x, 3.0 * y) + sc.square(x[0])
        roles = classify_roles(f)
        form = dualize.saddle_conic_form(f, roles)
        xset = dualize.represent_set([x], [x >= 0, sc.sum(x) == 1])

        def build(rep, sign):
            b = canon.RowBuilder()
            b.register_variable(y)
            value = rep.emit(b) * sign
            return b.to_cone_program(value)

        p1 = build(dualize.dualize_saddle_min(form, xset), 1.0)
        p2 = build(dualize.dualize_saddle_max(dualize.mirror_form(form), xset), -1.0)
        assert np.allclose(p1.A.toarray(), p2.A.toarray())
        assert np.allclose(p1.b, p2.b)
        assert np.allclose(p1.c, p2.c)
        assert [c.kind for c in p1.cones] == [c.kind for c in p2.cones]


class TestMirrorForm:
    @pytest.mark.parametrize("case", _atom_cases(), ids=lambda c: c[0])
    def test_mirror_value_is_negation(self, case):
        name, expr, xv, yv, xs, ys = case
        rng = np.random.default_rng(1234)
        roles = classify_roles(expr)
        form = dualize.saddle_conic_form(expr, roles)
        mirrored = dualize.mirror_form(form)
        for _ in range(10):
            xval, yval = xs(rng), ys(rng)
            direct = float(sc.evaluate(expr, {xv.id: xval, yv.id: yval}))
            prog = mirrored.inner_program(
                mirrored.x_layout.pack({yv.id: yval}),
                mirrored.y_layout.pack({xv.id: xval}))
            sol = conic.solve_cone(prog)
            assert sol.status == conic.OPTIMAL
            assert abs(sol.obj + direct) < 1e-6, name


class TestWeakDualityAndRestriction:
    def test_phi_dominates_samples_and_grid(self):
        # Phi(x) >= f(x, y) for sampled y in Y, and Phi(x) <= grid max + tol
        rng = np.random.default_rng(9)
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        f = sc.weighted_log_sum_exp(x, y) + 0.5 * sc.inner(x, y)
        lo, hi = 0.2, 1.5
        cons = [y >= lo, y <= hi]
        for _ in range(5):
            xval = rng.normal(size=2)
            phi = phi_sup_at(f, cons, {x: xval})
            for _ in range(100):
                yval = rng.uniform(lo, hi, size=2)
                fv = float(sc.evaluate(f, {x.id: xval, y.id: yval}))
                assert phi >= fv - 1e-7
            axis = np.linspace(lo, hi, 41)
            grid_best = max(
                float(sc.evaluate(f, {x.id: xval, y.id: np.array([a, b])}))
                for a in axis for b in axis)
            assert phi <= grid_best + 1e-4
