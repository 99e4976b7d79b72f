import numpy as np
import pytest

import saddlecomp as sc
from saddlecomp.errors import DspError
from saddlecomp.problems import (
    GAP_TOO_LARGE, NOT_DSP, SOLVED, SolveFailure, se_value,
)

C = np.array([[1.0, 2.0], [3.0, 1.0]])


def matrix_game():
    x = sc.Variable(2, name="x")
    y = sc.Variable(2, name="y")
    prob = sc.SaddlePointProblem(
        sc.MinimizeMaximize(sc.inner(x, C @ y)),
        [x >= 0, sc.sum(x) == 1, y >= 0, sc.sum(y) == 1])
    return prob, x, y


class TestInferRoles:
    def _objective(self):
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        u = sc.Variable(name="u"); v = sc.Variable(name="v")
        z = sc.Variable(name="z")
        e = sc.weighted_log_sum_exp(x, y) + sc.exp(u) + sc.log(v) + z
        return e, x, y, u, v, z

    def test_constraint_classifies_ambiguous_variable(self):
        e, x, y, u, v, z = self._objective()
        prob = sc.SaddlePointProblem(sc.MinimizeMaximize(e), [z + v <= 1])
        part = prob.roles()
        assert {w.name for w in part.convex_vars} == {"x", "u"}
        assert {w.name for w in part.concave_vars} == {"y", "v", "z"}
        assert part.affine_vars == []

    def test_ambiguous_without_lists(self):
        e, *_ = self._objective()
        prob = sc.SaddlePointProblem(sc.MinimizeMaximize(e), [])
        with pytest.raises(DspError) as exc:
            prob.roles()
        assert any(d.code == "AmbiguousRole" for d in exc.value.diagnostics)
        assert "z" in str(exc.value)

    def test_declared_list_resolves(self):
        e, x, y, u, v, z = self._objective()
        prob = sc.SaddlePointProblem(sc.MinimizeMaximize(e), [],
                                     cvx_vars=[z])
        part = prob.roles()
        assert any(v is z for v in part.convex_vars)

    def test_matrix_game_inference(self):
        prob, x, y = matrix_game()
        part = prob.roles()
        assert [v.name for v in part.convex_vars] == ["x"]
        assert [v.name for v in part.concave_vars] == ["y"]
        assert part.affine_vars == []

    def test_propagation_conflict_detected(self):
        x = sc.Variable(name="x"); y = sc.Variable(name="y")
        z = sc.Variable(name="z")
        e = sc.exp(x) + sc.log(y) + 0.0 * z
        prob = sc.SaddlePointProblem(sc.MinimizeMaximize(e),
                                     [x + z <= 1, y + z <= 1])
        with pytest.raises(DspError) as exc:
            prob.roles()
        assert any(d.code == "MixedVariables" for d in exc.value.diagnostics)

    def test_mixed_constraint_rejected_at_solve(self):
        prob, x, y = matrix_game()
        bad = sc.SaddlePointProblem(
            sc.MinimizeMaximize(sc.inner(x, C @ y)),
            [x >= 0, sc.sum(x) == 1, y >= 0, sc.sum(y) == 1,
             sc.sum(x) + sc.sum(y) <= 2])
        report = sc.solve_saddle_point(bad)
        assert report.status == NOT_DSP


class TestSolveSaddlePoint:
    def test_matrix_game_golden(self):
        prob, x, y = matrix_game()
        value = prob.solve()
        assert abs(value - 5.0 / 3.0) < 1e-4
        assert np.allclose(x.value, [2 / 3, 1 / 3], atol=1e-4)
        assert np.allclose(y.value, [1 / 3, 2 / 3], atol=1e-4)
        assert prob.report.gap <= 1e-6

    def test_symmetric_quadratic_saddle(self):
        a = sc.Variable(name="a"); b = sc.Variable(name="b")
        prob = sc.SaddlePointProblem(
            sc.MinimizeMaximize(sc.square(a) - sc.square(b)),
            [a >= -1, a <= 1, b >= -1, b <= 1])
        value = prob.solve()
        assert abs(value) < 1e-5
        assert abs(a.value) < 1e-4 and abs(b.value) < 1e-4

    def test_wlse_singleton_convex_side(self):
        x = sc.Variable(3, name="x"); y = sc.Variable(3, name="y")
        prob = sc.SaddlePointProblem(
            sc.MinimizeMaximize(sc.weighted_log_sum_exp(x, y)),
            [x == np.array([0.0, 1.0, 2.0]), y >= 0, sc.sum(y) == 1])
        assert abs(prob.solve() - 2.0) < 1e-5

    def test_not_dsp_status(self):
        x = sc.Variable(2); y = sc.Variable(2)
        prob = sc.SaddlePointProblem(sc.MinimizeMaximize((x @ C) @ y), [])
        report = sc.solve_saddle_point(prob)
        assert report.status == NOT_DSP
        assert report.diagnostics

    def test_gap_too_large_and_value_store_atomicity(self):
        prob, x, y = matrix_game()
        x.value = None
        y.value = None
        report = sc.solve_saddle_point(prob, tol=0.0, abs_floor=0.0)
        assert report.status == GAP_TOO_LARGE
        assert x.value is None and y.value is None  # nothing written
        assert report.gap > 0
        with pytest.raises(SolveFailure):
            prob.solve(tol=0.0, abs_floor=0.0)

    def test_empty_concave_set_reported(self):
        x = sc.Variable(name="x"); y = sc.Variable(name="y")
        prob = sc.SaddlePointProblem(
            sc.MinimizeMaximize(sc.inner(x, y)),
            [x >= 0, x <= 1, y >= 1, y <= 0])
        report = sc.solve_saddle_point(prob)
        assert report.status == "SolverFailure"

    def test_saddle_point_inequalities_spot_check(self):
        # f(x*, y) <= f(x*, y*) <= f(x, y*) over 500 random deviations
        prob, x, y = matrix_game()
        value = prob.solve()
        f = prob.objective.expr
        rng = np.random.default_rng(17)
        xs, ys = x.value, y.value
        for _ in range(250):
            yv = rng.dirichlet(np.ones(2))
            fv = float(sc.evaluate(f, {x.id: xs, y.id: yv}))
            assert fv <= value + 1e-5
        for _ in range(250):
            xv = rng.dirichlet(np.ones(2))
            fv = float(sc.evaluate(f, {x.id: xv, y.id: ys}))
            assert fv >= value - 1e-5

    def test_quasidef_quad_saddle(self):
        x = sc.Variable(2, name="x"); y = sc.Variable(2, name="y")
        f = sc.quasidef_quad_form(x, y, np.diag([1.0, 2.0]),
                                  -np.diag([1.0, 0.5]),
                                  np.array([[0.3, 0.0], [0.0, -0.2]]))
        prob = sc.SaddlePointProblem(
            sc.MinimizeMaximize(f + sc.sum(x) * 0.1),
            [x >= -2, x <= 2, y >= -2, y <= 2])
        value = prob.solve()
        # unilateral deviations never improve either player
        rng = np.random.default_rng(3)
        for _ in range(200):
            yv = rng.uniform(-2, 2, 2)
            assert float(sc.evaluate(f + sc.sum(x) * 0.1,
                                     {x.id: x.value, y.id: yv})) <= value + 1e-5
            xv = rng.uniform(-2, 2, 2)
            assert float(sc.evaluate(f + sc.sum(x) * 0.1,
                                     {x.id: xv, y.id: y.value})) >= value - 1e-5


class TestSaddleExtremum:
    def test_f1_partition(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        z = sc.Variable(name="z")
        f1 = sc.saddle_max(sc.inner(x, y_loc) + z, [y_loc <= 1])
        part = sc.classify_roles(f1)
        assert sorted(v.name for v in part.convex_vars) == ["x", "z"]
        assert [v.name for v in part.concave_vars] == ["y_loc"]

    def test_f2_accepted(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        z_loc = sc.LocalVariable(name="z_loc")
        f2 = sc.saddle_max(sc.inner(x, y_loc) + z_loc,
                           [y_loc <= 1, z_loc <= 1])
        part = sc.classify_roles(f2)
        assert sorted(v.name for v in part.concave_vars) == ["y_loc", "z_loc"]

    def test_f3_rejected_nonlocal_in_constraints(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        z = sc.Variable(name="z")
        with pytest.raises(DspError) as exc:
            sc.saddle_max(sc.inner(x, y_loc) + z, [y_loc <= 1, z <= 1])
        assert any(d.code == "NonLocalVariable" for d in exc.value.diagnostics)

    def test_f4_rejected_nonlocal_concave(self):
        x = sc.Variable(2, name="x")
        y = sc.Variable(2, name="y")
        z_loc = sc.LocalVariable(name="z_loc")
        with pytest.raises(DspError) as exc:
            sc.saddle_max(sc.inner(x, y) + z_loc, [z_loc <= 1])
        assert any(d.code == "NonLocalVariable" for d in exc.value.diagnostics)

    def test_local_cannot_join_two_extrema(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        sc.saddle_max(sc.inner(x, y_loc), [y_loc <= 1, y_loc >= 0])
        with pytest.raises(DspError):
            sc.saddle_min(sc.inner(y_loc, x), [y_loc <= 1, y_loc >= 0])

    def test_k_largest_evaluation(self):
        x = sc.Variable(3, name="x")
        y_loc = sc.LocalVariable(3, name="y_loc")
        G = sc.saddle_max(sc.inner(x, y_loc),
                          [y_loc >= 0, y_loc <= 1, sc.sum(y_loc) == 2])
        val = se_value(G, {x.id: np.array([3.0, 1.0, 2.0])})
        assert abs(val - 5.0) < 1e-6

    def test_saddle_min_mirror_of_max(self):
        # maximin route to the matrix game value
        y = sc.Variable(2, name="y")
        x_loc = sc.LocalVariable(2, name="x_loc")
        H = sc.saddle_min(sc.inner(x_loc, C @ y),
                          [x_loc >= 0, sc.sum(x_loc) == 1])
        prob = sc.Problem(sc.Maximize(H), [y >= 0, sc.sum(y) == 1])
        value = prob.solve()
        assert abs(value - 5.0 / 3.0) < 1e-5
        assert np.allclose(y.value, [1 / 3, 2 / 3], atol=1e-4)


class TestSaddleProblems:
    def test_matrix_game_via_saddle_max(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        G = sc.saddle_max(sc.inner(x, C @ y_loc),
                          [y_loc >= 0, sc.sum(y_loc) == 1])
        prob = sc.Problem(sc.Minimize(G), [x >= 0, sc.sum(x) == 1])
        assert prob.is_dsp()
        value = prob.solve()
        assert abs(value - 5.0 / 3.0) < 1e-5
        assert np.allclose(x.value, [2 / 3, 1 / 3], atol=1e-4)
        assert prob.report.bound == "upper"
        # the recovered local maximizer attains the SE value at x*
        attained = float(sc.evaluate(sc.inner(x, C @ y_loc), None))
        assert abs(attained - value) < 1e-5

    def test_singleton_set_reduces_to_plain_dcp(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        G = sc.saddle_max(sc.inner(x, y_loc), [y_loc == 0])
        prob = sc.Problem(sc.Minimize(G + sc.norm1(x)), [x >= -1, x <= 1])
        assert abs(prob.solve()) < 1e-7

    def test_se_in_constraint_restriction_feasible(self):
        h = sc.Variable(2, name="h", nonneg=True)
        d_loc = sc.LocalVariable(2, name="d_loc")
        V = sc.saddle_min(sc.inner(d_loc, h), [d_loc >= -0.5, d_loc <= 0.5])
        prob = sc.Problem(sc.Minimize(sc.sum(h)), [V >= -0.4, sc.sum(h) >= 0.5])
        value = prob.solve()
        assert abs(value - 0.5) < 1e-6
        # semi-infinite feasibility spot check: inner(d, h*) >= -0.4 on a grid
        hs = h.value
        axis = np.linspace(-0.5, 0.5, 21)
        for a in axis:
            for b in axis:
                assert a * hs[0] + b * hs[1] >= -0.4 - 1e-6

    def test_nested_se_in_dcp_atom(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        G = sc.saddle_max(sc.inner(x, y_loc), [y_loc >= -1, y_loc <= 1])
        prob = sc.Problem(sc.Minimize(sc.pos(G - 1.0) + sc.sum_squares(x - 1.0)))
        value = prob.solve()
        # G(x) = |x|_1; optimum trades the hinge against the quadratic
        assert value < 0.5 + 1e-4

    def test_local_used_outside_se_rejected(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        G = sc.saddle_max(sc.inner(x, y_loc), [y_loc >= 0, y_loc <= 1])
        prob = sc.Problem(sc.Minimize(G + sc.sum(y_loc)), [x >= 0])
        diags = prob.diagnostics()
        assert any(d.code == "NonLocalVariable" for d in diags)
        report = sc.solve_saddle_problem(prob)
        assert report.status == NOT_DSP

    def test_evaluate_with_se(self):
        x = sc.Variable(2, name="x")
        y_loc = sc.LocalVariable(2, name="y_loc")
        G = sc.saddle_max(sc.inner(x, y_loc), [y_loc >= -1, y_loc <= 1])
        val = sc.evaluate_with_se(G + 1.0, {x.id: np.array([1.0, -2.0])})
        assert abs(float(val) - 4.0) < 1e-6
