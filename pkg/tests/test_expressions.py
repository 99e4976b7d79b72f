import numpy as np
import pytest

import saddlecomp as sc
from saddlecomp.errors import ShapeError
from saddlecomp.expressions import Curvature, Shape, Sign

from helpers import midpoint_convex


class TestShape:
    def test_scalar_vector_matrix(self):
        assert Shape(()).size == 1
        assert Shape((3,)).size == 3
        assert Shape((2, 3)).size == 6

    def test_too_many_dims(self):
        with pytest.raises(ShapeError):
            Shape((2, 2, 2))

    def test_nonpositive_dim(self):
        with pytest.raises(ShapeError):
            Shape((0,))

    def test_broadcast_only_scalar(self):
        x = sc.Variable(3)
        y = sc.Variable(2)
        with pytest.raises(ShapeError):
            x + y
        assert (x + 1.0).shape.dims == (3,)


class TestCurvature:
    def test_constant(self):
        assert sc.curvature_of(sc.Constant(3.0)) is Curvature.CONSTANT

    def test_convex_composition(self):
        x = sc.Variable()
        assert sc.curvature_of(sc.square(2 * x + 1)) is Curvature.CONVEX

    def test_concave_of_concave_nonneg(self):
        # log of a concave nonnegative child composes to concave; checked
        # against brute-force midpoint concavity on random segments
        y = sc.Variable(name="y")
        e = sc.log(sc.sqrt(y))
        assert sc.curvature_of(e) is Curvature.CONCAVE
        worst = midpoint_convex(-e, lambda rng: {y.id: rng.uniform(0.1, 5.0)},
                                np.random.default_rng(0), segments=100)
        assert worst <= 0

    def test_sign_information_tightens(self):
        # the same composition is convex only when the child sign is known
        x = sc.Variable(2)
        known = sc.square(sc.norm2(x) + 1.0)
        unknown = sc.square(sc.norm2(x) - 1.0)
        assert sc.curvature_of(known) is Curvature.CONVEX
        assert sc.curvature_of(unknown) is Curvature.UNKNOWN

    def test_negation_flips(self):
        x = sc.Variable()
        assert sc.curvature_of(-sc.square(x)) is Curvature.CONCAVE
        assert sc.curvature_of(-2.0 * sc.log(x)) is Curvature.CONVEX

    def test_affine_ops_preserve(self):
        x = sc.Variable(3)
        A = np.arange(6.0).reshape(2, 3)
        assert sc.curvature_of(A @ x + np.ones(2)) is Curvature.AFFINE
        assert sc.curvature_of(sc.sum(sc.square(x))) is Curvature.CONVEX

    def test_mixed_sign_matrix_needs_affine(self):
        x = sc.Variable(2)
        M = np.array([[1.0, -1.0], [0.5, 2.0]])
        assert sc.curvature_of(M @ x) is Curvature.AFFINE
        assert sc.curvature_of(sc.multiply(np.array([1.0, -1.0]),
                                           sc.square(x))) is Curvature.UNKNOWN

    def test_soundness_random_corpus(self):
        # every expression judged convex passes midpoint convexity on >=1000
        # random segments (soundness of the composition rule)
        rng = np.random.default_rng(42)
        x = sc.Variable(3, name="x")
        u = sc.Variable(name="u")
        box = lambda r: {x.id: r.uniform(-2, 2, 3), u.id: r.uniform(-2, 2)}
        posd = lambda r: {x.id: r.uniform(0.1, 3, 3), u.id: r.uniform(0.1, 3)}
        corpus = [
            (sc.norm2(x) + sc.square(u), box),
            (sc.log_sum_exp(x) + sc.pos(u), box),
            (sc.maximum(sc.norm1(x), u, 0.5), box),
            (sc.sum_squares(2 * x + 1.0) - 3 * u, box),
            (sc.exp(u) + sc.norm_inf(x), box),
            (-sc.log(u) + sc.abs(u), posd),
            (-sc.geo_mean(x) + u, posd),
            (-sc.sqrt(sc.sum(x)) + sc.square(u), posd),
        ]
        total = 0
        for expr, sampler in corpus:
            assert sc.curvature_of(expr).is_convex()
            assert midpoint_convex(expr, sampler, rng, segments=150) <= 0
            total += 150
        assert total >= 1000

    def test_analysis_determinism(self):
        x = sc.Variable(2, name="x")

        def build():
            return sc.log_sum_exp(x) + 2.0 * sc.norm1(x) - 1.0

        a, b = build(), build()
        assert sc.curvature_of(a) is sc.curvature_of(b)
        assert sc.sign_of(a) is sc.sign_of(b)


class TestSign:
    def test_square_nonneg(self):
        assert sc.sign_of(sc.square(sc.Variable())) is Sign.NONNEGATIVE

    def test_negate_square_nonpos(self):
        assert sc.sign_of(-sc.square(sc.Variable())) is Sign.NONPOSITIVE

    def test_exp_nonneg_range_check(self):
        x = sc.Variable()
        e = sc.exp(x)
        assert sc.sign_of(e) is Sign.NONNEGATIVE
        rng = np.random.default_rng(1)
        vals = [float(sc.evaluate(e, {x.id: rng.normal(scale=3)}))
                for _ in range(200)]
        assert min(vals) >= 0

    def test_sum_of_nonneg(self):
        x = sc.Variable(3, nonneg=True)
        assert sc.sign_of(sc.sum(x)) is Sign.NONNEGATIVE
        assert sc.sign_of(sc.sum(x) - 1.0) is Sign.UNKNOWN

    def test_zero_is_both(self):
        z = Sign.ZERO
        assert z.is_nonneg() and z.is_nonpos()


class TestVariablesOf:
    def test_single(self):
        x = sc.Variable(name="x")
        assert sc.variables_of(x) == [x]

    def test_dedup(self):
        x = sc.Variable(name="x")
        assert sc.variables_of(x + x) == [x]

    def test_inner_collects_both_sides(self):
        x = sc.Variable(2, name="x")
        y = sc.Variable(2, name="y")
        C = np.array([[1.0, 2.0], [3.0, 1.0]])
        f = sc.inner(x, C @ y)
        assert sc.variables_of(f) == [x, y]

    def test_id_sorted(self):
        a = sc.Variable(name="a")
        b = sc.Variable(name="b")
        assert sc.variables_of(b + a) == [a, b]


class TestEvaluateAndSubstitute:
    def test_affine_ops(self):
        x = sc.Variable((2, 2), name="x")
        val = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert float(sc.evaluate(sc.sum(x.T), {x.id: val})) == 10.0
        assert np.allclose(sc.evaluate(x[0, :], {x.id: val}), [1.0, 2.0])
        assert np.allclose(
            sc.evaluate(sc.reshape(x, (4,)), {x.id: val}),
            val.flatten(order="F"))

    def test_symmetric_variable_packing_roundtrip(self):
        from saddlecomp.packing import smat, svec
        M = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 4.0]])
        assert np.allclose(smat(svec(M)), M)
        assert abs(svec(M) @ svec(M) - np.sum(M * M)) < 1e-12

    def test_substitute_folds_constants(self):
        x = sc.Variable(2, name="x")
        e = sc.norm2(x) + 1.0
        out = sc.substitute(e, {x.id: np.array([3.0, 4.0])})
        assert isinstance(out, sc.Constant)
        assert float(out.value_array) == 6.0

    def test_hstack_and_maximum(self):
        x = sc.Variable(name="x")
        e = sc.maximum(sc.hstack([x, 2.0 * x]), 1.0)
        assert np.allclose(sc.evaluate(e, {x.id: 3.0}), [3.0, 6.0])

    def test_constraint_truthiness_forbidden(self):
        x = sc.Variable()
        with pytest.raises(TypeError):
            bool(x <= 1)
