import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import saddlecomp as sc
from saddlecomp import canon, conic
from saddlecomp.conic import (
    Cone, ConeProgram, SolverOptions, cone_contains, dual_cone, solve_cone,
)
from saddlecomp.packing import svec

BACKENDS = ["clarabel", "scs"]


def sample_in_cone(cone, rng):
    if cone.kind == "zero":
        return np.zeros(cone.dim)
    if cone.kind == "free":
        return rng.normal(size=cone.dim)
    if cone.kind == "nonneg":
        return np.abs(rng.normal(size=cone.dim))
    if cone.kind == "soc":
        x = rng.normal(size=cone.dim - 1)
        return np.concatenate([[np.linalg.norm(x) + abs(rng.normal())], x])
    if cone.kind == "exp":
        a = rng.normal()
        b = abs(rng.normal()) + 0.1
        return np.array([a, b, b * np.exp(a / b) + abs(rng.normal())])
    if cone.kind == "dexp":
        u = -(abs(rng.normal()) + 0.1)
        v = rng.normal()
        return np.array([u, v, (-u * np.exp(v / u)) / np.e + abs(rng.normal())])
    if cone.kind == "psd":
        L = rng.normal(size=(cone.dim, cone.dim))
        return svec(L @ L.T)
    raise ValueError(cone.kind)


class TestDualCone:
    def test_self_dual_kinds(self):
        assert dual_cone(Cone("nonneg", 5)) == Cone("nonneg", 5)
        assert dual_cone(Cone("soc", 4)) == Cone("soc", 4)
        assert dual_cone(Cone("psd", 3)) == Cone("psd", 3)

    def test_zero_free_pair(self):
        assert dual_cone(Cone("zero", 2)) == Cone("free", 2)
        assert dual_cone(Cone("free", 2)) == Cone("zero", 2)

    def test_involution(self):
        for kind, dim in [("zero", 4), ("nonneg", 5), ("soc", 4), ("exp", 3),
                          ("dexp", 3), ("psd", 3), ("free", 2)]:
            c = Cone(kind, dim)
            assert dual_cone(dual_cone(c)) == c

    def test_dual_pairing_by_sampling(self):
        # <s, z> >= 0 for 1000 random pairs s in K, z in dual(K)
        rng = np.random.default_rng(8)
        for kind, dim in [("exp", 3), ("dexp", 3), ("nonneg", 6), ("soc", 5),
                          ("psd", 3)]:
            cone = Cone(kind, dim)
            dual = dual_cone(cone)
            for _ in range(200):
                s = sample_in_cone(cone, rng)
                z = sample_in_cone(dual, rng)
                assert s @ z >= -1e-9
                assert cone_contains(cone, s)
                assert cone_contains(dual, z)


def small_lp():
    x = sc.Variable(2, name="x", nonneg=True)
    obj = sc.sum(sc.multiply(np.array([1.0, 2.0]), x))
    _, prog = canon.canonicalize_dcp(obj, [sc.sum(x) == 1])
    return prog


class TestSolveCone:
    @pytest.mark.parametrize("backend", BACKENDS)
    def test_lp(self, backend):
        sol = solve_cone(small_lp(), SolverOptions(backend=backend))
        assert sol.status == conic.OPTIMAL
        assert abs(sol.obj - 1.0) < 1e-6

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_infeasible(self, backend):
        x = sc.Variable(name="x")
        _, prog = canon.canonicalize_dcp(x, [x >= 1, x <= 0])
        assert solve_cone(prog, SolverOptions(backend=backend)).status \
            == conic.INFEASIBLE

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_unbounded(self, backend):
        x = sc.Variable(name="x")
        _, prog = canon.canonicalize_dcp(x, [])
        assert solve_cone(prog, SolverOptions(backend=backend)).status \
            == conic.UNBOUNDED

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_exp_and_psd_agree(self, backend):
        x = sc.Variable(2, name="x")
        _, prog = canon.canonicalize_dcp(sc.log_sum_exp(x), [x == np.zeros(2)])
        sol = solve_cone(prog, SolverOptions(backend=backend))
        assert abs(sol.obj - np.log(2)) < 1e-6
        X = sc.Variable((2, 2), name="X", psd=True)
        _, prog = canon.canonicalize_dcp(X[0, 0] + X[1, 1], [X[0, 1] == 1])
        sol = solve_cone(prog, SolverOptions(backend=backend))
        assert abs(sol.obj - 2.0) < 1e-6

    def test_self_consistency_obj(self):
        sol = solve_cone(small_lp())
        assert abs(small_lp().c @ sol.primal - sol.obj) < 1e-8

    def test_free_rows_rejected(self):
        prog = small_lp()
        prog.cones[0] = Cone("free", prog.cones[0].dim)
        with pytest.raises(conic.CapabilityError if hasattr(conic, "CapabilityError")
                           else Exception):
            solve_cone(prog)

    def test_env_backend_selection(self, monkeypatch):
        monkeypatch.setenv("SADDLECOMP_BACKEND", "scs")
        assert conic.default_backend() == "scs"
        monkeypatch.setenv("SADDLECOMP_BACKEND", "nope")
        with pytest.raises(Exception):
            conic.default_backend()

    def test_concurrent_solves(self):
        progs = [small_lp() for _ in range(4)]
        with ThreadPoolExecutor(max_workers=4) as pool:
            sols = list(pool.map(solve_cone, progs))
        assert all(abs(s.obj - 1.0) < 1e-6 for s in sols)


class TestJsonExport:
    def test_round_trip_bit_exact(self):
        prog = small_lp()
        text = prog.to_json()
        again = ConeProgram.from_json(text)
        assert again.to_json() == text
        sol1, sol2 = solve_cone(prog), solve_cone(again)
        assert abs(sol1.obj - sol2.obj) < 1e-12

    def test_schema_fields(self):
        doc = json.loads(small_lp().to_json())
        assert set(doc) == {"c", "A", "b", "cones", "var_index"}
        assert set(doc["A"]) == {"rows", "cols", "vals", "shape"}
        assert all(set(c) == {"kind", "dim"} for c in doc["cones"])

    def test_var_index_partitions_columns(self):
        prog = small_lp()
        ranges = sorted(prog.var_index.values())
        assert ranges[0][0] == 0
        for (a, b), (c, d) in zip(ranges, ranges[1:]):
            assert b == c
        assert ranges[-1][1] == prog.num_vars


class TestCapabilityFlag:
    def test_psd_requirement_fails_fast(self, monkeypatch):
        X = sc.Variable((2, 2), psd=True)
        _, prog = canon.canonicalize_dcp(X[0, 0] + X[1, 1], [X[0, 1] == 1])
        adapter = conic.ADAPTERS["clarabel"]
        monkeypatch.setattr(adapter, "capabilities",
                            adapter.capabilities - {conic.PSD})
        from saddlecomp.errors import CapabilityError
        with pytest.raises(CapabilityError, match="psd"):
            conic.solve_cone(prog, SolverOptions(backend="clarabel"))
