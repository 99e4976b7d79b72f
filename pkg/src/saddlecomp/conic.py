"""Standard-form cone programs, cone arithmetic, and solver adapters.

A ``ConeProgram`` is  minimize c'z  subject to  A z + s = b,  s in K,
where K is the product of the listed cones in declaration order.  The cone
family is {Zero, NonNeg, SecondOrder, Exponential, PSDTriangle} plus the
dual exponential cone and the free cone, which arise from dualization.

PSD blocks are packed as the upper triangle in column-major order with
off-diagonal entries scaled by sqrt(2).  The exponential cone is
{(a, b, c) | b > 0, b*exp(a/b) <= c} (closed), and its dual satisfies
(u, v, w) in Kexp* iff (-v, -u, e*w) in Kexp, which is how adapters
without native dual-exponential support handle those blocks.
"""

import json
import os
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CapabilityError, SolverError

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
EXP = "exp"
DEXP = "dexp"
PSD = "psd"
FREE = "free"

_KINDS = (ZERO, NONNEG, SOC, EXP, DEXP, PSD, FREE)


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("cone dim must be >= 1")
        if self.kind in (EXP, DEXP) and self.dim != 3:
            raise ValueError("exponential cone blocks have length 3")

    @property
    def nrows(self) -> int:
        """Number of packed rows the block occupies."""
        if self.kind == PSD:
            return self.dim * (self.dim + 1) // 2
        return self.dim


def dual_cone(cone: Cone) -> Cone:
    """Dual of a cone block.  Zero and Free are dual to each other; NonNeg,
    SecondOrder, and PSDTriangle are self-dual; the exponential cone maps to
    the dual exponential cone (a distinct kind flag) and back."""
    mapping = {ZERO: FREE, FREE: ZERO, NONNEG: NONNEG, SOC: SOC,
               PSD: PSD, EXP: DEXP, DEXP: EXP}
    return Cone(mapping[cone.kind], cone.dim)


def cone_contains(cone: Cone, vec, tol=1e-9) -> bool:
    """Numeric membership test, used by tests and certificates."""
    v = np.asarray(vec, dtype=float)
    if cone.kind == ZERO:
        return bool(np.all(np.abs(v) <= tol))
    if cone.kind == FREE:
        return True
    if cone.kind == NONNEG:
        return bool(np.all(v >= -tol))
    if cone.kind == SOC:
        return v[0] >= np.linalg.norm(v[1:]) - tol
    if cone.kind == EXP:
        a, b, c = v
        if b > tol:
            return c >= b * np.exp(a / b) - tol
        return b >= -tol and a <= tol and c >= -tol
    if cone.kind == DEXP:
        u, vv, w = v
        if u < -tol:
            return np.e * w >= -u * np.exp(vv / u) - tol
        return abs(u) <= tol and vv >= -tol and w >= -tol
    if cone.kind == PSD:
        from .packing import smat
        return bool(np.linalg.eigvalsh(smat(v)).min() >= -max(tol, 1e-8))
    raise ValueError(cone.kind)


OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
NUMERICAL_ERROR = "NumericalError"


@dataclass
class Solution:
    status: str
    primal: np.ndarray = None
    dual: np.ndarray = None
    obj: float = np.nan


@dataclass
class SolverOptions:
    backend: str = None
    eps: float = None
    max_iters: int = None
    verbose: bool = False


@dataclass
class SetRep:
    """Conic representation {z | exists u: Amat z + Bmat u <=_K cvec}."""

    Amat: np.ndarray
    Bmat: np.ndarray
    cvec: np.ndarray
    cones: list
    main_dim: int

    @property
    def aux_dim(self):
        return self.Bmat.shape[1]

    def contains(self, z, tol=1e-7):
        """Feasibility of z, deciding the auxiliaries by linear programming."""
        from scipy.optimize import linprog
        z = np.asarray(z, dtype=float)
        resid = self.cvec - self.Amat @ z
        # split rows into equalities (zero cone) and conic rows; handle
        # nonneg rows by LP, other cones by sampling-free direct check when
        # there are no auxiliaries.
        if self.aux_dim == 0:
            off = 0
            for cone in self.cones:
                r = resid[off:off + cone.nrows]
                if not cone_contains(cone, r, tol):
                    return False
                off += cone.nrows
            return True
        if any(c.kind not in (ZERO, NONNEG) for c in self.cones):
            raise NotImplementedError("LP membership check needs polyhedral rep")
        A_eq, b_eq, A_ub, b_ub = [], [], [], []
        off = 0
        for cone in self.cones:
            B = self.Bmat[off:off + cone.nrows]
            r = resid[off:off + cone.nrows]
            if cone.kind == ZERO:
                A_eq.append(B)
                b_eq.append(r)
            else:
                A_ub.append(B)
                b_ub.append(r)
            off += cone.nrows
        res = linprog(
            c=np.zeros(self.aux_dim),
            A_ub=np.vstack(A_ub) if A_ub else None,
            b_ub=np.concatenate(b_ub) + tol if A_ub else None,
            A_eq=np.vstack(A_eq) if A_eq else None,
            b_eq=np.concatenate(b_eq) if A_eq else None,
            bounds=[(None, None)] * self.aux_dim, method="highs")
        return res.status == 0


@dataclass
class ConeProgram:
    """minimize c'z  s.t.  A z + s = b,  s in product of cones."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list
    var_index: dict = field(default_factory=dict)  # label -> (start, end)

    def __post_init__(self):
        total = sum(cone.nrows for cone in self.cones)
        if total != self.A.shape[0]:
            raise ValueError(
                f"cone rows {total} do not match matrix rows {self.A.shape[0]}")

    @property
    def num_vars(self):
        return self.A.shape[1]

    def to_json_dict(self):
        coo = self.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return {
            "c": self.c.tolist(),
            "A": {
                "rows": coo.row[order].tolist(),
                "cols": coo.col[order].tolist(),
                "vals": coo.data[order].tolist(),
                "shape": [int(self.A.shape[0]), int(self.A.shape[1])],
            },
            "b": self.b.tolist(),
            "cones": [{"kind": c.kind, "dim": int(c.dim)} for c in self.cones],
            "var_index": {k: [int(v[0]), int(v[1])] for k, v in self.var_index.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_dict(d) -> "ConeProgram":
        shape = tuple(d["A"]["shape"])
        A = sp.csc_matrix(
            (d["A"]["vals"], (d["A"]["rows"], d["A"]["cols"])), shape=shape)
        return ConeProgram(
            c=np.asarray(d["c"], dtype=float),
            A=A,
            b=np.asarray(d["b"], dtype=float),
            cones=[Cone(c["kind"], c["dim"]) for c in d["cones"]],
            var_index={k: tuple(v) for k, v in d.get("var_index", {}).items()},
        )

    @staticmethod
    def from_json(text) -> "ConeProgram":
        return ConeProgram.from_json_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Solver adapters

_DEXP_T = np.array([[0.0, -1.0, 0.0],
                    [-1.0, 0.0, 0.0],
                    [0.0, 0.0, np.e]])


def _row_offsets(cones):
    offs, off = [], 0
    for cone in cones:
        offs.append(off)
        off += cone.nrows
    return offs, off


class ClarabelAdapter:
    """Interior-point backend; the default.  Supports all cone kinds, with
    dual-exponential blocks rewritten onto the primal exponential cone."""

    name = "clarabel"
    capabilities = {ZERO, NONNEG, SOC, EXP, DEXP, PSD}
    thread_safe = True

    def solve(self, prog: ConeProgram, opts: SolverOptions) -> Solution:
        import clarabel

        A = prog.A.tocsr().astype(float)
        b = prog.b.astype(float).copy()
        offs, m = _row_offsets(prog.cones)
        dexp_blocks = [off for off, c in zip(offs, prog.cones) if c.kind == DEXP]
        if dexp_blocks:
            A = A.tolil()
            for off in dexp_blocks:
                rows = slice(off, off + 3)
                A[rows, :] = _DEXP_T @ A[rows, :].toarray()
                b[rows] = _DEXP_T @ b[rows]
            A = A.tocsr()

        cones = []
        for cone in prog.cones:
            if cone.kind == ZERO:
                cones.append(clarabel.ZeroConeT(cone.dim))
            elif cone.kind == NONNEG:
                cones.append(clarabel.NonnegativeConeT(cone.dim))
            elif cone.kind == SOC:
                cones.append(clarabel.SecondOrderConeT(cone.dim))
            elif cone.kind in (EXP, DEXP):
                cones.append(clarabel.ExponentialConeT())
            elif cone.kind == PSD:
                cones.append(clarabel.PSDTriangleConeT(cone.dim))
            else:
                raise CapabilityError(f"clarabel cannot handle {cone.kind} rows")

        settings = clarabel.DefaultSettings()
        settings.verbose = bool(opts.verbose)
        if opts.eps is not None:
            settings.tol_gap_abs = opts.eps
            settings.tol_gap_rel = opts.eps
            settings.tol_feas = opts.eps
        if opts.max_iters is not None:
            settings.max_iter = opts.max_iters
        P = sp.csc_matrix((prog.num_vars, prog.num_vars))
        solver = clarabel.DefaultSolver(
            P, prog.c.astype(float), sp.csc_matrix(A), b, cones, settings)
        sol = solver.solve()
        status = str(sol.status)
        primal = np.asarray(sol.x, dtype=float)
        dual = np.asarray(sol.z, dtype=float)
        for off in dexp_blocks:
            dual[off:off + 3] = _DEXP_T.T @ dual[off:off + 3]
        if status == "Solved":
            return Solution(OPTIMAL, primal, dual, float(prog.c @ primal))
        if "PrimalInfeasible" in status:
            return Solution(INFEASIBLE)
        if "DualInfeasible" in status:
            return Solution(UNBOUNDED)
        return Solution(NUMERICAL_ERROR, primal, dual)


class ScsAdapter:
    """First-order backend.  Rows are permuted into SCS's fixed cone order
    (zero, nonneg, soc, psd, exp, dual exp) and permuted back on return."""

    name = "scs"
    capabilities = {ZERO, NONNEG, SOC, EXP, DEXP, PSD}
    thread_safe = True

    _ORDER = {ZERO: 0, NONNEG: 1, SOC: 2, PSD: 3, EXP: 4, DEXP: 5}

    def _permutation(self, cones):
        offs, m = _row_offsets(cones)
        blocks = sorted(range(len(cones)),
                        key=lambda i: (self._ORDER[cones[i].kind], i))
        perm = []
        for i in blocks:
            rows = list(range(offs[i], offs[i] + cones[i].nrows))
            if cones[i].kind == PSD:
                fwd = _upper_to_lower_perm(cones[i].dim)
                rows = [0] * len(fwd)
                for k, pos in enumerate(fwd):
                    rows[pos] = offs[i] + k
            perm.extend(rows)
        return np.asarray(perm, dtype=int), blocks

    def solve(self, prog: ConeProgram, opts: SolverOptions) -> Solution:
        import scs

        for cone in prog.cones:
            if cone.kind not in self.capabilities:
                raise CapabilityError(f"scs cannot handle {cone.kind} rows")
        if not prog.cones:  # scs rejects empty cone data; pad a trivial row
            prog = ConeProgram(c=prog.c,
                               A=sp.csc_matrix((1, prog.num_vars)),
                               b=np.zeros(1), cones=[Cone(ZERO, 1)],
                               var_index=prog.var_index)
        perm, blocks = self._permutation(prog.cones)
        A = prog.A.tocsr()[perm].tocsc().astype(float)
        b = prog.b[perm].astype(float)
        cone_spec = {}
        z = sum(c.dim for c in prog.cones if c.kind == ZERO)
        l = sum(c.dim for c in prog.cones if c.kind == NONNEG)
        q = [c.dim for i in blocks for c in [prog.cones[i]] if c.kind == SOC]
        s = [c.dim for i in blocks for c in [prog.cones[i]] if c.kind == PSD]
        ep = sum(1 for c in prog.cones if c.kind == EXP)
        ed = sum(1 for c in prog.cones if c.kind == DEXP)
        if z:
            cone_spec["z"] = z
        if l:
            cone_spec["l"] = l
        if q:
            cone_spec["q"] = q
        if s:
            cone_spec["s"] = s
        if ep:
            cone_spec["ep"] = ep
        if ed:
            cone_spec["ed"] = ed
        eps = opts.eps if opts.eps is not None else 1e-8
        solver = scs.SCS(
            {"A": A, "b": b, "c": prog.c.astype(float)}, cone_spec,
            verbose=bool(opts.verbose), eps_abs=eps, eps_rel=eps,
            max_iters=opts.max_iters or 100000)
        out = solver.solve()
        status = out["info"]["status"]
        primal = np.asarray(out["x"], dtype=float)
        dual_p = np.asarray(out["y"], dtype=float)
        dual = np.empty_like(dual_p)
        if dual_p.size:
            dual[perm] = dual_p
        if status.startswith("solved"):
            return Solution(OPTIMAL, primal, dual, float(prog.c @ primal))
        if "infeasible" in status:
            return Solution(INFEASIBLE)
        if "unbounded" in status:
            return Solution(UNBOUNDED)
        return Solution(NUMERICAL_ERROR, primal, dual)


def _upper_to_lower_perm(n):
    """Positions of upper-triangle column-major entries in the lower-triangle
    column-major packing used by SCS."""
    upper = [(i, j) for j in range(n) for i in range(j + 1)]
    lower = [(i, j) for j in range(n) for i in range(j, n)]
    lower_pos = {ij: k for k, ij in enumerate(lower)}
    # entry (i, j) with i <= j of the symmetric matrix equals entry (j, i)
    return [lower_pos[(j, i)] for (i, j) in upper]


ADAPTERS = {"clarabel": ClarabelAdapter(), "scs": ScsAdapter()}
_adapter_lock = threading.Lock()


def default_backend() -> str:
    env = os.environ.get("SADDLECOMP_BACKEND")
    if env:
        if env not in ADAPTERS:
            raise SolverError(f"unknown backend {env!r} in SADDLECOMP_BACKEND")
        return env
    for name in ("clarabel", "scs"):
        try:
            __import__(name)
            return name
        except ImportError:
            continue
    raise SolverError("no cone solver backend available")


def backend_capabilities(backend=None):
    return ADAPTERS[backend or default_backend()].capabilities


def solve_cone(prog: ConeProgram, opts: SolverOptions = None) -> Solution:
    """Solve through the selected backend adapter.

    Fails fast with CapabilityError when the program needs a cone the
    backend does not declare.  Statuses pass through untranslated beyond the
    four standard values.
    """
    opts = opts or SolverOptions()
    adapter = ADAPTERS[opts.backend or default_backend()]
    missing = {c.kind for c in prog.cones} - set(adapter.capabilities) - {FREE}
    if missing:
        raise CapabilityError(
            f"backend {adapter.name} lacks support for cones {sorted(missing)}")
    if any(c.kind == FREE for c in prog.cones):
        raise CapabilityError("free cones must be eliminated before solving")
    if adapter.thread_safe:
        return adapter.solve(prog, opts)
    with _adapter_lock:
        return adapter.solve(prog, opts)
