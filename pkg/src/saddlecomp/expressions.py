"""Immutable expression trees with curvature, sign, and shape analysis.

Expressions are built from variables, constants, affine operations, and
atoms drawn from a registered atom table.  Every node is immutable after
construction and caches its analysis (shape at build time, curvature and
sign lazily), so trees are safe to share across threads.  The only mutable
global is the variable id allocator, which is atomic in CPython.

Curvature follows the standard composition rule: an atom application is
convex if the atom is convex and every argument is affine, or convex where
the atom is nondecreasing, or concave where it is nonincreasing (and dually
for concave atoms).  Monotonicity may depend on the argument's sign, e.g.
``square`` is nondecreasing only on nonnegative arguments.  The analysis is
sound but deliberately incomplete: ``UNKNOWN`` is not an error until a
disciplined context demands otherwise.
"""

from __future__ import annotations

import enum
import itertools
import numbers
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_var_ids = itertools.count()


# ---------------------------------------------------------------------------
# Shapes


@dataclass(frozen=True)
class Shape:
    """Dimensions of an expression: () scalar, (n,) vector, (n, m) matrix."""

    dims: tuple

    def __post_init__(self):
        if len(self.dims) > 2:
            raise ShapeError(f"at most 2 dimensions supported, got {self.dims}")
        if any((not isinstance(d, (int, np.integer))) or d < 1 for d in self.dims):
            raise ShapeError(f"all dimensions must be integers >= 1, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @staticmethod
    def of(dims) -> "Shape":
        if isinstance(dims, Shape):
            return dims
        if isinstance(dims, (int, np.integer)):
            return Shape((int(dims),))
        return Shape(tuple(dims))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=int)) if self.dims else 1

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def is_scalar(self) -> bool:
        return self.dims == ()

    def __iter__(self):
        return iter(self.dims)

    def __repr__(self):
        return f"Shape{self.dims}"


SCALAR = Shape(())


# ---------------------------------------------------------------------------
# Curvature and sign lattices


class Curvature(enum.Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    CONVEX = "convex"
    CONCAVE = "concave"
    UNKNOWN = "unknown"

    def is_constant(self):
        return self is Curvature.CONSTANT

    def is_affine(self):
        return self in (Curvature.CONSTANT, Curvature.AFFINE)

    def is_convex(self):
        return self.is_affine() or self is Curvature.CONVEX

    def is_concave(self):
        return self.is_affine() or self is Curvature.CONCAVE

    def flipped(self):
        if self is Curvature.CONVEX:
            return Curvature.CONCAVE
        if self is Curvature.CONCAVE:
            return Curvature.CONVEX
        return self

    def __add__(self, other):
        if self.is_constant():
            return other
        if other.is_constant():
            return self
        if self.is_affine() and other.is_affine():
            return Curvature.AFFINE
        if self.is_convex() and other.is_convex():
            return Curvature.CONVEX
        if self.is_concave() and other.is_concave():
            return Curvature.CONCAVE
        return Curvature.UNKNOWN


class Sign(enum.Enum):
    NONNEGATIVE = "nonnegative"
    NONPOSITIVE = "nonpositive"
    ZERO = "zero"
    UNKNOWN = "unknown"

    def is_nonneg(self):
        return self in (Sign.NONNEGATIVE, Sign.ZERO)

    def is_nonpos(self):
        return self in (Sign.NONPOSITIVE, Sign.ZERO)

    def flipped(self):
        if self is Sign.NONNEGATIVE:
            return Sign.NONPOSITIVE
        if self is Sign.NONPOSITIVE:
            return Sign.NONNEGATIVE
        return self

    def __add__(self, other):
        if self is Sign.ZERO:
            return other
        if other is Sign.ZERO:
            return self
        if self is other:
            return self
        return Sign.UNKNOWN


def sign_of_constant(value) -> Sign:
    arr = np.asarray(value, dtype=float)
    if np.all(arr == 0):
        return Sign.ZERO
    if np.all(arr >= 0):
        return Sign.NONNEGATIVE
    if np.all(arr <= 0):
        return Sign.NONPOSITIVE
    return Sign.UNKNOWN


# ---------------------------------------------------------------------------
# Atom descriptors

NONDECREASING = 1
NONINCREASING = -1
NOT_MONOTONE = 0


@dataclass
class AtomDescriptor:
    """Static metadata that drives analysis and lowering of one atom.

    ``monotonicity`` maps (argument index, argument sign) to a monotonicity
    flag.  Saddle atoms additionally declare which arguments sit on the
    convex and concave side, how to validate the arguments, which domain
    constraints to attach, and how to rewrite the atom once one side has
    been fixed to a constant.
    """

    name: str
    curvature: Curvature
    shape_fn: callable = None
    sign_fn: callable = None  # (node) -> Sign
    monotonicity: callable = None  # (i, child_sign) -> flag
    eval_fn: callable = None  # (child_values, data) -> ndarray
    validate: callable = None  # (children, data) -> data'
    # saddle-atom specific
    is_saddle: bool = False
    convex_slots: tuple = ()
    concave_slots: tuple = ()
    saddle_check: callable = None  # (node) -> list[(code, message)]
    attach_fn: callable = None  # (node) -> list[Constraint]
    fix_concave: callable = None  # (node, values) -> ExprNode
    fix_convex: callable = None


ATOMS: dict = {}


def register_atom(descriptor: AtomDescriptor):
    if descriptor.name in ATOMS:
        raise ValueError(f"atom {descriptor.name!r} registered twice")
    ATOMS[descriptor.name] = descriptor
    return descriptor


# ---------------------------------------------------------------------------
# Expression nodes


class ExprNode:
    """Base class for all expression tree nodes."""

    __array_ufunc__ = None  # let numpy defer to our reflected operators
    __array_priority__ = 100

    def __init__(self, children, shape):
        self._children = tuple(children)
        self._shape = shape
        self._curvature = None
        self._sign = None

    @property
    def children(self):
        return self._children

    @property
    def shape(self) -> Shape:
        return self._shape

    @property
    def size(self) -> int:
        return self._shape.size

    @property
    def curvature(self) -> Curvature:
        if self._curvature is None:
            self._curvature = self._compute_curvature()
        return self._curvature

    @property
    def sign(self) -> Sign:
        if self._sign is None:
            self._sign = self._compute_sign()
        return self._sign

    def _compute_curvature(self):
        raise NotImplementedError

    def _compute_sign(self):
        raise NotImplementedError

    def is_constant_node(self):
        return isinstance(self, Constant)

    @property
    def value(self):
        """Numeric value using the variables' stored values."""
        return evaluate(self, None)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, negate(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), negate(self))

    def __neg__(self):
        return negate(self)

    def __mul__(self, other):
        if isinstance(other, ExprNode) and not isinstance(other, Constant):
            return _expr_product(self, other, elementwise=True)
        return multiply(as_expr(other), self)

    def __rmul__(self, other):
        return multiply(as_expr(other), self)

    def __truediv__(self, other):
        if isinstance(other, ExprNode):
            raise TypeError("division by an expression is not supported")
        return multiply(as_expr(1.0 / np.asarray(other, dtype=float)), self)

    def __matmul__(self, other):
        if isinstance(other, ExprNode) and not isinstance(other, Constant):
            return _expr_product(self, other, elementwise=False)
        return matmul(self, as_expr(other), const_side="right")

    def __rmatmul__(self, other):
        return matmul(self, as_expr(other), const_side="left")

    def __getitem__(self, key):
        return index(self, key)

    def __le__(self, other):
        return Constraint("<=", self, as_expr(other))

    def __ge__(self, other):
        return Constraint("<=", as_expr(other), self)

    def __eq__(self, other):
        return Constraint("==", self, as_expr(other))

    def __ne__(self, other):
        raise TypeError("!= constraints are not supported")

    __hash__ = object.__hash__

    @property
    def T(self):
        return transpose(self)


class Constant(ExprNode):
    def __init__(self, value):
        arr = np.asarray(value, dtype=float)
        if arr.ndim > 2:
            raise ShapeError("constants must have at most 2 dimensions")
        super().__init__((), Shape(arr.shape))
        self.value_array = arr

    def _compute_curvature(self):
        return Curvature.CONSTANT

    def _compute_sign(self):
        return sign_of_constant(self.value_array)

    def __repr__(self):
        return f"Constant({self.value_array!r})"


class Variable(ExprNode):
    """Optimization variable; also the declaration record for problems.

    Attributes are drawn from {nonneg, psd, symmetric, local}.  The psd
    attribute implies a square symmetric matrix.  Symmetric and psd matrix
    variables are stored internally as the packed upper triangle in
    column-major order, with off-diagonal entries scaled by sqrt(2) so the
    packing is an isometry; plain matrix variables flatten column-major.
    """

    # Plain storage slot, shadowing the evaluated-tree property on the base.
    value = None

    def __init__(self, shape=(), name=None, nonneg=False, psd=False,
                 symmetric=False, local=False):
        shape = Shape.of(shape)
        if psd:
            symmetric = True
        if symmetric:
            if shape.ndim != 2 or shape.dims[0] != shape.dims[1]:
                raise ShapeError("symmetric/psd variables must be square matrices")
        super().__init__((), shape)
        self.id = next(_var_ids)
        self.name = name if name is not None else f"v{self.id}"
        self.attrs = frozenset(
            a for a, on in
            [("nonneg", nonneg), ("psd", psd), ("symmetric", symmetric),
             ("local", local)] if on
        )
        self.value = None

    @property
    def is_local(self):
        return "local" in self.attrs

    @property
    def is_psd(self):
        return "psd" in self.attrs

    @property
    def is_symmetric(self):
        return "symmetric" in self.attrs

    @property
    def is_nonneg(self):
        return "nonneg" in self.attrs

    @property
    def packed_size(self) -> int:
        """Number of internal scalar components backing this variable."""
        if self.is_symmetric:
            n = self.shape.dims[0]
            return n * (n + 1) // 2
        return self.size

    def _compute_curvature(self):
        return Curvature.AFFINE

    def _compute_sign(self):
        return Sign.NONNEGATIVE if self.is_nonneg else Sign.UNKNOWN

    def __repr__(self):
        return f"Variable({self.name}, shape={self.shape.dims})"


def LocalVariable(shape=(), name=None, nonneg=False, psd=False, symmetric=False):
    """Dummy variable scoped to a single saddle-extremum expression."""
    return Variable(shape, name=name, nonneg=nonneg, psd=psd,
                    symmetric=symmetric, local=True)


class AffineOp(ExprNode):
    """Structural affine operation (add, negate, scale, gather, ...)."""

    def __init__(self, op, children, shape, data=None):
        super().__init__(children, shape)
        self.op = op
        self.data = data

    def _compute_curvature(self):
        kids = [c.curvature for c in self.children]
        if all(k.is_constant() for k in kids):
            return Curvature.CONSTANT
        if self.op == "negate":
            return kids[0].flipped()
        if self.op == "scale":
            return kids[0] if self.data >= 0 else kids[0].flipped()
        if self.op in ("multiply", "matmul"):
            arr = self.data[0] if self.op == "matmul" else self.data
            if np.all(arr >= 0):
                return kids[0]
            if np.all(arr <= 0):
                return kids[0].flipped()
            return kids[0] if kids[0].is_affine() else Curvature.UNKNOWN
        # add, sum, gather, hstack, promote preserve curvature lattice-wise
        out = Curvature.CONSTANT
        for k in kids:
            out = out + k
        return out

    def _compute_sign(self):
        kids = [c.sign for c in self.children]
        if self.op == "negate":
            return kids[0].flipped()
        if self.op == "scale":
            if self.data == 0:
                return Sign.ZERO
            return kids[0] if self.data > 0 else kids[0].flipped()
        if self.op in ("multiply", "matmul"):
            arr = self.data[0] if self.op == "matmul" else self.data
            csign = sign_of_constant(arr)
            if csign is Sign.ZERO:
                return Sign.ZERO
            if csign is Sign.NONNEGATIVE:
                return kids[0]
            if csign is Sign.NONPOSITIVE:
                return kids[0].flipped()
            return Sign.UNKNOWN
        if self.op in ("add", "sum"):
            out = Sign.ZERO
            for k in kids:
                out = out + k
            return out
        if self.op == "hstack":
            out = Sign.ZERO
            for k in kids:
                out = out + k
            return out
        # gather, promote
        return kids[0]

    def __repr__(self):
        return f"AffineOp({self.op}, shape={self.shape.dims})"


class DcpAtom(ExprNode):
    def __init__(self, name, children, shape, data=None):
        super().__init__(children, shape)
        self.name = name
        self.data = data

    @property
    def descriptor(self) -> AtomDescriptor:
        return ATOMS[self.name]

    def _compute_curvature(self):
        d = self.descriptor
        kids = self.children
        if all(c.curvature.is_constant() for c in kids):
            return Curvature.CONSTANT
        if d.curvature is Curvature.UNKNOWN:
            return Curvature.UNKNOWN
        ok = True
        for i, c in enumerate(kids):
            kc = c.curvature
            if kc.is_affine():
                continue
            mono = d.monotonicity(i, c.sign) if d.monotonicity else NOT_MONOTONE
            want_cvx = (d.curvature is Curvature.CONVEX and mono == NONDECREASING) or \
                       (d.curvature is Curvature.CONCAVE and mono == NONINCREASING)
            want_ccv = (d.curvature is Curvature.CONVEX and mono == NONINCREASING) or \
                       (d.curvature is Curvature.CONCAVE and mono == NONDECREASING)
            if want_cvx and kc.is_convex():
                continue
            if want_ccv and kc.is_concave():
                continue
            ok = False
            break
        return d.curvature if ok else Curvature.UNKNOWN

    def _compute_sign(self):
        d = self.descriptor
        return d.sign_fn(self) if d.sign_fn else Sign.UNKNOWN

    def __repr__(self):
        return f"{self.name}({', '.join(map(repr, self.children))})"


class SaddleAtom(ExprNode):
    """Atom that is convex in one argument group and concave in the other.

    Has no DCP curvature while both sides are live; the saddle calculus in
    ``rules`` handles it.  ``attached_constraints`` are the domain
    constraints added at construction (e.g. ``G >= 0``).
    """

    def __init__(self, name, children, shape, data=None, attached=()):
        super().__init__(children, shape)
        self.name = name
        self.data = data
        self.attached_constraints = tuple(attached)

    @property
    def descriptor(self) -> AtomDescriptor:
        return ATOMS[self.name]

    def convex_args(self):
        return [self.children[i] for i in self.descriptor.convex_slots]

    def concave_args(self):
        return [self.children[i] for i in self.descriptor.concave_slots]

    def _compute_curvature(self):
        if all(c.curvature.is_constant() for c in self.children):
            return Curvature.CONSTANT
        raise TypeError(
            f"saddle atom {self.name!r} has no DCP curvature while both sides "
            "are live; fix one side or use the saddle calculus")

    def _compute_sign(self):
        d = self.descriptor
        return d.sign_fn(self) if d.sign_fn else Sign.UNKNOWN

    def __repr__(self):
        return f"{self.name}({', '.join(map(repr, self.children))})"


class SaddleExtremum(ExprNode):
    """Partial sup (direction 'max', convex) or inf ('min', concave) of a
    saddle expression over its local variables."""

    def __init__(self, body, local_vars, set_constraints, direction):
        super().__init__((body,), SCALAR)
        if direction not in ("max", "min"):
            raise ValueError("direction must be 'max' or 'min'")
        self.body = body
        self.local_vars = tuple(local_vars)
        self.set_constraints = tuple(set_constraints)
        self.direction = direction

    def _compute_curvature(self):
        return Curvature.CONVEX if self.direction == "max" else Curvature.CONCAVE

    def _compute_sign(self):
        return Sign.UNKNOWN

    def __repr__(self):
        return f"saddle_{self.direction}({self.body!r})"


# ---------------------------------------------------------------------------
# Constraints


class Constraint:
    """Relational constraint between two expressions ('<=' or '==')."""

    def __init__(self, op, lhs, rhs):
        if op not in ("<=", "=="):
            raise ValueError(f"unsupported relation {op!r}")
        lhs, rhs = as_expr(lhs), as_expr(rhs)
        if lhs.shape.dims != rhs.shape.dims:
            if lhs.shape.is_scalar():
                lhs = promote(lhs, rhs.shape)
            elif rhs.shape.is_scalar():
                rhs = promote(rhs, lhs.shape)
            else:
                raise ShapeError(
                    f"constraint sides have different shapes {lhs.shape.dims} "
                    f"vs {rhs.shape.dims}")
        self.op = op
        self.lhs = lhs
        self.rhs = rhs

    def residual(self):
        """Expression that must be <= 0 (or == 0) elementwise."""
        return self.lhs - self.rhs

    def is_dcp(self) -> bool:
        if self.op == "==":
            return self.lhs.curvature.is_affine() and self.rhs.curvature.is_affine()
        return self.lhs.curvature.is_convex() and self.rhs.curvature.is_concave()

    def variables(self):
        return variables_of(self.residual())

    def violation(self, env=None):
        r = np.atleast_1d(np.asarray(evaluate(self.residual(), env), dtype=float))
        return float(np.max(np.abs(r))) if self.op == "==" else float(np.max(r))

    def __bool__(self):
        raise TypeError(
            "constraints have no truth value; use them in a constraint list")

    def __repr__(self):
        return f"Constraint({self.lhs!r} {self.op} {self.rhs!r})"


# ---------------------------------------------------------------------------
# Affine constructors


def as_expr(obj) -> ExprNode:
    if isinstance(obj, ExprNode):
        return obj
    if isinstance(obj, (numbers.Number, np.ndarray, list, tuple)):
        return Constant(obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as an expression")


def _fold_scalar(node):
    """Fold into a Constant when every child is constant and the result is
    scalar; larger constants keep their structure."""
    if node.shape.is_scalar() and all(isinstance(c, Constant) for c in node.children):
        return Constant(evaluate(node, {}))
    return node


def add(*terms) -> ExprNode:
    terms = [as_expr(t) for t in terms]
    if len(terms) == 1:
        return terms[0]
    shapes = {t.shape.dims for t in terms if not t.shape.is_scalar()}
    if len(shapes) > 1:
        raise ShapeError(f"cannot add shapes {sorted(shapes)}")
    if shapes:
        target = Shape(shapes.pop())
        terms = [promote(t, target) if t.shape.is_scalar() else t for t in terms]
    else:
        target = SCALAR
    flat = []
    for t in terms:
        if isinstance(t, AffineOp) and t.op == "add":
            flat.extend(t.children)
        else:
            flat.append(t)
    return _fold_scalar(AffineOp("add", flat, target))


def negate(e) -> ExprNode:
    e = as_expr(e)
    return _fold_scalar(AffineOp("negate", [e], e.shape))


def scale(c, e) -> ExprNode:
    e = as_expr(e)
    c = float(c)
    return _fold_scalar(AffineOp("scale", [e], e.shape, data=c))


def multiply(const, e) -> ExprNode:
    """Elementwise multiplication by a constant (scalar broadcasts)."""
    e = as_expr(e)
    if isinstance(e, Constant) and not isinstance(const, ExprNode):
        return Constant(np.asarray(const, dtype=float) * e.value_array)
    if isinstance(const, ExprNode):
        if not isinstance(const, Constant):
            raise TypeError("multiply requires a constant factor")
        const = const.value_array
    arr = np.asarray(const, dtype=float)
    if arr.ndim == 0:
        return scale(arr, e)
    if e.shape.is_scalar():
        # constant vector/matrix times scalar expression
        flat = arr.flatten(order="F").reshape(-1, 1)
        out = AffineOp("matmul", [e], Shape(arr.shape), data=(flat, "left", arr.shape))
        return out
    if arr.shape != e.shape.dims:
        raise ShapeError(f"multiply shapes {arr.shape} vs {e.shape.dims}")
    return AffineOp("multiply", [e], e.shape, data=arr)


def matmul(e, const, const_side) -> ExprNode:
    e_ = as_expr(e)
    arr = np.asarray(const.value_array if isinstance(const, Constant) else const,
                     dtype=float)
    if arr.ndim == 0 or e_.shape.is_scalar():
        if arr.ndim == 0:
            return scale(arr, e_)
        return multiply(arr, e_)
    if arr.ndim == 1 and e_.shape.ndim == 1:
        # inner product with a constant vector
        if arr.shape[0] != e_.shape.dims[0]:
            raise ShapeError("dimension mismatch in inner product")
        return sum_entries(multiply(arr, e_))
    if const_side == "left":
        if arr.shape[-1] != e_.shape.dims[0]:
            raise ShapeError(f"matmul mismatch {arr.shape} @ {e_.shape.dims}")
        if e_.shape.ndim == 1:
            out_dims = (arr.shape[0],) if arr.ndim == 2 else ()
        else:
            out_dims = (arr.shape[0], e_.shape.dims[1]) if arr.ndim == 2 \
                else (e_.shape.dims[1],)
    else:
        if e_.shape.dims[-1] != arr.shape[0]:
            raise ShapeError(f"matmul mismatch {e_.shape.dims} @ {arr.shape}")
        if e_.shape.ndim == 1:
            out_dims = (arr.shape[1],) if arr.ndim == 2 else ()
        else:
            out_dims = (e_.shape.dims[0], arr.shape[1]) if arr.ndim == 2 else (e_.shape.dims[0],)
    return _fold_scalar(AffineOp("matmul", [e_], Shape.of(out_dims),
                                 data=(arr, const_side, out_dims)))


def _gather(e, positions, out_shape, label):
    return AffineOp("gather", [e], Shape.of(out_shape),
                    data=(np.asarray(positions, dtype=int), label))


def index(e, key) -> ExprNode:
    e = as_expr(e)
    probe = np.arange(e.size).reshape(e.shape.dims, order="F")
    sel = probe[key]
    return _gather(e, np.asarray(sel).flatten(order="F"), np.asarray(sel).shape, "index")


def reshape(e, new_shape) -> ExprNode:
    e = as_expr(e)
    new_shape = Shape.of(new_shape)
    if new_shape.size != e.size:
        raise ShapeError(f"cannot reshape size {e.size} to {new_shape.dims}")
    return _gather(e, np.arange(e.size), new_shape, "reshape")


def transpose(e) -> ExprNode:
    e = as_expr(e)
    if e.shape.ndim < 2:
        return e
    probe = np.arange(e.size).reshape(e.shape.dims, order="F")
    sel = probe.T
    return _gather(e, sel.flatten(order="F"), sel.shape, "transpose")


def sum_entries(e) -> ExprNode:
    e = as_expr(e)
    return _fold_scalar(AffineOp("sum", [e], SCALAR))


def hstack(parts) -> ExprNode:
    parts = [as_expr(p) for p in parts]
    for p in parts:
        if p.shape.ndim > 1:
            raise ShapeError("hstack takes scalars and vectors only")
    n = sum(p.size for p in parts)
    return AffineOp("hstack", parts, Shape((n,)))


def promote(e, shape) -> ExprNode:
    e = as_expr(e)
    shape = Shape.of(shape)
    if not e.shape.is_scalar():
        raise ShapeError("only scalars can be promoted")
    if shape.is_scalar():
        return e
    return AffineOp("promote", [e], shape)


def _expr_product(a, b, elementwise):
    """Product of two non-constant expressions.  Never disciplined: such a
    node exists so users can build e.g. a raw bilinear form and have the
    rule checker reject it with a diagnostic."""
    name = "multiply_expr" if elementwise else "matprod"
    if elementwise:
        if a.shape.dims != b.shape.dims and not (a.shape.is_scalar() or b.shape.is_scalar()):
            raise ShapeError("elementwise product shape mismatch")
        out = a.shape if not a.shape.is_scalar() else b.shape
    else:
        da, db = a.shape.dims, b.shape.dims
        if a.shape.ndim == 1 and b.shape.ndim == 1:
            if da[0] != db[0]:
                raise ShapeError("matprod dimension mismatch")
            out = SCALAR
        elif a.shape.ndim == 2 and b.shape.ndim == 1:
            if da[1] != db[0]:
                raise ShapeError("matprod dimension mismatch")
            out = Shape((da[0],))
        elif a.shape.ndim == 1 and b.shape.ndim == 2:
            if da[0] != db[0]:
                raise ShapeError("matprod dimension mismatch")
            out = Shape((db[1],))
        else:
            if da[1] != db[0]:
                raise ShapeError("matprod dimension mismatch")
            out = Shape((da[0], db[1]))
    return DcpAtom(name, [a, b], out)


# ---------------------------------------------------------------------------
# Analysis operations


def curvature_of(e) -> Curvature:
    """Tightest curvature derivable by the composition rule.

    Precondition: the tree contains no live saddle atoms (their curvature
    is a saddle-calculus question, handled in ``rules``).
    """
    return as_expr(e).curvature


def sign_of(e) -> Sign:
    return as_expr(e).sign


def variables_of(e) -> list:
    """Deduplicated, id-sorted list of all variables in the tree."""
    seen = {}

    def walk(node):
        if isinstance(node, Variable):
            seen.setdefault(node.id, node)
            return
        for c in node.children:
            walk(c)
        if isinstance(node, SaddleExtremum):
            for con in node.set_constraints:
                walk(con.lhs)
                walk(con.rhs)

    walk(as_expr(e))
    return [seen[i] for i in sorted(seen)]


def contains_saddle_atom(e) -> bool:
    """True when a live saddle atom appears outside any saddle extremum
    (extrema encapsulate their bodies)."""
    if isinstance(e, SaddleAtom):
        return True
    if isinstance(e, SaddleExtremum):
        return False
    return any(contains_saddle_atom(c) for c in e.children)


def attached_constraints_of(e) -> list:
    """All atom-attached domain constraints in the tree, each once."""
    out = []

    def walk(node):
        if isinstance(node, SaddleAtom):
            out.extend(node.attached_constraints)
        for c in node.children:
            walk(c)

    walk(as_expr(e))
    return out


# ---------------------------------------------------------------------------
# Numeric evaluation and substitution


def evaluate(e, env=None):
    """Evaluate the tree.  ``env`` maps variable ids to numeric arrays;
    ``None`` falls back to each variable's ``.value``."""
    e = as_expr(e)
    if isinstance(e, Constant):
        return e.value_array
    if isinstance(e, Variable):
        val = env.get(e.id) if env is not None else e.value
        if val is None:
            raise ValueError(f"variable {e.name} has no value")
        arr = np.asarray(val, dtype=float)
        if arr.shape != e.shape.dims:
            arr = arr.reshape(e.shape.dims)
        return arr
    if isinstance(e, SaddleExtremum):
        raise TypeError("saddle extremum values require a solve; see problems")
    kids = [evaluate(c, env) for c in e.children]
    if isinstance(e, (DcpAtom, SaddleAtom)):
        return ATOMS[e.name].eval_fn(kids, e.data)
    op = e.op
    if op == "add":
        return np.sum(kids, axis=0)
    if op == "negate":
        return -kids[0]
    if op == "scale":
        return e.data * kids[0]
    if op == "multiply":
        return e.data * kids[0]
    if op == "matmul":
        arr, side, out_dims = e.data
        child = np.atleast_1d(kids[0])
        res = arr @ child if side == "left" else child @ arr
        return np.asarray(res).reshape(out_dims, order="F")
    if op == "gather":
        positions, _ = e.data
        flat = np.asarray(kids[0]).flatten(order="F")
        return flat[positions].reshape(e.shape.dims, order="F")
    if op == "sum":
        return np.asarray(np.sum(kids[0]))
    if op == "hstack":
        return np.concatenate([np.atleast_1d(k).flatten(order="F") for k in kids])
    if op == "promote":
        return np.full(e.shape.dims, float(kids[0]))
    raise NotImplementedError(op)


def substitute(e, values):
    """Replace variables by constants, rewriting saddle atoms whose convex
    or concave side becomes fully constant into plain DCP expressions.

    ``values`` maps variable ids to arrays.  The result of fixing the
    concave side of a saddle atom has convex curvature (and dually), so the
    output is analyzable by ``curvature_of``.
    """
    e = as_expr(e)
    if isinstance(e, Variable):
        if e.id in values:
            return Constant(np.asarray(values[e.id], dtype=float).reshape(e.shape.dims))
        return e
    if isinstance(e, Constant):
        return e
    if isinstance(e, SaddleExtremum):
        body = substitute(e.body, values)
        return SaddleExtremum(body, e.local_vars, e.set_constraints, e.direction)
    kids = [substitute(c, values) for c in e.children]
    if all(isinstance(k, Constant) for k in kids) and not isinstance(e, SaddleAtom):
        clone = _rebuild(e, kids)
        return Constant(evaluate(clone, {}))
    if isinstance(e, SaddleAtom):
        d = e.descriptor
        ccv_const = all(isinstance(kids[i], Constant) for i in d.concave_slots)
        cvx_const = all(isinstance(kids[i], Constant) for i in d.convex_slots)
        if ccv_const and cvx_const:
            clone = _rebuild(e, kids)
            return Constant(evaluate(clone, {}))
        if ccv_const and d.fix_concave is not None:
            return d.fix_concave(e, kids)
        if cvx_const and d.fix_convex is not None:
            return d.fix_convex(e, kids)
    return _rebuild(e, kids)


def _rebuild(e, kids):
    if isinstance(e, AffineOp):
        return AffineOp(e.op, kids, e.shape, data=e.data)
    if isinstance(e, DcpAtom):
        return DcpAtom(e.name, kids, e.shape, data=e.data)
    if isinstance(e, SaddleAtom):
        return SaddleAtom(e.name, kids, e.shape, data=e.data,
                          attached=e.attached_constraints)
    raise NotImplementedError(type(e))
