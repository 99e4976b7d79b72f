"""Declarative problem files.

A problem file is a JSON document with sections:

    variables    [{"name": "x", "shape": [2], "attrs": ["nonneg"]}, ...]
    expressions  {"f": ["inner", "x", ["matvec", [[1,2],[3,1]], "y"]], ...}
    objective    {"minimize_maximize": "f"}  or {"minimize": <expr>} or
                 {"maximize": <expr>}
    constraints  [["<=", <expr>, <expr>], ["==", ...], [">=", ...]]
    roles        {"convex": ["x"], "concave": ["y"]}          (optional)
    solver       {"backend": null, "tol": 1e-6, "eps": null}  (optional)

Expressions are prefix-style nested arrays: a list whose first element is a
string applies that operator; a list of numbers is an array constant;
strings name variables or previously defined expressions; numbers are
scalar constants.  Syntax errors carry line/column, semantic errors a JSON
path.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import atoms as at
from . import expressions as ex
from . import saddle_atoms as sa
from .errors import DspError, ParseError
from .problems import (
    Maximize, Minimize, MinimizeMaximize, Problem, SaddlePointProblem,
    saddle_max, saddle_min,
)


@dataclass
class ParsedProblem:
    kind: str  # 'saddle_point', 'min', or 'max'
    problem: object
    variables: dict
    solver: dict = field(default_factory=dict)


def load_problem_file(path) -> ParsedProblem:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, f"{path}:line {err.lineno}:col {err.colno}") \
            from None
    return parse_problem(doc, source=str(path))


_UNARY_ATOMS = {
    "square": at.square, "abs": at.abs, "pos": at.pos, "exp": at.exp,
    "log": at.log, "sqrt": at.sqrt, "norm1": at.norm1, "norm2": at.norm2,
    "norm_inf": at.norm_inf, "sum_squares": at.sum_squares,
    "log_sum_exp": at.log_sum_exp, "geo_mean": at.geo_mean, "sum": at.sum,
}
_NARY_ATOMS = {"maximum": at.maximum, "minimum": at.minimum}
_SADDLE_BINARY = {
    "inner": sa.inner, "saddle_inner": sa.saddle_inner,
    "weighted_norm2": sa.weighted_norm2,
    "weighted_log_sum_exp": sa.weighted_log_sum_exp,
    "saddle_quad_form": sa.saddle_quad_form,
}
_RELATIONS = ("<=", ">=", "==")


class _Parser:
    def __init__(self, doc, source):
        if not isinstance(doc, dict):
            raise ParseError("problem file must be a JSON object", source)
        self.doc = doc
        self.source = source
        self.variables = {}
        self.expressions = {}

    def fail(self, path, message):
        raise ParseError(message, f"{self.source}:{path}")

    def run(self) -> ParsedProblem:
        self.parse_variables()
        for name, body in (self.doc.get("expressions") or {}).items():
            if name in self.variables:
                self.fail(f"expressions.{name}", "name collides with a variable")
            self.expressions[name] = self.expr(body, f"expressions.{name}")
        objective, kind = self.parse_objective()
        constraints = [self.constraint(c, f"constraints[{i}]")
                       for i, c in enumerate(self.doc.get("constraints") or [])]
        solver = dict(self.doc.get("solver") or {})
        if kind == "saddle_point":
            roles = self.doc.get("roles") or {}
            cvx = [self.lookup_var(n, "roles.convex") for n in roles.get("convex", [])]
            ccv = [self.lookup_var(n, "roles.concave") for n in roles.get("concave", [])]
            prob = SaddlePointProblem(MinimizeMaximize(objective), constraints,
                                      cvx_vars=cvx, ccv_vars=ccv)
        else:
            sense = Minimize if kind == "min" else Maximize
            prob = Problem(sense(objective), constraints)
        return ParsedProblem(kind=kind, problem=prob, variables=self.variables,
                             solver=solver)

    def parse_variables(self):
        decls = self.doc.get("variables")
        if not decls:
            self.fail("variables", "at least one variable must be declared")
        for i, decl in enumerate(decls):
            path = f"variables[{i}]"
            if not isinstance(decl, dict) or "name" not in decl:
                self.fail(path, "variable declarations are objects with a 'name'")
            name = decl["name"]
            if name in self.variables:
                self.fail(path, f"duplicate variable name {name!r}")
            shape = tuple(decl.get("shape", []))
            attrs = set(decl.get("attrs", []))
            bad = attrs - {"nonneg", "psd", "symmetric", "local"}
            if bad:
                self.fail(path, f"unknown attrs {sorted(bad)}")
            try:
                self.variables[name] = ex.Variable(
                    shape, name=name, nonneg="nonneg" in attrs,
                    psd="psd" in attrs, symmetric="symmetric" in attrs,
                    local="local" in attrs)
            except Exception as err:
                self.fail(path, str(err))

    def parse_objective(self):
        obj = self.doc.get("objective")
        if not isinstance(obj, dict) or len(obj) != 1:
            self.fail("objective", "objective must be an object with exactly "
                      "one of minimize_maximize/minimize/maximize")
        key, body = next(iter(obj.items()))
        kinds = {"minimize_maximize": "saddle_point", "minimize": "min",
                 "maximize": "max"}
        if key not in kinds:
            self.fail("objective", f"unknown objective kind {key!r}")
        return self.expr(body, f"objective.{key}"), kinds[key]

    def lookup_var(self, name, path):
        if name not in self.variables:
            self.fail(path, f"unknown variable {name!r}")
        return self.variables[name]

    def constraint(self, spec, path):
        if not (isinstance(spec, list) and len(spec) == 3 and
                spec[0] in _RELATIONS):
            self.fail(path, "constraints are [op, lhs, rhs] with op one of "
                      "<=, >=, ==")
        lhs = self.expr(spec[1], f"{path}[1]")
        rhs = self.expr(spec[2], f"{path}[2]")
        try:
            if spec[0] == ">=":
                return ex.Constraint("<=", rhs, lhs)
            return ex.Constraint(spec[0], lhs, rhs)
        except Exception as err:
            self.fail(path, str(err))

    def _array(self, body, path):
        try:
            arr = np.asarray(body, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a numeric array")
        return arr

    def expr(self, body, path):
        if isinstance(body, bool):
            self.fail(path, "booleans are not expressions")
        if isinstance(body, (int, float)):
            return ex.Constant(float(body))
        if isinstance(body, str):
            if body in self.variables:
                return self.variables[body]
            if body in self.expressions:
                return self.expressions[body]
            self.fail(path, f"unknown name {body!r}")
        if not isinstance(body, list) or not body:
            self.fail(path, "expressions are numbers, names, or arrays")
        if not isinstance(body[0], str):
            return ex.Constant(self._array(body, path))
        op, args = body[0], body[1:]
        try:
            return self.apply(op, args, path)
        except (ParseError, DspError):
            raise  # compliance failures keep their diagnostics
        except Exception as err:
            self.fail(path, f"{op}: {err}")

    def apply(self, op, args, path):
        sub = lambda i: self.expr(args[i], f"{path}[{i + 1}]")  # noqa: E731
        if op in _UNARY_ATOMS:
            self._arity(op, args, 1, path)
            return _UNARY_ATOMS[op](sub(0))
        if op in _NARY_ATOMS:
            return _NARY_ATOMS[op](*[sub(i) for i in range(len(args))])
        if op == "add":
            return ex.add(*[sub(i) for i in range(len(args))])
        if op == "sub":
            self._arity(op, args, 2, path)
            return sub(0) - sub(1)
        if op == "neg":
            self._arity(op, args, 1, path)
            return -sub(0)
        if op == "scale":
            self._arity(op, args, 2, path)
            return ex.scale(float(args[0]), sub(1))
        if op == "multiply":
            self._arity(op, args, 2, path)
            return ex.multiply(self._array(args[0], f"{path}[1]"), sub(1))
        if op in ("matvec", "matmul"):
            self._arity(op, args, 2, path)
            return ex.matmul(sub(1), ex.Constant(self._array(args[0], f"{path}[1]")),
                             const_side="left")
        if op == "matprod":  # product of two expressions (not disciplined)
            self._arity(op, args, 2, path)
            return sub(0) @ sub(1)
        if op == "mul":
            self._arity(op, args, 2, path)
            return sub(0) * sub(1)
        if op == "index":
            self._arity(op, args, 2, path)
            return ex.index(sub(0), int(args[1]))
        if op == "slice":
            self._arity(op, args, 3, path)
            return ex.index(sub(0), slice(int(args[1]), int(args[2])))
        if op == "hstack":
            return ex.hstack([sub(i) for i in range(len(args))])
        if op in _SADDLE_BINARY:
            self._arity(op, args, 2, path)
            return _SADDLE_BINARY[op](sub(0), sub(1))
        if op == "quasidef_quad_form":
            self._arity(op, args, 5, path)
            return sa.quasidef_quad_form(
                sub(0), sub(1), self._array(args[2], f"{path}[3]"),
                self._array(args[3], f"{path}[4]"),
                self._array(args[4], f"{path}[5]"))
        if op in ("saddle_max", "saddle_min"):
            self._arity(op, args, 2, path)
            body = sub(0)
            if not isinstance(args[1], list):
                self.fail(f"{path}[2]", "expected a list of constraints")
            cons = [self.constraint(c, f"{path}[2][{i}]")
                    for i, c in enumerate(args[1])]
            return (saddle_max if op == "saddle_max" else saddle_min)(body, cons)
        self.fail(path, f"unknown operator {op!r}")

    def _arity(self, op, args, n, path):
        if len(args) != n:
            self.fail(path, f"{op} takes {n} argument(s), got {len(args)}")


def parse_problem(doc, source="<memory>") -> ParsedProblem:
    return _Parser(doc, source).run()
