"""Registry of analytic benchmark problems.

Objectives and constraint expressions are vectorized over a trailing
coordinate axis: they accept arrays of shape (dim,) or (N, dim) and
return a scalar or (N,). Gradient callables take a single point.

Problems can also be defined declaratively in a JSON file (see
`load_problem_file`): box bounds plus expression strings over x1..xn
built from + - * / ^ sin cos and parentheses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Constraint


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    dim: int
    objectives: tuple
    objective_grads: tuple
    constraints: tuple
    box: tuple
    reference: dict | None = None

    def eval_objective(self, i, x):
        return float(self.objectives[i](np.asarray(x, dtype=float)))

    def eval_constraints(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([c.value(x) for c in self.constraints])

    def feasible(self, x, tol=1e-3):
        x = np.asarray(x, dtype=float)
        for c in self.constraints:
            if c.violation(x) > tol:
                return False
        for i, (lo, hi) in enumerate(self.box):
            if x[i] < lo - tol or x[i] > hi + tol:
                return False
        return True


def _p1_objective_corrected(x):
    return ((x[..., 0] - 10.0) ** 3 + (x[..., 1] - 20.0) ** 3) / 1000.0


def _p1_grad_corrected(x):
    return np.array([3.0 * (x[0] - 10.0) ** 2 / 1000.0,
                     3.0 * (x[1] - 20.0) ** 2 / 1000.0])


def _p1_objective_literal(x):
    return ((x[..., 0] - 10.0) ** 3 + (x[..., 1] - 10.0) ** 3) / 1000.0


def _p1_grad_literal(x):
    return np.array([3.0 * (x[0] - 10.0) ** 2 / 1000.0,
                     3.0 * (x[1] - 10.0) ** 2 / 1000.0])


_P1_CONSTRAINTS = (
    Constraint("ineq",
               lambda x: -(x[..., 0] - 5.0) ** 2 - (x[..., 1] - 5.0) ** 2 + 100.0,
               lambda x: np.array([-2.0 * (x[0] - 5.0), -2.0 * (x[1] - 5.0)]),
               name="ring_outer"),
    Constraint("ineq",
               lambda x: (x[..., 0] - 6.0) ** 2 - (x[..., 1] - 5.0) ** 2 - 100.0,
               lambda x: np.array([2.0 * (x[0] - 6.0), -2.0 * (x[1] - 5.0)]),
               name="hyperbola"),
)
_P1_BOX = ((13.0, 20.0), (0.0, 20.0))


def _p2_objective(x):
    x1, x2 = x[..., 0], x[..., 1]
    s = x1 + x2
    return -10.0 * np.cos(x1 * x2) + x1 * x2 / 10.0 + 10.0 * s * np.sin(s)


def _p2_grad(x):
    x1, x2 = x[0], x[1]
    s = x1 + x2
    common = 10.0 * np.sin(s) + 10.0 * s * np.cos(s)
    return np.array([10.0 * np.sin(x1 * x2) * x2 + x2 / 10.0 + common,
                     10.0 * np.sin(x1 * x2) * x1 + x1 / 10.0 + common])


_P2_CONSTRAINTS = (
    Constraint("ineq", lambda x: 0.5 - x[..., 0] + x[..., 1],
               lambda x: np.array([-1.0, 1.0]), name="gap"),
    Constraint("ineq", lambda x: x[..., 0] * x[..., 1] - 15.0,
               lambda x: np.array([x[1], x[0]]), name="product_cap"),
)
_P2_BOX = ((0.0, 1.5), (-1.0, 1.0))


def _p3_objective(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.sin(2.0 * x1) ** 3 * np.sin(2.0 * x2) / (x1 ** 3 * (x1 + x2))


def _p3_grad(x):
    x1, x2 = x[0], x[1]
    num = np.sin(2 * x1) ** 3 * np.sin(2 * x2)
    den = x1 ** 3 * (x1 + x2)
    dnum_1 = 6.0 * np.sin(2 * x1) ** 2 * np.cos(2 * x1) * np.sin(2 * x2)
    dnum_2 = 2.0 * np.sin(2 * x1) ** 3 * np.cos(2 * x2)
    dden_1 = x1 ** 2 * (4.0 * x1 + 3.0 * x2)
    dden_2 = x1 ** 3
    return np.array([(dnum_1 * den - num * dden_1) / den ** 2,
                     (dnum_2 * den - num * dden_2) / den ** 2])


_P3_CONSTRAINTS = (
    Constraint("ineq", lambda x: x[..., 0] ** 2 - x[..., 1] + 1.0,
               lambda x: np.array([2.0 * x[0], -1.0]), name="parabola_low"),
    Constraint("ineq", lambda x: (x[..., 0] - 2.0) ** 2 - x[..., 1] + 1.0,
               lambda x: np.array([2.0 * (x[0] - 2.0), -1.0]), name="parabola_high"),
)
_P3_BOX = ((0.1, 1.0), (0.1, 7.0))


def _moo_f1(x):
    return (x[..., 0] - 3.0) ** 2 + (x[..., 1] - 7.0) ** 2


def _moo_f1_grad(x):
    return np.array([2.0 * (x[0] - 3.0), 2.0 * (x[1] - 7.0)])


def _moo_f2(x):
    return (x[..., 0] - 9.0) ** 2 + (x[..., 1] - 8.0) ** 2


def _moo_f2_grad(x):
    return np.array([2.0 * (x[0] - 9.0), 2.0 * (x[1] - 8.0)])


_MOO_CONSTRAINTS = (
    Constraint("ineq", lambda x: 70.0 - 4.0 * x[..., 1] - 8.0 * x[..., 0],
               lambda x: np.array([-8.0, -4.0]), name="supply"),
    Constraint("ineq", lambda x: -2.5 * x[..., 1] + 3.0 * x[..., 0],
               lambda x: np.array([3.0, -2.5]), name="ratio"),
    Constraint("ineq", lambda x: x[..., 0] - 6.8,
               lambda x: np.array([1.0, 0.0]), name="x1_cap"),
)
_MOO_BOX = ((0.0, 10.0), (5.0, 15.0))

_SYN_TARGET = np.array([0.5, -0.5, 0.5, -0.5, 0.5, -0.5])
_SYN_BOX = tuple((-2.0, 2.0) for _ in range(6))


def _syn6_objective(x):
    total = 0.0
    for i in range(5):
        xi, xj = x[..., i], x[..., i + 1]
        total = total + np.sin(xi * xj) + ((xi - _SYN_TARGET[i]) ** 2
                                           + (xj - _SYN_TARGET[i + 1]) ** 2) / 8.0
    return total


def _syn6_grad(x):
    g = np.zeros(6)
    for i in range(5):
        xi, xj = x[i], x[i + 1]
        cos_term = np.cos(xi * xj)
        g[i] += cos_term * xj + (xi - _SYN_TARGET[i]) / 4.0
        g[i + 1] += cos_term * xi + (xj - _SYN_TARGET[i + 1]) / 4.0
    return g


_REGISTRY = {
    "problem1": ProblemSpec(
        name="problem1", dim=2,
        objectives=(_p1_objective_corrected,),
        objective_grads=(_p1_grad_corrected,),
        constraints=_P1_CONSTRAINTS, box=_P1_BOX,
        reference={"x": (13.660, 0.000), "f": -7.950,
                   "source": "benchmark reference table"}),
    "problem1-literal": ProblemSpec(
        name="problem1-literal", dim=2,
        objectives=(_p1_objective_literal,),
        objective_grads=(_p1_grad_literal,),
        constraints=_P1_CONSTRAINTS, box=_P1_BOX,
        reference=None),
    "problem2": ProblemSpec(
        name="problem2", dim=2,
        objectives=(_p2_objective,), objective_grads=(_p2_grad,),
        constraints=_P2_CONSTRAINTS, box=_P2_BOX,
        reference={"x": (0.257, -0.243), "f": -9.984,
                   "source": "benchmark reference table"}),
    "problem3": ProblemSpec(
        name="problem3", dim=2,
        objectives=(_p3_objective,), objective_grads=(_p3_grad,),
        constraints=_P3_CONSTRAINTS, box=_P3_BOX,
        reference={"x": (0.100, 5.464), "f": -1.406,
                   "source": "benchmark reference table"}),
    "moo1": ProblemSpec(
        name="moo1", dim=2,
        objectives=(_moo_f1, _moo_f2),
        objective_grads=(_moo_f1_grad, _moo_f2_grad),
        constraints=_MOO_CONSTRAINTS, box=_MOO_BOX,
        reference={"x": (6.784, 8.309), "f": None, "objective_index": 1,
                   "source": "benchmark reference table"}),
    "discussion": ProblemSpec(
        name="discussion", dim=2,
        objectives=(_p3_objective,), objective_grads=(_p3_grad,),
        constraints=(), box=_P3_BOX,
        reference=None),
    "synthetic6d": ProblemSpec(
        name="synthetic6d", dim=6,
        objectives=(_syn6_objective,), objective_grads=(_syn6_grad,),
        constraints=(), box=_SYN_BOX,
        reference=None),
}


def list_problems():
    return sorted(_REGISTRY)


def get_problem(name: str) -> ProblemSpec:
    key = name.strip().lower().replace("_", "-") if "-" in name else name.strip().lower()
    key = key if key in _REGISTRY else name.strip().lower()
    if key not in _REGISTRY:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(list_problems())}")
    return _REGISTRY[key]


_ALLOWED_FUNCTIONS = ("sin", "cos")


def _parse_expression(text: str, dim: int):
    """Compile an expression over x1..xn into (vectorized fn, gradient fn)."""
    import sympy
    from sympy.parsing.sympy_parser import (parse_expr, standard_transformations,
                                            convert_xor)

    symbols = sympy.symbols(f"x1:{dim + 1}")
    local = {f"x{i + 1}": symbols[i] for i in range(dim)}
    local.update({"sin": sympy.sin, "cos": sympy.cos})
    expr = parse_expr(text, transformations=standard_transformations + (convert_xor,),
                      local_dict=local)
    extra = expr.free_symbols - set(symbols)
    if extra:
        raise ValueError(f"unknown symbols in expression {text!r}: "
                         f"{sorted(str(s) for s in extra)}")
    for f in expr.atoms(sympy.Function):
        if f.func not in (sympy.sin, sympy.cos):
            raise ValueError(f"unsupported function {f.func} in expression {text!r}; "
                             f"allowed: {', '.join(_ALLOWED_FUNCTIONS)}")
    value = sympy.lambdify(symbols, expr, modules="numpy")
    partials = [sympy.lambdify(symbols, sympy.diff(expr, s), modules="numpy")
                for s in symbols]

    def fn(x, _value=value, _dim=dim):
        x = np.asarray(x, dtype=float)
        coords = [x[..., i] for i in range(_dim)]
        out = np.asarray(_value(*coords), dtype=float)
        if out.shape != x.shape[:-1]:
            out = np.broadcast_to(out, x.shape[:-1]).astype(float)
        return out if out.ndim else float(out)

    def grad(x, _partials=partials, _dim=dim):
        x = np.asarray(x, dtype=float)
        return np.array([float(p(*x)) for p in _partials])

    return fn, grad


def load_problem_file(path) -> ProblemSpec:
    """Build a ProblemSpec from a declarative JSON definition.

    Expected keys: name, box (list of [lo, hi]), objectives (list of
    expression strings), constraints (optional list of {kind, expr} with
    kind "ineq" meaning expr <= 0 and "eq" meaning expr = 0).
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    box = tuple((float(lo), float(hi)) for lo, hi in doc["box"])
    dim = len(box)
    objectives, grads = [], []
    for text in doc["objectives"]:
        fn, grad = _parse_expression(text, dim)
        objectives.append(fn)
        grads.append(grad)
    constraints = []
    for rec in doc.get("constraints", []):
        kind = rec["kind"]
        fn, grad = _parse_expression(rec["expr"], dim)
        constraints.append(Constraint(kind, fn, grad, name=rec.get("name", rec["expr"])))
    return ProblemSpec(name=doc.get("name", "custom"), dim=dim,
                       objectives=tuple(objectives), objective_grads=tuple(grads),
                       constraints=tuple(constraints), box=box,
                       reference=doc.get("reference"))
