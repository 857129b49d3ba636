"""Bounded-objective (epsilon-constraint) multiobjective optimization.

The primary surrogate is minimized while each remaining surrogate becomes
a penalty neuron bounding it from above; sweeping that upper bound traces
the Pareto front. Dominance filtering is strict: a point survives unless
some other point is <= in every objective and < in at least one.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import engine

BOUND_SLACK = 1e-3


@dataclass
class MooProblem:
    """Multiple surrogates over a shared input space, plus raw constraints."""

    surrogates: list
    constraints: tuple
    box: tuple
    primary: int = 0
    true_objectives: tuple | None = None
    name: str = ""

    def __post_init__(self):
        dims = {m.input_dim for m in self.surrogates}
        if len(dims) != 1:
            raise ValueError("all surrogates must share the input dimension")
        if not 0 <= self.primary < len(self.surrogates):
            raise ValueError("primary index out of range")


@dataclass
class ParetoPoint:
    x: np.ndarray
    f_true: tuple | None
    f_surrogate: tuple
    u_bound: float
    feasible: bool


def solve_bounded(p: MooProblem, u_bounds, cfg, starts=None):
    """Minimize the primary surrogate with the others bounded above by U.

    Lower bounds are deliberately omitted. Returns the best Solution of a
    multi-restart descent in which each non-primary surrogate contributes
    one penalty neuron computing surrogate_i(x) - U_i.
    """
    others = [i for i in range(len(p.surrogates)) if i != p.primary]
    u_bounds = list(np.atleast_1d(np.asarray(u_bounds, dtype=float)))
    if len(u_bounds) != len(others):
        raise ValueError(f"need {len(others)} bounds, got {len(u_bounds)}")
    model = p.surrogates[p.primary]
    bound_models = [(p.surrogates[i], u) for i, u in zip(others, u_bounds)]
    true_fns = ()
    if p.true_objectives is not None:
        true_fns = (p.true_objectives[p.primary],)
    duck = SimpleNamespace(box=p.box, constraints=p.constraints,
                           objectives=true_fns, name=p.name)
    result = engine.optimize(duck, model, p.constraints, cfg,
                             bound_models=bound_models)
    return result.best


def sweep_pareto(p: MooProblem, n_sweep, cfg):
    """Trace the two-objective front by sweeping the secondary upper bound.

    First the secondary objective is optimized alone under the original
    constraints, giving X2*. The sweep runs over n_sweep evenly spaced
    bounds between the secondary and primary surrogate values at X2*
    (both self-computed). Returns (front, attempts): `attempts` holds one
    ParetoPoint per bound, `front` the feasible non-dominated subset.
    """
    if len(p.surrogates) != 2:
        raise ValueError("the sweep driver handles exactly two objectives")
    if n_sweep < 1:
        raise ValueError("n_sweep must be at least 1")
    secondary = 1 - p.primary
    sec_true = ()
    if p.true_objectives is not None:
        sec_true = (p.true_objectives[secondary],)
    duck = SimpleNamespace(box=p.box, constraints=p.constraints,
                           objectives=sec_true, name=p.name)
    res2 = engine.optimize(duck, p.surrogates[secondary], p.constraints, cfg)
    x2_star = res2.best.x
    u_lo = p.surrogates[secondary].eval(x2_star)
    u_hi = p.surrogates[p.primary].eval(x2_star)
    if u_hi < u_lo:
        u_hi = u_lo
    bounds = np.linspace(u_lo, u_hi, n_sweep) if n_sweep > 1 else np.array([u_lo])

    attempts = []
    for u in bounds:
        sol = solve_bounded(p, [u], cfg)
        f_surr = tuple(m.eval(sol.x) for m in p.surrogates)
        f_true = None
        if p.true_objectives is not None:
            f_true = tuple(float(f(sol.x)) for f in p.true_objectives)
        within_bound = f_surr[secondary] <= u + BOUND_SLACK
        attempts.append(ParetoPoint(
            x=sol.x, f_true=f_true, f_surrogate=f_surr, u_bound=float(u),
            feasible=bool(sol.feasible and within_bound)))

    kept = [pt for pt in attempts if pt.feasible]
    vectors = [pt.f_true if pt.f_true is not None else pt.f_surrogate for pt in kept]
    front = [kept[i] for i in pareto_indices(np.asarray(vectors, dtype=float))] \
        if kept else []
    return front, attempts


def pareto_indices(points):
    """Indices of the strictly non-dominated rows, in stable input order.

    Exact duplicates keep only their first occurrence. Uses a sort-scan
    for two objectives and pairwise checks otherwise.
    """
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return []
    if points.ndim != 2:
        raise ValueError("expected a 2-D array of objective vectors")
    n, m = points.shape
    if m == 2 and n > 64:
        idx = np.arange(n)
        order = np.lexsort((idx, points[:, 1], points[:, 0]))
        keep = []
        best_f1 = np.inf
        for i in order:
            if points[i, 1] < best_f1:
                keep.append(i)
                best_f1 = points[i, 1]
        return sorted(keep)
    # Pairwise path (small sets / general M): dominated or duplicate rows drop.
    keep = []
    for i in range(n):
        row = points[i]
        if any(np.array_equal(points[k], row) for k in keep):
            continue
        others = np.delete(points, i, axis=0)
        dominated = np.any(np.all(others <= row, axis=1)
                           & np.any(others < row, axis=1))
        if not dominated:
            keep.append(i)
    return keep


def pareto_filter(points):
    """Return the non-dominated subset of a list of objective vectors."""
    pts = list(points)
    if not pts:
        return []
    idx = pareto_indices(np.asarray(pts, dtype=float))
    return [pts[i] for i in idx]
