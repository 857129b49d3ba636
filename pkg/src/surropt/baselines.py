"""Classical reference optimizers on analytic objectives.

Constraints are handled by a smooth quadratic exterior penalty, so the
penalized value equals the raw objective everywhere on the feasible set.
All stochastic methods take an integer seed and are bit-reproducible;
every returned point lies inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Solution
from .moo import pareto_indices
from .surrogate import _box_arrays


@dataclass
class PenalizedObjective:
    """f(x) + rho * (sum max(0, g)^2 + sum h^2)."""

    objective: object
    constraints: tuple = ()
    rho: float = 1e4

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        total = float(self.objective(x))
        for con in self.constraints:
            v = con.value(x)
            if con.kind == "ineq":
                v = max(0.0, v)
            total += self.rho * v * v
        return total

    def raw(self, x):
        return float(self.objective(np.asarray(x, dtype=float)))

    def violations(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([con.violation(x) for con in self.constraints])


def _finish(pf, x, feas_tol=1e-3, converged=True, seed=None):
    violations = pf.violations(x)
    return Solution(
        x=np.asarray(x, dtype=float), f_surrogate=None, f_true=pf.raw(x),
        violations=violations,
        feasible=bool(violations.size == 0 or violations.max() <= feas_tol),
        converged=converged, seed=seed)


def nelder_mead(pf, x0, *, box=None, max_iters=2000, x_tol=1e-10, f_tol=1e-12):
    """Downhill simplex with the standard 1 / 2 / 0.5 / 0.5 coefficients.

    Converges when the simplex diameter drops below x_tol or the function
    spread below f_tol; otherwise returns best-so-far with converged=False.
    Candidate points are clipped to the box when one is given.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    if box is not None:
        lo, hi = _box_arrays(box)
        clip = lambda p: np.clip(p, lo, hi)
        steps = 0.05 * (hi - lo)
    else:
        clip = lambda p: p
        steps = np.where(np.abs(x0) > 1e-12, 0.05 * np.abs(x0), 0.00025)

    simplex = [clip(x0.copy())]
    for i in range(dim):
        p = x0.copy()
        p[i] += steps[i]
        simplex.append(clip(p))
    simplex = np.array(simplex)
    fvals = np.array([pf(p) for p in simplex])

    alpha, gamma, beta, delta = 1.0, 2.0, 0.5, 0.5
    converged = False
    for _ in range(max_iters):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diameter = max(np.linalg.norm(simplex[i] - simplex[0])
                       for i in range(1, dim + 1))
        if diameter < x_tol or fvals[-1] - fvals[0] < f_tol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        reflected = clip(centroid + alpha * (centroid - simplex[-1]))
        f_r = pf(reflected)
        if f_r < fvals[0]:
            expanded = clip(centroid + gamma * (reflected - centroid))
            f_e = pf(expanded)
            if f_e < f_r:
                simplex[-1], fvals[-1] = expanded, f_e
            else:
                simplex[-1], fvals[-1] = reflected, f_r
        elif f_r < fvals[-2]:
            simplex[-1], fvals[-1] = reflected, f_r
        else:
            if f_r < fvals[-1]:
                contracted = clip(centroid + beta * (reflected - centroid))
            else:
                contracted = clip(centroid + beta * (simplex[-1] - centroid))
            f_c = pf(contracted)
            if f_c < min(f_r, fvals[-1]):
                simplex[-1], fvals[-1] = contracted, f_c
            else:
                for i in range(1, dim + 1):
                    simplex[i] = clip(simplex[0] + delta * (simplex[i] - simplex[0]))
                    fvals[i] = pf(simplex[i])
    best = int(np.argmin(fvals))
    return _finish(pf, simplex[best], converged=converged)


def differential_evolution(pf, box, *, pop_size=50, weight=0.8, crossover=0.9,
                           generations=200, seed=0):
    """DE/rand/1/bin with bound clipping; returns the best member found."""
    lo, hi = _box_arrays(box)
    dim = lo.size
    rng = np.random.default_rng(seed)
    pop = lo + rng.random((pop_size, dim)) * (hi - lo)
    fvals = np.array([pf(p) for p in pop])
    best_idx = int(np.argmin(fvals))
    best_x, best_f = pop[best_idx].copy(), fvals[best_idx]
    for _ in range(generations):
        for i in range(pop_size):
            choices = rng.choice(pop_size - 1, size=3, replace=False)
            choices[choices >= i] += 1
            r1, r2, r3 = pop[choices]
            mutant = np.clip(r1 + weight * (r2 - r3), lo, hi)
            mask = rng.random(dim) < crossover
            mask[rng.integers(dim)] = True
            trial = np.where(mask, mutant, pop[i])
            f_trial = pf(trial)
            if f_trial <= fvals[i]:
                pop[i], fvals[i] = trial, f_trial
                if f_trial < best_f:
                    best_x, best_f = trial.copy(), f_trial
    return _finish(pf, best_x, seed=seed)


def particle_swarm(pf, box, *, swarm_size=40, inertia=0.729,
                   cognitive=1.49445, social=1.49445, iterations=200, seed=0):
    """Constriction-coefficient PSO with velocity clamped at half the box width."""
    lo, hi = _box_arrays(box)
    dim = lo.size
    rng = np.random.default_rng(seed)
    width = hi - lo
    v_max = 0.5 * width
    pos = lo + rng.random((swarm_size, dim)) * width
    vel = (rng.random((swarm_size, dim)) - 0.5) * width * 0.1
    fvals = np.array([pf(p) for p in pos])
    pbest, pbest_f = pos.copy(), fvals.copy()
    g = int(np.argmin(fvals))
    gbest, gbest_f = pos[g].copy(), fvals[g]
    for _ in range(iterations):
        r1 = rng.random((swarm_size, dim))
        r2 = rng.random((swarm_size, dim))
        vel = (inertia * vel + cognitive * r1 * (pbest - pos)
               + social * r2 * (gbest - pos))
        vel = np.clip(vel, -v_max, v_max)
        pos = np.clip(pos + vel, lo, hi)
        fvals = np.array([pf(p) for p in pos])
        improved = fvals < pbest_f
        pbest[improved] = pos[improved]
        pbest_f[improved] = fvals[improved]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest, gbest_f = pbest[g].copy(), pbest_f[g]
    return _finish(pf, gbest, seed=seed)


@dataclass
class OracleFront:
    f: np.ndarray
    x: np.ndarray


def grid_pareto_oracle(objectives, constraints, box, resolution=400):
    """Brute-force ground-truth Pareto front on a dense lattice.

    Both objectives are evaluated at every lattice point, infeasible
    points (any g > 0 or h != 0) are discarded, and the strict dominance
    filter keeps the front. Resolution is per dimension and must be >= 100.
    """
    if resolution < 100:
        raise ValueError("oracle resolution must be at least 100 per dimension")
    lo, hi = _box_arrays(box)
    dim = lo.size
    axes = [np.linspace(lo[i], hi[i], resolution) for i in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    feasible = np.ones(grid.shape[0], dtype=bool)
    for con in constraints:
        vals = np.asarray(con.fn(grid), dtype=float)
        feasible &= (vals <= 0.0) if con.kind == "ineq" else (vals == 0.0)
    if not feasible.any():
        raise ValueError("no feasible lattice point for the oracle")
    pts = grid[feasible]
    f = np.stack([np.asarray(obj(pts), dtype=float) for obj in objectives], axis=-1)
    idx = pareto_indices(f)
    return OracleFront(f=f[idx], x=pts[idx])
