"""Penalized gradient descent on the inputs of a frozen surrogate.

The optimizer graph is an ordinary network: a trainable diagonal
starting-point layer feeds both the frozen surrogate branch and one
penalty-activation neuron per constraint; the final fixed layer sums all
branches into the scalar training loss. Descending that loss with a
single-sample dataset moves the starting-point layer's weights and
biases, and the candidate solution is read off as the layer's output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .net import (Activation, AdamUpdater, BranchLayer, DenseLayer, FuncBranch,
                  NetBranch, Network, SgdUpdater, make_updater, TrainConfig)
from .surrogate import generate_grid

FEASIBILITY_TOL = 1e-3


class DivergenceError(RuntimeError):
    """Descent loss became non-finite; carries the last finite candidate."""

    def __init__(self, message, last_x):
        super().__init__(message)
        self.last_x = np.asarray(last_x, dtype=float)


class NoFeasibleStart(RuntimeError):
    pass


@dataclass(frozen=True)
class Constraint:
    """One scalar constraint on raw inputs: g(x) <= 0 or h(x) = 0.

    ``fn`` must be vectorized over a trailing coordinate axis (accepts
    (dim,) or (N, dim)); ``grad`` maps a point to the gradient vector and
    falls back to central differences when omitted.
    """

    kind: str
    fn: object
    grad: object = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("ineq", "eq"):
            raise ValueError(f"constraint kind must be 'ineq' or 'eq', got {self.kind!r}")

    def value(self, x):
        return float(self.fn(np.asarray(x, dtype=float)))

    def violation(self, x):
        v = self.value(x)
        if self.kind == "ineq":
            return max(0.0, v)
        return abs(v)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        g = np.empty_like(x)
        for i in range(x.size):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (self.fn(xp) - self.fn(xm)) / (2 * h)
        return g


def box_to_constraints(box):
    """Two inequality constraints per dimension: lo - x_i <= 0, x_i - hi <= 0."""
    cons = []
    for i, (lo, hi) in enumerate(box):
        cons.append(Constraint(
            "ineq", lambda x, i=i, lo=lo: lo - x[..., i],
            lambda x, i=i: -_unit(len(x), i), name=f"x{i + 1}>={lo}"))
        cons.append(Constraint(
            "ineq", lambda x, i=i, hi=hi: x[..., i] - hi,
            lambda x, i=i: _unit(len(x), i), name=f"x{i + 1}<={hi}"))
    return cons


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


@dataclass(frozen=True)
class DescentConfig:
    """Hyperparameters for the input-descent optimizer.

    The defaults (5 starting points, penalty 10, 2000 epochs, minibatch 1
    implied by the single-sample dataset, learning rate 0.01) are the
    benchmark settings used throughout the test problems.
    """

    n_starts: int = 5
    penalty: float = 10.0
    epochs: int = 2000
    learning_rate: float = 0.01
    grid_n: int = 10000
    weight_init: str = "random"
    seed: int = 0
    optimizer: str = "adam"
    feasibility_tol: float = FEASIBILITY_TOL

    def __post_init__(self):
        if self.weight_init not in ("unit", "random"):
            raise ValueError(f"weight_init must be 'unit' or 'random', got {self.weight_init!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class Solution:
    """One optimization outcome in raw variable space."""

    x: np.ndarray
    f_surrogate: float | None
    f_true: float | None
    violations: np.ndarray
    feasible: bool
    restart_index: int = 0
    seed: int | None = None
    epochs_run: int = 0
    converged: bool = True
    loss_history: list = field(default_factory=list, repr=False)

    @property
    def max_violation(self):
        return float(np.max(self.violations)) if self.violations.size else 0.0


@dataclass
class OptimizeResult:
    best: Solution
    solutions: list
    minima: list
    errors: list = field(default_factory=list)


def build_descent_net(model, constraints, c, box=None, bound_models=()):
    """Assemble the optimizer graph around a frozen surrogate.

    Output = surrogate(x) + sum of penalty neurons, where x is the output
    of a trainable diagonal starting-point layer. Constraint neurons
    compute the raw constraint expressions; ``bound_models`` adds one
    penalty_ineq neuron per (surrogate, upper_bound) pair whose
    pre-activation is that surrogate's output minus the bound. Only the
    starting-point layer's diagonal weights and biases are trainable.
    """
    base = model.as_raw_network()
    dim = base.input_dim
    start = DenseLayer(np.eye(dim), np.zeros(dim), Activation("linear"),
                       diagonal=True)
    branches = [NetBranch(base, 0.0, Activation("linear"))]
    cons = list(constraints)
    if box is not None:
        cons += box_to_constraints(box)
    for con in cons:
        kind = "penalty_ineq" if con.kind == "ineq" else "penalty_eq"
        branches.append(FuncBranch(con.fn, con.gradient, Activation(kind, c),
                                   name=con.name))
    for other, bound in bound_models:
        branches.append(NetBranch(other.as_raw_network(), -float(bound),
                                  Activation("penalty_ineq", c)))
    total = DenseLayer(np.ones((1, len(branches))), np.zeros(1),
                       Activation("linear"), w_trainable=False, b_trainable=False)
    return Network([start, BranchLayer(branches, dim), total])


def surrogate_branch_value(net, x):
    """Surrogate-branch output of a descent graph at raw x (penalties excluded)."""
    x = np.asarray(x, dtype=float)
    branch = net.layers[1].branches[0]
    return float(branch.net.forward(x)[0])


def select_starting_points(problem, model, cfg: DescentConfig, constraints=None):
    """Pick the k feasible lattice points with smallest surrogate values.

    The lattice covers the box; points violating any constraint are
    excluded (inequalities strictly, equalities within the feasibility
    tolerance). Ties break by lattice order. Raises NoFeasibleStart naming
    the most systematically violated constraint when nothing survives.
    """
    box = problem.box
    cons = list(problem.constraints) if constraints is None else list(constraints)
    grid = generate_grid(box, cfg.grid_n)
    feasible = np.ones(grid.shape[0], dtype=bool)
    worst = []
    for con in cons:
        vals = np.asarray(con.fn(grid), dtype=float)
        viol = np.maximum(vals, 0.0) if con.kind == "ineq" else np.abs(vals)
        feasible &= viol <= (0.0 if con.kind == "ineq" else cfg.feasibility_tol)
        worst.append(viol.min())
    if not feasible.any():
        idx = int(np.argmax(worst))
        name = cons[idx].name or f"constraint {idx}"
        raise NoFeasibleStart(f"no feasible lattice point; most violated: {name}")
    values = model.eval_batch(grid[feasible])
    order = np.argsort(values, kind="stable")[:cfg.n_starts]
    return grid[feasible][order]


def _start_layer_output(layer, x0):
    return np.diag(layer.weights) * x0 + layer.biases


def run_descent(net, x0, cfg: DescentConfig, rng, *, box, constraints=(),
                model=None, true_fn=None, restart_index=0, bound_checks=()):
    """One restart: train the starting-point layer on the single datum x0.

    Biases start at zero; diagonal weights start at one (``unit``) or
    i.i.d. uniform on [0.5, 1.5] (``random``). The candidate is the
    starting-point layer's output after training, clamped to the box.
    ``bound_checks`` holds (surrogate, upper_bound) pairs whose excess
    counts as a violation alongside the explicit constraints.
    """
    x0 = np.asarray(x0, dtype=float)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("starting point lies outside the box")
    net = net.copy()
    start = net.layers[0]
    dim = start.out_dim
    if cfg.weight_init == "unit":
        diag = np.ones(dim)
    else:
        diag = rng.uniform(0.5, 1.5, size=dim)
    start.weights[:] = np.diag(diag)
    start.biases[:] = 0.0

    updater = make_updater(net, TrainConfig(
        epochs=max(cfg.epochs, 1), minibatch_size=1,
        learning_rate=cfg.learning_rate, optimizer=cfg.optimizer))
    xb = x0[None, :]
    dout = np.ones((1, 1))
    history = []
    last_x = _start_layer_output(start, x0)
    # Divergence is detected by the finite check, so arithmetic warnings
    # from intentionally blown-up iterates are noise.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            out, caches = net._forward_train(xb)
            loss = float(out[0, 0])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite descent loss at epoch {epoch}", last_x=last_x)
            history.append(loss)
            _, grads = net._backward(caches, dout)
            updater.step(grads)
            x_now = _start_layer_output(start, x0)
            if np.all(np.isfinite(x_now)):
                last_x = x_now

    x_star = np.clip(_start_layer_output(start, x0), lo, hi)
    violations = [con.violation(x_star) for con in constraints]
    violations += [max(0.0, other.eval(x_star) - bound)
                   for other, bound in bound_checks]
    violations = np.array(violations)
    return Solution(
        x=x_star,
        f_surrogate=float(model.eval(x_star)) if model is not None else None,
        f_true=float(true_fn(x_star)) if true_fn is not None else None,
        violations=violations,
        feasible=bool(violations.size == 0 or violations.max() <= cfg.feasibility_tol),
        restart_index=restart_index,
        epochs_run=cfg.epochs,
        loss_history=history,
    )


def optimize(problem, model, constraints, cfg: DescentConfig, bound_models=()):
    """Multi-restart descent; returns best, all restarts, and distinct minima.

    Restarts are seeded independently from cfg.seed. The best solution is
    the feasible one with smallest surrogate value; if no restart ends
    feasible the least-violating solution is returned, flagged infeasible.
    Restart failures are collected without aborting the others.
    """
    cons = list(constraints)
    net = build_descent_net(model, cons, cfg.penalty, box=problem.box,
                            bound_models=bound_models)
    starts = select_starting_points(problem, model, cfg, constraints=cons)
    true_fn = problem.objectives[0] if getattr(problem, "objectives", None) else None
    solutions, errors = [], []
    for i, x0 in enumerate(starts):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
        try:
            sol = run_descent(net, x0, cfg, rng, box=problem.box, constraints=cons,
                              model=model, true_fn=true_fn, restart_index=i,
                              bound_checks=bound_models)
        except DivergenceError as exc:
            errors.append((i, exc))
            continue
        sol.seed = cfg.seed
        solutions.append(sol)
    if not solutions:
        raise RuntimeError(f"all {len(starts)} restarts failed: {errors!r}")
    feas = [s for s in solutions if s.feasible]
    if feas:
        best = min(feas, key=lambda s: s.f_surrogate)
    else:
        best = min(solutions, key=lambda s: s.max_violation)
    minima = dedup_minima(feas, problem.box)
    return OptimizeResult(best=best, solutions=solutions, minima=minima, errors=errors)


def dedup_minima(solutions, box, tol=0.01):
    """Cluster solutions closer than tol * (box diagonal); keep lowest-value reps."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    threshold = tol * float(np.linalg.norm(hi - lo))
    ordered = sorted(solutions, key=lambda s: (
        s.f_surrogate if s.f_surrogate is not None else np.inf))
    reps = []
    for sol in ordered:
        if all(np.linalg.norm(sol.x - r.x) > threshold for r in reps):
            reps.append(sol)
    return reps
