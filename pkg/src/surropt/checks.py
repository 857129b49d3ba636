"""Finite-difference gradient verification suites.

Central differences (h = 1e-5) are the oracle; errors are reported as
norm ratios |bp - fd| / (|fd| + 1e-12) over the stacked gradient vector,
plus per-component ratios wherever the finite-difference value is large
enough for the oracle itself to be trustworthy. Sample points are drawn
away from activation kinks, where the finite-difference oracle (not the
gradient) is undefined.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .engine import box_to_constraints, build_descent_net
from .net import (ACTIVATION_KINDS, Activation, DenseLayer, Network,
                  activation_eval, faulty_derivative, glorot_init)
from .surrogate import SurrogateModel

FD_STEP = 1e-5
TOLERANCE = 1e-6
_KINK_KINDS = ("relu", "penalty_ineq", "penalty_eq")


@dataclass
class CheckResult:
    suite: str
    name: str
    max_rel_err: float
    passed: bool
    cases: int

    def to_dict(self):
        return {"suite": self.suite, "name": self.name,
                "max_rel_err": self.max_rel_err, "passed": self.passed,
                "cases": self.cases}


def fd_gradient(f, x, h=FD_STEP):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_net_gradients(net, x, h=FD_STEP):
    """Finite-difference gradients of a scalar-output net w.r.t. x and params."""
    x = np.asarray(x, dtype=float)
    fd_x = fd_gradient(lambda p: net.forward(p)[0], x, h)
    fd_params = {}
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, DenseLayer) or not layer.any_trainable:
            continue
        for attr, mask, key in (("weights", layer.w_mask, "weights"),
                                ("biases", layer.b_mask, "biases")):
            arr = getattr(layer, attr)
            grad = np.zeros_like(arr)
            it = np.ndindex(arr.shape)
            for idx in it:
                if not mask[idx]:
                    continue
                old = arr[idx]
                arr[idx] = old + h
                fp = net.forward(x)[0]
                arr[idx] = old - h
                fm = net.forward(x)[0]
                arr[idx] = old
                grad[idx] = (fp - fm) / (2 * h)
            if mask.any():
                fd_params[(i, key)] = grad
    return fd_x, fd_params


def gradient_error(net, x):
    """Norm-ratio error between backprop and finite differences at x.

    Also checks individual components whose finite-difference magnitude
    exceeds 1e-3 (below that the oracle's own noise dominates); returns
    the worst ratio seen.
    """
    bp_x, bp_params = net.backprop(x)
    fd_x, fd_params = fd_net_gradients(net, x)
    pieces_bp = [bp_x] + [bp_params[k].ravel() for k in sorted(bp_params)]
    pieces_fd = [fd_x] + [fd_params[k].ravel() for k in sorted(fd_params)]
    if sorted(bp_params) != sorted(fd_params):
        raise AssertionError("backprop and finite differences disagree on "
                             "which parameters are trainable")
    bp = np.concatenate(pieces_bp)
    fd = np.concatenate(pieces_fd)
    err = np.linalg.norm(bp - fd) / (np.linalg.norm(fd) + 1e-12)
    big = np.abs(fd) >= 1e-3
    if big.any():
        err = max(err, float(np.max(np.abs(bp[big] - fd[big])
                                    / (np.abs(fd[big]) + 1e-12))))
    return float(err)


def _clear_of_kinks(net, x, margin=1e-3):
    _, caches = net._forward_train(np.asarray(x, dtype=float)[None, :])
    for layer, cache in zip(net.layers, caches):
        z = cache[1]
        if isinstance(layer, DenseLayer):
            kinds = [a.kind for a in layer.activations]
        else:
            kinds = [br.activation.kind for br in layer.branches]
        for j, kind in enumerate(kinds):
            if kind in _KINK_KINDS and abs(z[0, j]) < margin:
                return False
    return True


def _sample_point(net, rng, scale=1.5, tries=60):
    for _ in range(tries):
        x = rng.uniform(-scale, scale, size=net.input_dim)
        if _clear_of_kinks(net, x):
            return x
    return None


def random_dense_net(rng, input_dim=None, freeze_some=True):
    """A random scalar-output chain mixing all activation kinds."""
    dim = int(input_dim if input_dim is not None else rng.integers(1, 5))
    widths = [dim] + [int(rng.integers(2, 8)) for _ in range(rng.integers(1, 3))]
    layers = []
    for w_in, w_out in zip(widths, widths[1:]):
        acts = [Activation(str(rng.choice(ACTIVATION_KINDS)),
                           c=float(rng.uniform(0.5, 10.0)))
                for _ in range(w_out)]
        w_mask = rng.random((w_out, w_in)) > (0.3 if freeze_some else 0.0)
        b_mask = rng.random(w_out) > (0.3 if freeze_some else 0.0)
        layers.append(DenseLayer(rng.normal(0, 0.8, (w_out, w_in)),
                                 rng.normal(0, 0.5, w_out), acts,
                                 w_trainable=w_mask, b_trainable=b_mask))
    layers.append(DenseLayer(rng.normal(0, 0.8, (1, widths[-1])),
                             rng.normal(0, 0.5, 1), Activation("linear")))
    return Network(layers)


def _random_surrogate(rng, dim=2, hidden=6):
    net = Network([
        DenseLayer(glorot_init(rng, hidden, dim), rng.normal(0, 0.3, hidden),
                   Activation("tanh")),
        DenseLayer(glorot_init(rng, 1, hidden), rng.normal(0, 0.3, 1),
                   Activation("linear")),
    ])
    return SurrogateModel(net, rng.normal(0, 0.5, dim), rng.uniform(0.5, 2.0, dim),
                          rng.normal(), rng.uniform(0.5, 2.0),
                          box=[(-3.0, 3.0)] * dim)


def _check_activations(rng, n_cases):
    worst = 0.0
    for _ in range(n_cases):
        for kind in ACTIVATION_KINDS:
            act = Activation(kind, c=float(rng.uniform(0.5, 10.0)))
            z = float(rng.uniform(-2, 2))
            if kind in _KINK_KINDS and abs(z) < 1e-3:
                z += np.sign(z or 1.0) * 1e-2
            _, deriv = activation_eval(act, z)
            h = FD_STEP
            fd = (activation_eval(act, z + h)[0] - activation_eval(act, z - h)[0]) / (2 * h)
            err = abs(deriv - fd) / (abs(fd) + 1e-12)
            if err > worst:
                worst = err
    return worst


def _check_dense(rng, n_cases):
    worst = 0.0
    done = 0
    while done < n_cases:
        net = random_dense_net(rng)
        x = _sample_point(net, rng)
        if x is None:
            continue
        worst = max(worst, gradient_error(net, x))
        done += 1
    return worst


def _check_diagonal(rng, n_cases):
    worst = 0.0
    for _ in range(n_cases):
        dim = int(rng.integers(1, 5))
        diag = DenseLayer(np.diag(rng.uniform(0.5, 1.5, dim)), rng.normal(0, 0.2, dim),
                          Activation("linear"), diagonal=True)
        body = DenseLayer(rng.normal(0, 0.8, (4, dim)), rng.normal(0, 0.3, 4),
                          Activation("tanh"), w_trainable=False, b_trainable=False)
        head = DenseLayer(rng.normal(0, 0.8, (1, 4)), rng.normal(0, 0.3, 1),
                          Activation("linear"), w_trainable=False, b_trainable=False)
        net = Network([diag, body, head])
        worst = max(worst, gradient_error(net, rng.uniform(-1.5, 1.5, dim)))
    return worst


def _check_descent_graph(rng, n_cases):
    worst = 0.0
    done = 0
    while done < n_cases:
        model = _random_surrogate(rng)
        box = model.box
        cons = box_to_constraints([(-1.0, 1.0), (-1.0, 1.0)])
        net = build_descent_net(model, cons, c=float(rng.uniform(1, 10)), box=None)
        x = _sample_point(net, rng)
        if x is None:
            continue
        worst = max(worst, gradient_error(net, x))
        done += 1
    return worst


def _check_surrogate(rng, n_cases):
    worst = 0.0
    for _ in range(n_cases):
        model = _random_surrogate(rng)
        x = rng.uniform(-1.5, 1.5, model.input_dim)
        fd = fd_gradient(model.eval, x)
        grad = model.gradient(x)
        err = np.linalg.norm(grad - fd) / (np.linalg.norm(fd) + 1e-12)
        worst = max(worst, float(err))
    return worst


_SUITES = {
    "activations": _check_activations,
    "dense": _check_dense,
    "diagonal": _check_diagonal,
    "descent-graph": _check_descent_graph,
    "surrogate": _check_surrogate,
}


def run_gradient_checks(seed=0, suites=None, fault=None, n_cases=25):
    """Run the finite-difference suites; returns a list of CheckResult.

    ``fault`` optionally corrupts one activation kind's derivative so a
    broken backprop path is visibly reported (the failing suite names the
    activation).
    """
    if suites is None:
        suites = list(_SUITES)
    suites = list(suites)
    if not suites:
        raise ValueError("empty suite selection")
    unknown = [s for s in suites if s not in _SUITES]
    if unknown:
        raise ValueError(f"unknown suites: {unknown}; known: {sorted(_SUITES)}")
    results = []
    for suite in suites:
        tag = zlib.crc32(suite.encode("utf-8"))
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag,)))
        if fault is not None:
            with faulty_derivative(fault):
                worst = _SUITES[suite](rng, n_cases)
            name = f"{suite} (fault injected: {fault})"
        else:
            worst = _SUITES[suite](rng, n_cases)
            name = suite
        results.append(CheckResult(suite=suite, name=name, max_rel_err=worst,
                                   passed=bool(worst < TOLERANCE), cases=n_cases))
    return results
