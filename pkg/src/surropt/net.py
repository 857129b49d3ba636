"""Minimal dense feedforward networks with reverse-mode gradients.

Everything is float64. Layers carry per-neuron activations, boolean
trainability masks, and optionally diagonal (one-to-one) connectivity.
Networks are plain layer chains except for ``BranchLayer``, which fans the
input out to parallel scalar branches (sub-networks or arbitrary
differentiable functions) so that a following fixed summing layer can
combine an objective with penalty terms.

Training (`train`) is stochastic gradient descent over seeded shuffled
minibatches, with an optional Adam update rule. Serialization (`save` /
`load`) is a versioned JSON container; floats are stored as textual
decimal via ``repr`` round-trip, so save/load is bit-exact.
"""

from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass

import numpy as np

ACTIVATION_KINDS = ("linear", "tanh", "relu", "penalty_ineq", "penalty_eq")
_PENALTY_KINDS = ("penalty_ineq", "penalty_eq")


class TrainingDiverged(RuntimeError):
    """Raised when a training loss stops being finite."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class Activation:
    """A named neuron activation; `c` is the penalty coefficient.

    penalty_ineq(z) = c * max(0, z) and penalty_eq(z) = c * |z|; both are
    exactly zero on the feasible side. Derivatives of the kinked kinds are
    defined as 0 at z = 0.
    """

    kind: str
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind: {self.kind!r}")
        if self.kind in _PENALTY_KINDS and not self.c > 0:
            raise ValueError(f"penalty coefficient must be positive, got {self.c}")


def _fwd_linear(z, c):
    return z


def _fwd_tanh(z, c):
    return np.tanh(z)


def _fwd_relu(z, c):
    return np.maximum(z, 0.0)


def _fwd_penalty_ineq(z, c):
    return c * np.maximum(z, 0.0)


def _fwd_penalty_eq(z, c):
    return c * np.abs(z)


def _der_linear(z, a, c):
    return np.ones_like(z)


def _der_tanh(z, a, c):
    return 1.0 - a * a


def _der_relu(z, a, c):
    return (z > 0).astype(float)


def _der_penalty_ineq(z, a, c):
    return c * (z > 0)


def _der_penalty_eq(z, a, c):
    return c * np.sign(z)


# Dispatch tables; `faulty_derivative` below swaps entries for fault injection.
_FORWARD = {
    "linear": _fwd_linear,
    "tanh": _fwd_tanh,
    "relu": _fwd_relu,
    "penalty_ineq": _fwd_penalty_ineq,
    "penalty_eq": _fwd_penalty_eq,
}
_DERIV = {
    "linear": _der_linear,
    "tanh": _der_tanh,
    "relu": _der_relu,
    "penalty_ineq": _der_penalty_ineq,
    "penalty_eq": _der_penalty_eq,
}


@contextlib.contextmanager
def faulty_derivative(kind, scale=1.1):
    """Temporarily corrupt one activation derivative (gradient-check hook)."""
    if kind not in _DERIV:
        raise ValueError(f"unknown activation kind: {kind!r}")
    original = _DERIV[kind]
    _DERIV[kind] = lambda z, a, c: scale * original(z, a, c)
    try:
        yield
    finally:
        _DERIV[kind] = original


def activation_eval(act: Activation, z: float):
    """Evaluate one activation at scalar z. Returns (value, derivative)."""
    z = float(z)
    if not np.isfinite(z):
        raise FloatingPointError(f"non-finite pre-activation {z!r}")
    value = float(_FORWARD[act.kind](np.float64(z), act.c))
    deriv = float(_DERIV[act.kind](np.float64(z), np.float64(value), act.c))
    return value, deriv


def _as_activation_list(activation, n):
    if isinstance(activation, Activation):
        return [activation] * n
    acts = list(activation)
    if len(acts) != n:
        raise ValueError(f"expected {n} activations, got {len(acts)}")
    return acts


class DenseLayer:
    """Fully connected layer ``a = G(W x + b)`` with trainability masks.

    ``diagonal=True`` restricts the wiring to one-to-one connections: the
    matrix must be square, off-diagonal weights are pinned to zero and can
    never train.
    """

    def __init__(self, weights, biases, activation, *, w_trainable=True,
                 b_trainable=True, diagonal=False):
        self.weights = np.array(weights, dtype=float)
        self.biases = np.array(biases, dtype=float)
        if self.weights.ndim != 2 or self.biases.ndim != 1:
            raise ValueError("weights must be a matrix and biases a vector")
        out_dim, in_dim = self.weights.shape
        if self.biases.shape[0] != out_dim:
            raise ValueError("bias length must match output dimension")
        self.diagonal = bool(diagonal)
        self.activations = _as_activation_list(activation, out_dim)
        self.w_mask = np.broadcast_to(np.asarray(w_trainable, dtype=bool),
                                      self.weights.shape).copy()
        self.b_mask = np.broadcast_to(np.asarray(b_trainable, dtype=bool),
                                      self.biases.shape).copy()
        if self.diagonal:
            if out_dim != in_dim:
                raise ValueError("diagonal layers must be square")
            off = ~np.eye(out_dim, dtype=bool)
            if np.any(self.weights[off] != 0.0):
                raise ValueError("diagonal layers must have zero off-diagonal weights")
            self.w_mask[off] = False
        kinds = {a.kind for a in self.activations}
        cs = {a.c for a in self.activations}
        self._uniform = self.activations[0] if len(kinds) == 1 and len(cs) == 1 else None

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def any_trainable(self):
        return bool(self.w_mask.any() or self.b_mask.any())

    def copy(self):
        new = object.__new__(DenseLayer)
        new.weights = self.weights.copy()
        new.biases = self.biases.copy()
        new.diagonal = self.diagonal
        new.activations = list(self.activations)
        new.w_mask = self.w_mask.copy()
        new.b_mask = self.b_mask.copy()
        new._uniform = self._uniform
        return new

    def forward(self, x):
        z = x @ self.weights.T
        z += self.biases
        act = self._uniform
        if act is not None:
            a = _FORWARD[act.kind](z, act.c)
        else:
            a = np.empty_like(z)
            for j, aj in enumerate(self.activations):
                a[:, j] = _FORWARD[aj.kind](z[:, j], aj.c)
        return a, (x, z, a)

    def backward(self, cache, da, need_param_grads=True):
        x, z, a = cache
        act = self._uniform
        if act is not None:
            if act.kind == "linear":
                dz = da
            else:
                dz = da * _DERIV[act.kind](z, a, act.c)
        else:
            dz = np.empty_like(da)
            for j, aj in enumerate(self.activations):
                dz[:, j] = da[:, j] * _DERIV[aj.kind](z[:, j], a[:, j], aj.c)
        dx = dz @ self.weights
        if not need_param_grads or not self.any_trainable:
            return dx, None
        gw = dz.T @ x
        gb = dz.sum(axis=0)
        if not self.w_mask.all():
            gw = gw * self.w_mask
        if not self.b_mask.all():
            gb = gb * self.b_mask
        return dx, (gw, gb)


class NetBranch:
    """Scalar branch: frozen sub-network output, plus a bias, then an activation."""

    def __init__(self, net, bias, activation):
        if net.output_dim != 1:
            raise ValueError("branch sub-networks must have scalar output")
        self.net = net
        self.bias = float(bias)
        self.activation = activation

    def copy(self):
        return NetBranch(self.net.copy(), self.bias, self.activation)


class FuncBranch:
    """Scalar branch computed by an arbitrary differentiable function of the input.

    ``fn`` must accept a (batch, dim) array and return (batch,);
    ``grad`` maps a single point (dim,) to the gradient vector (dim,).
    """

    def __init__(self, fn, grad, activation, name=""):
        self.fn = fn
        self.grad = grad
        self.activation = activation
        self.name = name

    def copy(self):
        return FuncBranch(self.fn, self.grad, self.activation, self.name)


class BranchLayer:
    """Parallel scalar branches over a shared input; output j is branch j.

    Branch internals are frozen: gradients flow through them to the layer
    input but their parameters never train.
    """

    def __init__(self, branches, in_dim):
        if not branches:
            raise ValueError("BranchLayer needs at least one branch")
        self.branches = list(branches)
        self._in_dim = int(in_dim)
        for br in self.branches:
            if isinstance(br, NetBranch) and br.net.input_dim != self._in_dim:
                raise ValueError("branch sub-network input dimension mismatch")

    @property
    def in_dim(self):
        return self._in_dim

    @property
    def out_dim(self):
        return len(self.branches)

    @property
    def any_trainable(self):
        return False

    def copy(self):
        return BranchLayer([br.copy() for br in self.branches], self._in_dim)

    def forward(self, x):
        n = x.shape[0]
        a = np.empty((n, len(self.branches)))
        subcaches = []
        zs = np.empty((n, len(self.branches)))
        for j, br in enumerate(self.branches):
            if isinstance(br, NetBranch):
                y, caches = br.net._forward_train(x)
                z = y[:, 0] + br.bias
                subcaches.append(caches)
            else:
                z = np.asarray(br.fn(x), dtype=float).reshape(n)
                subcaches.append(None)
            act = br.activation
            zs[:, j] = z
            a[:, j] = _FORWARD[act.kind](z, act.c)
        return a, (x, zs, a, subcaches)

    def backward(self, cache, da, need_param_grads=True):
        x, zs, a, subcaches = cache
        dx = np.zeros_like(x)
        for j, br in enumerate(self.branches):
            act = br.activation
            dz = da[:, j] * _DERIV[act.kind](zs[:, j], a[:, j], act.c)
            if isinstance(br, NetBranch):
                dxj, _ = br.net._backward(subcaches[j], dz[:, None],
                                          need_param_grads=False)
                dx += dxj
            else:
                for r in range(x.shape[0]):
                    if dz[r] != 0.0:
                        dx[r] += dz[r] * np.asarray(br.grad(x[r]), dtype=float)
        return dx, None


class Network:
    """An ordered chain of layers; forward evaluation is pure."""

    def __init__(self, layers):
        if not layers:
            raise ValueError("network needs at least one layer")
        self.layers = list(layers)
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer dimensions do not compose: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def copy(self):
        return Network([layer.copy() for layer in self.layers])

    def _forward_train(self, x2d):
        caches = []
        a = x2d
        for layer in self.layers:
            a, cache = layer.forward(a)
            caches.append(cache)
        return a, caches

    def _backward(self, caches, dout, need_param_grads=True):
        grads = [None] * len(self.layers)
        da = dout
        for i in range(len(self.layers) - 1, -1, -1):
            da, g = self.layers[i].backward(caches[i], da, need_param_grads)
            grads[i] = g
        return da, grads

    def forward_batch(self, x2d):
        x2d = np.asarray(x2d, dtype=float)
        if x2d.ndim != 2 or x2d.shape[1] != self.input_dim:
            raise ValueError(
                f"expected inputs of dimension {self.input_dim}, got shape {x2d.shape}")
        out, _ = self._forward_train(x2d)
        return out

    def forward(self, x):
        """Evaluate one input vector; returns the output vector."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.input_dim:
            raise ValueError(
                f"expected an input vector of length {self.input_dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite input")
        return self.forward_batch(x[None, :])[0]

    def backprop(self, x):
        """Gradients of the scalar output w.r.t. trainable parameters and x.

        Returns ``(grad_x, param_grads)`` where ``param_grads`` maps
        ``(layer_index, "weights"|"biases")`` to a gradient array (zeros at
        frozen positions). Layers with no trainable parameters contribute
        no entries, so a fully frozen network yields an empty mapping.
        """
        if self.output_dim != 1:
            raise ValueError("backprop requires a scalar-output network")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected input of shape ({self.input_dim},)")
        out, caches = self._forward_train(x[None, :])
        for i, cache in enumerate(caches):
            z = cache[1]
            if not np.all(np.isfinite(z)):
                raise FloatingPointError(f"non-finite pre-activation in layer {i}")
        dx, grads = self._backward(caches, np.ones((1, 1)))
        params = {}
        for i, g in enumerate(grads):
            if g is None:
                continue
            gw, gb = g
            if self.layers[i].w_mask.any():
                params[(i, "weights")] = gw
            if self.layers[i].b_mask.any():
                params[(i, "biases")] = gb
        return dx[0], params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    minibatch_size: int
    learning_rate: float
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be a positive integer")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")


class SgdUpdater:
    def __init__(self, net, learning_rate):
        self.net = net
        self.lr = learning_rate

    def step(self, grads):
        for layer, g in zip(self.net.layers, grads):
            if g is None:
                continue
            gw, gb = g
            layer.weights -= self.lr * gw
            layer.biases -= self.lr * gb


class AdamUpdater:
    """Adam with the usual constants (beta1=0.9, beta2=0.999, eps=1e-8).

    Frozen entries see zero gradients, hence zero moments and exactly zero
    updates, so freezing stays bit-exact.
    """

    def __init__(self, net, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net = net
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.state = {}
        for i, layer in enumerate(net.layers):
            if getattr(layer, "any_trainable", False):
                self.state[i] = (np.zeros_like(layer.weights), np.zeros_like(layer.weights),
                                 np.zeros_like(layer.biases), np.zeros_like(layer.biases))

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, g in enumerate(grads):
            if g is None:
                continue
            gw, gb = g
            mw, vw, mb, vb = self.state[i]
            layer = self.net.layers[i]
            mw *= self.beta1
            mw += (1 - self.beta1) * gw
            vw *= self.beta2
            vw += (1 - self.beta2) * gw * gw
            mb *= self.beta1
            mb += (1 - self.beta1) * gb
            vb *= self.beta2
            vb += (1 - self.beta2) * gb * gb
            layer.weights -= self.lr * (mw / c1) / (np.sqrt(vw / c2) + self.eps)
            layer.biases -= self.lr * (mb / c1) / (np.sqrt(vb / c2) + self.eps)


def make_updater(net, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return AdamUpdater(net, cfg.learning_rate)
    return SgdUpdater(net, cfg.learning_rate)


def train(net, inputs, targets, cfg: TrainConfig, loss="mse"):
    """Train a copy of `net`; returns (trained_network, per_epoch_losses).

    ``loss="mse"`` needs targets; ``loss="raw_output"`` is unsupervised
    (the loss is the mean network output) and targets must be None. Only
    trainable parameters move; minibatches come from a seeded shuffle each
    epoch, so identical configs give bit-identical results.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if cfg.minibatch_size > n:
        raise ValueError(f"minibatch_size {cfg.minibatch_size} exceeds dataset size {n}")
    if loss == "mse":
        if targets is None:
            raise ValueError("mse loss requires targets")
        targets = np.asarray(targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        if targets.shape[0] != n:
            raise ValueError("inputs and targets disagree on dataset size")
    elif loss == "raw_output":
        if targets is not None:
            raise ValueError("raw_output loss is unsupervised; targets must be None")
    else:
        raise ValueError(f"unknown loss: {loss!r}")

    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    updater = make_updater(net, cfg)
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, cfg.minibatch_size):
                batch = order[lo:lo + cfg.minibatch_size]
                xb = inputs[batch]
                out, caches = net._forward_train(xb)
                if loss == "mse":
                    resid = out - targets[batch]
                    batch_loss = float(np.mean(resid * resid))
                    dout = (2.0 / resid.size) * resid
                else:
                    batch_loss = float(np.mean(out))
                    dout = np.full_like(out, 1.0 / out.size)
                if not np.isfinite(batch_loss):
                    raise TrainingDiverged(
                        f"non-finite training loss at epoch {epoch}", epoch=epoch)
                _, grads = net._backward(caches, dout)
                updater.step(grads)
                epoch_loss += batch_loss * len(batch)
            history.append(epoch_loss / n)
    return net, history


_FORMAT_NAME = "surropt/dense-net"
_FORMAT_VERSION = 1


def net_to_doc(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        if not isinstance(layer, DenseLayer):
            raise ValueError("only dense-layer chains can be serialized")
        layers.append({
            "diagonal": layer.diagonal,
            "weights": layer.weights.tolist(),
            "biases": layer.biases.tolist(),
            "activations": [{"kind": a.kind, "c": a.c} for a in layer.activations],
            "weights_trainable": layer.w_mask.tolist(),
            "biases_trainable": layer.b_mask.tolist(),
        })
    return {"format": _FORMAT_NAME, "version": _FORMAT_VERSION, "layers": layers}


def net_from_doc(doc: dict) -> Network:
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT_NAME:
        raise ValueError("payload is not a serialized network")
    if doc.get("version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version: {doc.get('version')!r}")
    layers = []
    try:
        for rec in doc["layers"]:
            acts = []
            for a in rec["activations"]:
                kind = a["kind"]
                if kind not in ACTIVATION_KINDS:
                    raise ValueError(f"unknown activation kind: {kind!r}")
                acts.append(Activation(kind, float(a.get("c", 1.0))))
            layers.append(DenseLayer(
                rec["weights"], rec["biases"], acts,
                w_trainable=rec["weights_trainable"],
                b_trainable=rec["biases_trainable"],
                diagonal=rec["diagonal"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"truncated or malformed network payload: {exc}") from exc
    return Network(layers)


def save(net: Network) -> bytes:
    """Serialize to deterministic JSON bytes (exact float round-trip)."""
    return (json.dumps(net_to_doc(net), sort_keys=True, separators=(",", ":"))
            + "\n").encode("utf-8")


def load(data: bytes) -> Network:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"truncated or malformed network payload: {exc}") from exc
    return net_from_doc(doc)


def glorot_init(rng, out_dim, in_dim):
    """Uniform init on [-r, r] with r = sqrt(6 / (in + out))."""
    r = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-r, r, size=(out_dim, in_dim))
