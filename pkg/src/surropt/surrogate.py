"""Grid-sampled training data and tanh-network objective surrogates.

A surrogate is a fixed-shape network (inputs -> 20 tanh units -> 1 linear
output) wrapped with affine normalization: inputs map to [-1, 1] per
dimension over the box, targets are standardized over the training grid.
Evaluation composes denormalize(net(normalize(x))), so the model maps raw
variables to raw objective values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .net import (Activation, DenseLayer, Network, TrainConfig, glorot_init,
                  load, net_from_doc, net_to_doc, save, train)

HIDDEN_UNITS = 20
DEFAULT_GRID_N = 10000

# Benchmark fit settings: 1 hidden layer of 20 tanh units, 500 epochs,
# minibatch 10, learning rate 0.01.
def default_fit_config(seed=0, optimizer="adam"):
    return TrainConfig(epochs=500, minibatch_size=10, learning_rate=0.01,
                       seed=seed, optimizer=optimizer)


def _box_arrays(box):
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if lo.size == 0 or np.any(hi <= lo):
        raise ValueError("degenerate box: need lo < hi in every dimension")
    return lo, hi


def grid_side(n_total, dim):
    side = int(round(n_total ** (1.0 / dim)))
    if side < 2:
        raise ValueError(f"n_total={n_total} gives fewer than 2 points per dimension")
    return side


def generate_grid(box, n_total):
    """Evenly spaced lattice over the box, endpoints included.

    The per-dimension count is round(n_total ** (1/dim)); the realized
    total is its dim-th power. Points are returned in row-major order of
    the per-dimension axes.
    """
    lo, hi = _box_arrays(box)
    dim = lo.size
    side = grid_side(n_total, dim)
    axes = [np.linspace(lo[i], hi[i], side) for i in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def holdout_grid(box, n_total):
    """Lattice shifted by half a step: interior midpoints, never used in training."""
    lo, hi = _box_arrays(box)
    dim = lo.size
    side = grid_side(n_total, dim)
    axes = []
    for i in range(dim):
        step = (hi[i] - lo[i]) / (side - 1)
        axes.append(np.linspace(lo[i] + step / 2, hi[i] - step / 2, side - 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class FitReport:
    train_rmse: float
    holdout_rmse: float
    normalized_rmse: float
    epochs_run: int
    seed: int

    def to_dict(self):
        return {
            "train_rmse": self.train_rmse,
            "holdout_rmse": self.holdout_rmse,
            "normalized_rmse": self.normalized_rmse,
            "epochs_run": self.epochs_run,
            "seed": self.seed,
        }


_SURR_FORMAT = "surropt/surrogate"
_SURR_VERSION = 1


class SurrogateModel:
    """A trained network plus invertible input/output normalization maps."""

    def __init__(self, net, in_shift, in_scale, out_shift, out_scale, box=None):
        self.net = net
        self.in_shift = np.asarray(in_shift, dtype=float)
        self.in_scale = np.asarray(in_scale, dtype=float)
        self.out_shift = float(out_shift)
        self.out_scale = float(out_scale)
        if np.any(self.in_scale == 0.0) or self.out_scale == 0.0:
            raise ValueError("normalization scales must be nonzero")
        self.box = None if box is None else [tuple(map(float, b)) for b in box]
        self._raw_net = None

    @property
    def input_dim(self):
        return self.net.input_dim

    def normalize(self, x):
        return (x - self.in_shift) / self.in_scale

    def denormalize_output(self, y):
        return y * self.out_scale + self.out_shift

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite input")
        y = self.net.forward(self.normalize(x))[0]
        return float(self.denormalize_output(y))

    def eval_batch(self, x2d):
        x2d = np.asarray(x2d, dtype=float)
        y = self.net.forward_batch(self.normalize(x2d))[:, 0]
        return self.denormalize_output(y)

    def eval_flagged(self, x):
        """Evaluate and report whether x lies outside the training box."""
        value = self.eval(x)
        extrapolating = False
        if self.box is not None:
            x = np.asarray(x, dtype=float)
            lo = np.array([b[0] for b in self.box])
            hi = np.array([b[1] for b in self.box])
            extrapolating = bool(np.any(x < lo) or np.any(x > hi))
        return value, extrapolating

    def gradient(self, x):
        """d eval / dx at a raw point, chain-ruled through the normalization."""
        x = np.asarray(x, dtype=float)
        grad_norm, _ = self.net.backprop(self.normalize(x))
        return grad_norm / self.in_scale * self.out_scale

    def as_raw_network(self):
        """The same function as a frozen plain network on raw inputs.

        The input normalization folds into a leading diagonal layer and
        the output map into a trailing 1x1 layer, so descent graphs can
        treat the surrogate as an ordinary frozen sub-network.
        """
        if self._raw_net is None:
            dim = self.net.input_dim
            pre = DenseLayer(np.diag(1.0 / self.in_scale),
                             -self.in_shift / self.in_scale,
                             Activation("linear"), w_trainable=False,
                             b_trainable=False, diagonal=True)
            frozen = []
            for layer in self.net.layers:
                lay = layer.copy()
                lay.w_mask[:] = False
                lay.b_mask[:] = False
                frozen.append(lay)
            post = DenseLayer(np.array([[self.out_scale]]),
                              np.array([self.out_shift]), Activation("linear"),
                              w_trainable=False, b_trainable=False)
            self._raw_net = Network([pre, *frozen, post])
        return self._raw_net.copy()

    def save(self) -> bytes:
        doc = {
            "format": _SURR_FORMAT,
            "version": _SURR_VERSION,
            "net": net_to_doc(self.net),
            "input_shift": self.in_shift.tolist(),
            "input_scale": self.in_scale.tolist(),
            "output_shift": self.out_shift,
            "output_scale": self.out_scale,
            "box": self.box,
        }
        return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()

    @classmethod
    def load(cls, data: bytes):
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"truncated or malformed surrogate payload: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("format") != _SURR_FORMAT:
            raise ValueError("payload is not a serialized surrogate")
        if doc.get("version") != _SURR_VERSION:
            raise ValueError(f"unsupported format version: {doc.get('version')!r}")
        try:
            return cls(net_from_doc(doc["net"]), doc["input_shift"],
                       doc["input_scale"], doc["output_shift"],
                       doc["output_scale"], box=doc.get("box"))
        except KeyError as exc:
            raise ValueError(f"truncated or malformed surrogate payload: {exc}") from exc


def build_fit_net(dim, seed, hidden=HIDDEN_UNITS):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xF17,)))
    hidden_layer = DenseLayer(glorot_init(rng, hidden, dim), np.zeros(hidden),
                              Activation("tanh"))
    out_layer = DenseLayer(glorot_init(rng, 1, hidden), np.zeros(1),
                           Activation("linear"))
    return Network([hidden_layer, out_layer])


def fit_surrogate(problem, objective_index=0, cfg=None, n_grid=DEFAULT_GRID_N,
                  hidden=HIDDEN_UNITS):
    """Fit one objective of a problem on an even lattice over its box.

    Training data come from the box bounds only (general constraints do
    not filter the grid). Returns (SurrogateModel, FitReport); the report
    holds train / holdout RMSE in raw units plus holdout RMSE normalized
    by the objective range over the holdout lattice.
    """
    if cfg is None:
        cfg = default_fit_config()
    objective = problem.objectives[objective_index]
    xs = generate_grid(problem.box, n_grid)
    ys = np.asarray(objective(xs), dtype=float)

    lo, hi = _box_arrays(problem.box)
    in_shift = (lo + hi) / 2.0
    in_scale = (hi - lo) / 2.0
    out_shift = float(ys.mean())
    std = float(ys.std())
    out_scale = std if std > 0 else 1.0

    xn = (xs - in_shift) / in_scale
    yn = (ys - out_shift) / out_scale
    net = build_fit_net(lo.size, cfg.seed, hidden=hidden)
    trained, _ = train(net, xn, yn, cfg, loss="mse")
    model = SurrogateModel(trained, in_shift, in_scale, out_shift, out_scale,
                           box=problem.box)

    pred_train = model.eval_batch(xs)
    train_rmse = float(np.sqrt(np.mean((pred_train - ys) ** 2)))
    xh = holdout_grid(problem.box, n_grid)
    yh = np.asarray(objective(xh), dtype=float)
    pred_hold = model.eval_batch(xh)
    holdout_rmse = float(np.sqrt(np.mean((pred_hold - yh) ** 2)))
    y_range = float(yh.max() - yh.min())
    normalized = holdout_rmse / y_range if y_range > 0 else holdout_rmse
    report = FitReport(train_rmse=train_rmse, holdout_rmse=holdout_rmse,
                       normalized_rmse=normalized, epochs_run=cfg.epochs,
                       seed=cfg.seed)
    return model, report
