"""Differentiable models: linear classifiers and small MLPs.

A model is a stack of affine layers with an optional elementwise activation
between them (``relu`` or ``tanh``); ``linear`` models are a single affine
layer.  Binary models have one output unit and produce scalar scores whose
sign is the prediction; multiclass models produce a score per class.

Two evaluation paths exist and are tested against each other: a fast
vectorized numpy path (``score``, ``score_batch``, ``loss_value``,
``loss_batch``) used by Monte-Carlo estimators and metrics, and a tape path
(``build_loss_graph``) used wherever gradients are needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch
from .losses import (Loss, NotOneHot, phi_array, phi_var, softmax_ce_array,
                     softmax_ce_var, zero_one_from_scores)
from .rng import RngStream


@dataclass
class Model:
    kind: str  # linear | mlp
    layers: list  # [(weight (out, in), bias (out,)), ...]
    activation: str = "tanh"  # relu | tanh; applies between mlp layers

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind: {self.kind!r}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation: {self.activation!r}")
        if not self.layers:
            raise ValueError("model needs at least one layer")
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in self.layers]
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeMismatch(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i > 0 and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ShapeMismatch(
                    f"layer {i} input dim {w.shape[1]} != layer {i-1} output dim")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def is_binary(self) -> bool:
        return self.output_dim == 1

    def parameter_norm(self) -> float:
        return math.sqrt(sum(float((w * w).sum() + (b * b).sum())
                             for w, b in self.layers))

    def copy(self) -> "Model":
        return Model(self.kind, [(w.copy(), b.copy()) for w, b in self.layers],
                     self.activation)


def linear_model(theta, bias: float = 0.0) -> Model:
    """Binary linear classifier score(x) = theta.x + bias."""
    theta = np.asarray(theta, dtype=np.float64)
    return Model("linear", [(theta[None, :], np.array([float(bias)]))])


def init_mlp(d: int, hidden, out: int = 1, activation: str = "tanh",
             rng: RngStream | None = None) -> Model:
    """MLP with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    rng = rng if rng is not None else RngStream(0, 0)
    dims = [d] + list(hidden) + [out]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-lim, lim, (fan_out, fan_in))
        b = rng.uniform(-lim, lim, fan_out)
        layers.append((w, b))
    return Model("mlp" if hidden else "linear", layers, activation)


def _activate(a: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(a, 0.0) if activation == "relu" else np.tanh(a)


def score(model: Model, x) -> float | np.ndarray:
    """Score of one example; scalar for binary models, (K,) otherwise."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeMismatch(f"input shape {x.shape}, expected ({model.input_dim},)")
    h = x
    for i, (w, b) in enumerate(model.layers):
        h = w @ h + b
        if i < len(model.layers) - 1:
            h = _activate(h, model.activation)
    return float(h[0]) if model.is_binary else h


forward = score  # common alias


def score_batch(model: Model, X) -> np.ndarray:
    """Scores of an (n, d) batch: (n,) for binary models, (n, K) otherwise."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeMismatch(f"batch shape {X.shape}, expected (n, {model.input_dim})")
    h = X
    for i, (w, b) in enumerate(model.layers):
        h = h @ w.T + b
        if i < len(model.layers) - 1:
            h = _activate(h, model.activation)
    return h[:, 0] if model.is_binary else h


def loss_value(model: Model, loss: Loss, x, y) -> float:
    s = score(model, x)
    if loss.kind == "softmax_ce":
        return float(softmax_ce_array(s, y))
    if loss.kind == "zero_one":
        return float(zero_one_from_scores(s, y))
    if not model.is_binary:
        raise ShapeMismatch("margin losses need a binary model")
    return float(phi_array(loss, s * float(y)))


def loss_batch(model: Model, loss: Loss, X, y) -> np.ndarray:
    s = score_batch(model, X)
    y = np.asarray(y)
    if loss.kind == "softmax_ce":
        return softmax_ce_array(s, y)
    if loss.kind == "zero_one":
        return zero_one_from_scores(s, y)
    if not model.is_binary:
        raise ShapeMismatch("margin losses need a binary model")
    return phi_array(loss, s * y.astype(np.float64))


def multiclass_margin_loss(model: Model, x, y_onehot, loss: Loss = Loss("hinge")) -> float:
    """phi applied to the true-class score of a multiclass linear model."""
    y_onehot = np.asarray(y_onehot, dtype=np.float64)
    if (y_onehot.ndim != 1 or y_onehot.shape[0] != model.output_dim
            or not np.all((y_onehot == 0.0) | (y_onehot == 1.0))
            or int(y_onehot.sum()) != 1):
        raise NotOneHot(f"label {y_onehot!r} is not one-hot of length {model.output_dim}")
    s = score(model, x)
    s = np.atleast_1d(s)
    return float(phi_array(loss, float(y_onehot @ s)))


def max_column_norm(theta: np.ndarray) -> float:
    """Largest column l2 norm of a (d, K) parameter matrix."""
    theta = np.asarray(theta, dtype=np.float64)
    return float(np.sqrt((theta * theta).sum(axis=0)).max())


@dataclass
class LossGraph:
    """A recorded loss evaluation with handles for backward passes."""

    tape: ad.Tape
    output: ad.Variable          # scalar loss; (n, 1) per-example losses for batches
    param_vars: list             # [(W_var, b_var), ...] aligned with model.layers
    x_var: ad.Variable | None    # input leaf when input_leaf=True
    transposed_weights: bool = False  # batched graphs leaf W.T; grads come back (in, out)

    def param_grads(self, output: ad.Variable | None = None):
        out = self.output if output is None else output
        flat = [v for pair in self.param_vars for v in pair]
        grads = ad.backward(out, flat)
        pairs = [(grads[2 * i], grads[2 * i + 1]) for i in range(len(self.param_vars))]
        if self.transposed_weights:
            pairs = [(dw.T, db) for dw, db in pairs]
        return pairs

    def input_grad(self, output: ad.Variable | None = None) -> np.ndarray:
        if self.x_var is None:
            raise ValueError("graph was built without an input leaf")
        out = self.output if output is None else output
        return ad.backward(out, [self.x_var])[0]

    def loss_values(self) -> np.ndarray:
        """Per-example losses of a batched graph as an (n,) array."""
        v = self.output.value
        return v[:, 0] if v.ndim == 2 else np.atleast_1d(v)


def _score_var(tape: ad.Tape, model: Model, x_var: ad.Variable, batched: bool):
    h = x_var
    param_vars = []
    for i, (w, b) in enumerate(model.layers):
        # batched path stores W transposed so (n,in)@(in,out) stays a plain matmul
        w_var = tape.leaf(w.T) if batched else tape.leaf(w)
        b_var = tape.leaf(b)
        param_vars.append((w_var, b_var))
        h = ad.add(ad.matmul(h if batched else w_var, w_var if batched else h), b_var)
        if i < len(model.layers) - 1:
            h = ad.relu(h) if model.activation == "relu" else ad.tanh(h)
    return h, param_vars


def build_loss_graph(model: Model, loss: Loss, x, y,
                     input_leaf: bool = False) -> LossGraph:
    """Record one loss evaluation; gradients flow to parameters and,
    when ``input_leaf`` is set, to the input."""
    tape = ad.Tape()
    x = np.asarray(x, dtype=np.float64)
    x_var = tape.leaf(x) if input_leaf else tape.constant(x)
    s, param_vars = _score_var(tape, model, x_var, batched=False)
    if loss.kind == "softmax_ce":
        out = softmax_ce_var(s, int(y))
    else:
        if not model.is_binary:
            raise ShapeMismatch("margin losses need a binary model")
        margin = ad.scale(ad.tsum(s), float(y))
        out = phi_var(loss, margin)
    return LossGraph(tape, out, param_vars, x_var if input_leaf else None)


def build_batch_loss_graph(model: Model, loss: Loss, X, y,
                           input_leaf: bool = False) -> LossGraph:
    """Record per-example losses for a whole batch (binary margin losses).

    ``output`` holds the (n, 1) loss column; reduce it (e.g. via ``ad.tsum``)
    before calling backward, or read values with ``loss_values()``.
    """
    tape = ad.Tape()
    X = np.asarray(X, dtype=np.float64)
    x_var = tape.leaf(X) if input_leaf else tape.constant(X)
    if not model.is_binary:
        raise ShapeMismatch("batched graphs support binary models only")
    s, param_vars = _score_var(tape, model, x_var, batched=True)
    y_col = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    margins = ad.mul(s, tape.constant(y_col))
    out = phi_var(loss, margins)
    return LossGraph(tape, out, param_vars, x_var if input_leaf else None,
                     transposed_weights=True)


def grad_params(model: Model, loss: Loss, x, y):
    """[(dW, db), ...] of the loss at one example."""
    return build_loss_graph(model, loss, x, y).param_grads()


def grad_wrt_input(model: Model, loss: Loss, x, y) -> np.ndarray:
    """Gradient of the loss with respect to the input point."""
    return build_loss_graph(model, loss, x, y, input_leaf=True).input_grad()


def batch_input_grads(model: Model, loss: Loss, X, y) -> np.ndarray:
    """(n, d) per-example input gradients in one recorded sweep."""
    graph = build_batch_loss_graph(model, loss, X, y, input_leaf=True)
    total = ad.tsum(graph.output)  # each row of X touches only its own loss
    return graph.input_grad(total)


def kink_distance(model: Model, loss: Loss, x, y) -> float:
    """Distance (in pre-activation/margin units) to the nearest gradient kink.

    Infinite for tanh models with smooth losses; relu layers contribute their
    smallest |pre-activation| and hinge-type losses the distance of the margin
    to the hinge point.
    """
    x = np.asarray(x, dtype=np.float64)
    dist = math.inf
    h = x
    for i, (w, b) in enumerate(model.layers):
        h = w @ h + b
        if i < len(model.layers) - 1:
            if model.activation == "relu":
                dist = min(dist, float(np.min(np.abs(h))))
            h = _activate(h, model.activation)
    if model.is_binary and loss.kind in ("hinge", "draft_hinge"):
        margin = float(h[0]) * float(y)
        hinge_point = 1.0 if loss.kind == "hinge" else 0.0
        dist = min(dist, abs(margin - hinge_point))
        if loss.bound is not None:
            # clipping introduces a second kink where phi reaches the bound
            at_bound = hinge_point - loss.bound
            dist = min(dist, abs(margin - at_bound))
    return dist


def save_model(model: Model, path) -> None:
    """JSON checkpoint; floats serialized via shortest round-trip repr."""
    payload = {
        "kind": model.kind,
        "activation": model.activation,
        "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in model.layers],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path) -> Model:
    with open(path) as fh:
        payload = json.load(fh)
    layers = [(np.array(l["weight"], dtype=np.float64),
               np.array(l["bias"], dtype=np.float64)) for l in payload["layers"]]
    return Model(payload["kind"], layers, payload["activation"])
