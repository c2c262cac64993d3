"""SGD training in four regimes sharing one loop.

* ``erm``      plain SGD on clean examples;
* ``avg_aug``  per example, the mean loss over m augmented copies (one
               backward pass per copy);
* ``maxup``    per example, the worst of m augmented copies -- the update
               backpropagates only that copy, so each example costs m
               forward passes but a single backward pass;
* ``ohem``     the hardest example of each minibatch gets the only backward.

All methods process examples individually, average per-example gradients over
the minibatch, and apply theta <- theta - lr * (grad + weight_decay * theta).
Copy draws, shuffles, and initialization all derive from the config seed, so
runs are bitwise reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentationSpec, sample
from .losses import Loss
from .models import (Model, batch_input_grads, build_loss_graph, loss_batch,
                     score_batch)
from .losses import zero_one_from_scores
from .rng import RngStream


class EmptyBatch(ValueError):
    """A minibatch step needs at least one example."""


class ConfigInvalid(ValueError):
    """Training configuration violates a constraint; message names the field."""


METHODS = ("erm", "avg_aug", "maxup", "ohem")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "erm"
    m: int = 1                      # augmentation copies (avg_aug / maxup)
    batch_size: int = 32
    lr: float = 0.1
    epochs: int = 10
    warmup_epochs: int = 0          # epochs of single-draw augmentation first
    seed: int = 0
    weight_decay: float = 0.0
    spec: AugmentationSpec = field(default_factory=AugmentationSpec)
    loss: Loss = field(default_factory=Loss)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigInvalid(f"method: unknown value {self.method!r}")
        if self.m < 1:
            raise ConfigInvalid("m: must be >= 1")
        if self.batch_size < 1:
            raise ConfigInvalid("batch_size: must be >= 1")
        if not self.lr >= 0:
            raise ConfigInvalid("lr: must be nonnegative")
        if self.epochs < 0:
            raise ConfigInvalid("epochs: must be nonnegative")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigInvalid("warmup_epochs: must lie in [0, epochs]")
        if self.weight_decay < 0:
            raise ConfigInvalid("weight_decay: must be nonnegative")


@dataclass
class OpCounters:
    """Forward/backward passes counted per example copy inside training steps."""

    forward: int = 0
    backward: int = 0

    def snapshot(self):
        return OpCounters(self.forward, self.backward)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_loss: float
    train_acc: float
    test_acc: float
    mean_input_grad_norm: float
    forward_count: int
    backward_count: int


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)

    FIELDS = ("epoch", "train_loss", "test_loss", "train_acc", "test_acc",
              "mean_input_grad_norm", "forward_count", "backward_count")

    def append(self, rec: EpochRecord):
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.FIELDS)
            for r in self.records:
                writer.writerow([getattr(r, f) for f in self.FIELDS])

    @classmethod
    def from_csv(cls, path) -> "TrainTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                trace.append(EpochRecord(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    test_loss=float(row["test_loss"]),
                    train_acc=float(row["train_acc"]),
                    test_acc=float(row["test_acc"]),
                    mean_input_grad_norm=float(row["mean_input_grad_norm"]),
                    forward_count=int(row["forward_count"]),
                    backward_count=int(row["backward_count"]),
                ))
        return trace


def _zero_grads(model: Model):
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]


def _accumulate(total, grads):
    for (tw, tb), (gw, gb) in zip(total, grads):
        tw += gw
        tb += gb


def _apply_update(model: Model, total, batch_size: int, cfg: TrainConfig) -> Model:
    inv = 1.0 / batch_size
    layers = []
    for (w, b), (gw, gb) in zip(model.layers, total):
        layers.append((w - cfg.lr * (gw * inv + cfg.weight_decay * w),
                       b - cfg.lr * (gb * inv + cfg.weight_decay * b)))
    return Model(model.kind, layers, model.activation)


def _check_batch(batch):
    batch = list(batch)
    if not batch:
        raise EmptyBatch("minibatch has no examples")
    return batch


def maxup_example_gradient(model: Model, loss: Loss, x, y, m: int,
                           spec: AugmentationSpec, rng: RngStream,
                           counters: OpCounters | None = None):
    """Gradient of the worst of m augmented copies of one example.

    Returns ``(grads, worst_index, copy_losses, copies)``.  Only the argmax
    copy is backpropagated (ties go to the lowest index); the other copies
    cost a forward pass each.
    """
    copies = sample(spec, x, m, rng)
    graphs = [build_loss_graph(model, loss, copies[i], y) for i in range(m)]
    if counters is not None:
        counters.forward += m
    copy_losses = np.array([float(g.output.value) for g in graphs])
    worst = int(np.argmax(copy_losses))  # argmax takes the lowest index on ties
    grads = graphs[worst].param_grads()
    if counters is not None:
        counters.backward += 1
    return grads, worst, copy_losses, copies


def maxup_minibatch_step(model: Model, batch, cfg: TrainConfig, rng: RngStream,
                         counters: OpCounters | None = None) -> Model:
    """One SGD step on the worst-copy objective (per-example argmax)."""
    batch = _check_batch(batch)
    total = _zero_grads(model)
    for x, y in batch:
        grads, _, _, _ = maxup_example_gradient(model, cfg.loss, x, y, cfg.m,
                                                cfg.spec, rng, counters)
        _accumulate(total, grads)
    return _apply_update(model, total, len(batch), cfg)


def avg_aug_minibatch_step(model: Model, batch, cfg: TrainConfig, rng: RngStream,
                           counters: OpCounters | None = None) -> Model:
    """One SGD step on the mean loss over m augmented copies per example."""
    batch = _check_batch(batch)
    total = _zero_grads(model)
    inv_m = 1.0 / cfg.m
    for x, y in batch:
        copies = sample(cfg.spec, x, cfg.m, rng)
        example = _zero_grads(model)
        for i in range(cfg.m):
            graph = build_loss_graph(model, cfg.loss, copies[i], y)
            if counters is not None:
                counters.forward += 1
                counters.backward += 1
            _accumulate(example, graph.param_grads())
        _accumulate(total, [(gw * inv_m, gb * inv_m) for gw, gb in example])
    return _apply_update(model, total, len(batch), cfg)


def erm_step(model: Model, batch, cfg: TrainConfig,
             counters: OpCounters | None = None) -> Model:
    """Plain SGD on the clean examples."""
    batch = _check_batch(batch)
    total = _zero_grads(model)
    for x, y in batch:
        graph = build_loss_graph(model, cfg.loss, x, y)
        if counters is not None:
            counters.forward += 1
            counters.backward += 1
        _accumulate(total, graph.param_grads())
    return _apply_update(model, total, len(batch), cfg)


def ohem_step(model: Model, batch, cfg: TrainConfig,
              counters: OpCounters | None = None) -> Model:
    """Backpropagate only the hardest example of the minibatch."""
    batch = _check_batch(batch)
    graphs = [build_loss_graph(model, cfg.loss, x, y) for x, y in batch]
    if counters is not None:
        counters.forward += len(batch)
    losses = np.array([float(g.output.value) for g in graphs])
    hardest = int(np.argmax(losses))
    grads = graphs[hardest].param_grads()
    if counters is not None:
        counters.backward += 1
    # the single hardest example defines the step; no batch averaging
    return _apply_update(model, grads, 1, cfg)


def _epoch_metrics(model: Model, cfg: TrainConfig, train, test):
    train_losses = loss_batch(model, cfg.loss, train.X, train.y)
    train_err = zero_one_from_scores(score_batch(model, train.X), train.y)
    grads = batch_input_grads(model, cfg.loss, train.X, train.y)
    grad_norms = np.sqrt((grads * grads).sum(axis=1))
    if len(test):
        test_losses = loss_batch(model, cfg.loss, test.X, test.y)
        test_err = zero_one_from_scores(score_batch(model, test.X), test.y)
        test_loss, test_acc = float(test_losses.mean()), 1.0 - float(test_err.mean())
    else:
        test_loss, test_acc = math.nan, math.nan
    return (float(train_losses.mean()), test_loss,
            1.0 - float(train_err.mean()), test_acc, float(grad_norms.mean()))


def train(model: Model, dataset, cfg: TrainConfig, test=None):
    """Run the configured method and return ``(model, trace)``.

    The first ``warmup_epochs`` use single-draw average augmentation; per-epoch
    example order comes from a seeded permutation.  ``dataset``/``test`` are
    pre-split ``Dataset`` objects (test may be None for metrics on train only).
    """
    from .datasets import Dataset  # local import to avoid a cycle at module load

    if test is None:
        test = Dataset(np.zeros((0, dataset.dim)), np.zeros(0, dtype=np.int64))
    root = RngStream(cfg.seed, 0)
    trace = TrainTrace()
    counters = OpCounters()
    warm_cfg = replace(cfg, method="avg_aug", m=1)

    for epoch in range(cfg.epochs):
        live_cfg = warm_cfg if epoch < cfg.warmup_epochs else cfg
        order = root.substream("shuffle", epoch).permutation(len(dataset))
        for start in range(0, len(dataset), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = [(dataset.X[i], int(dataset.y[i])) for i in idx]
            step_rng = root.substream("aug", epoch, start)
            if live_cfg.method == "erm":
                model = erm_step(model, batch, live_cfg, counters)
            elif live_cfg.method == "avg_aug":
                model = avg_aug_minibatch_step(model, batch, live_cfg, step_rng, counters)
            elif live_cfg.method == "maxup":
                model = maxup_minibatch_step(model, batch, live_cfg, step_rng, counters)
            else:
                model = ohem_step(model, batch, live_cfg, counters)
        snap = counters.snapshot()
        metrics = _epoch_metrics(model, cfg, dataset, test)
        trace.append(EpochRecord(epoch, *metrics, snap.forward, snap.backward))
    return model, trace
