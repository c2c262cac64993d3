"""Margin losses for binary classifiers plus softmax cross-entropy and 0-1.

A margin loss is phi(y * score) with phi nonincreasing:

* ``hinge``        phi(s) = max(1 - s, 0)
* ``draft_hinge``  phi(s) = max(-s, 0)
* ``logistic``     phi(s) = log(1 + exp(-s))
* ``zero_one``     phi(s) = 1{s <= 0}   (evaluation only, not differentiable)

An optional ``bound`` B clips any of them to min(phi, B).  ``softmax_ce`` is
the multiclass cross-entropy on raw scores.  The tape builders in this module
compose losses from autodiff primitives so gradients flow to both parameters
and inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class GradientOfZeroOne(TypeError):
    """The 0-1 loss is evaluation-only; it has no useful gradient."""


class NotOneHot(ValueError):
    """Multiclass margin loss requires a one-hot label vector."""


MARGIN_KINDS = ("hinge", "draft_hinge", "logistic", "zero_one")
ALL_KINDS = MARGIN_KINDS + ("softmax_ce",)


@dataclass(frozen=True)
class Loss:
    kind: str = "logistic"
    bound: float | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown loss kind: {self.kind!r}")
        if self.bound is not None and self.bound <= 0:
            raise ValueError("bound must be positive")

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of phi (margin losses; 1 for those shipped)."""
        if self.kind == "zero_one":
            raise ValueError("zero_one has no Lipschitz constant")
        return 1.0


def phi_array(loss: Loss, margins: np.ndarray) -> np.ndarray:
    """Vectorized phi on raw margins (fast path, no tape)."""
    s = np.asarray(margins, dtype=np.float64)
    if loss.kind == "hinge":
        out = np.maximum(1.0 - s, 0.0)
    elif loss.kind == "draft_hinge":
        out = np.maximum(-s, 0.0)
    elif loss.kind == "logistic":
        out = np.logaddexp(0.0, -s)
    elif loss.kind == "zero_one":
        out = (s <= 0.0).astype(np.float64)
    else:
        raise ValueError(f"{loss.kind} is not a margin loss")
    if loss.bound is not None and loss.kind != "zero_one":
        out = np.minimum(out, loss.bound)
    return out


def phi_var(loss: Loss, margin: ad.Variable) -> ad.Variable:
    """phi composed from tape primitives; margin may be any shape."""
    tape = margin.tape
    if loss.kind == "zero_one":
        raise GradientOfZeroOne("zero_one loss cannot be put on a tape")
    if loss.kind == "hinge":
        one = tape.constant(np.ones(margin.shape))
        out = ad.relu(ad.sub(one, margin))
    elif loss.kind == "draft_hinge":
        out = ad.relu(ad.neg(margin))
    elif loss.kind == "logistic":
        # log(1 + exp(-m)); fine for |m| < ~700, which covers desk scale
        one = tape.constant(np.ones(margin.shape))
        out = ad.log(ad.add(one, ad.exp(ad.neg(margin))))
    else:
        raise ValueError(f"{loss.kind} is not a margin loss")
    if loss.bound is not None:
        b = tape.constant(np.full(margin.shape, loss.bound))
        out = ad.sub(b, ad.relu(ad.sub(b, out)))  # min(out, B)
    return out


def softmax_ce_var(scores: ad.Variable, y: int) -> ad.Variable:
    """Cross-entropy -log softmax(scores)[y] for a single (K,) score vector."""
    tape = scores.tape
    k = scores.value.shape[0]
    onehot = np.zeros(k)
    onehot[int(y)] = 1.0
    true_score = ad.tsum(ad.mul(scores, tape.constant(onehot)))
    return ad.sub(ad.logsumexp(scores), true_score)


def softmax_ce_array(scores: np.ndarray, y) -> np.ndarray:
    """Vectorized cross-entropy for (K,) or (n, K) scores."""
    s = np.asarray(scores, dtype=np.float64)
    single = s.ndim == 1
    if single:
        s = s[None, :]
        y = np.array([y])
    y = np.asarray(y, dtype=np.int64)
    hi = s.max(axis=1, keepdims=True)
    lse = hi[:, 0] + np.log(np.exp(s - hi).sum(axis=1))
    out = lse - s[np.arange(len(y)), y]
    return out[0] if single else out


def zero_one_from_scores(scores: np.ndarray, y) -> np.ndarray:
    """1 iff the prediction disagrees with the label; margin <= 0 counts as error.

    Binary: scalar score with label in {-1,+1}, or (n,) scores with (n,) labels.
    Multiclass: (K,) score vector with an int label, or (n, K) with (n,) labels;
    argmax ties resolve to the lowest class index.
    """
    s = np.asarray(scores, dtype=np.float64)
    binary = s.ndim == 0 or (s.ndim == 1 and np.ndim(y) == 1)
    if binary:
        margins = s * np.asarray(y, dtype=np.float64)
        err = margins <= 0.0
        return float(err) if np.ndim(err) == 0 else err.astype(np.float64)
    pred = np.argmax(s, axis=-1)
    err = pred != np.asarray(y, dtype=np.int64)
    return float(err) if np.ndim(err) == 0 else err.astype(np.float64)
