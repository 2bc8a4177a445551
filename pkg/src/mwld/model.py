"""Logistic regression with log loss, zero-one loss and analytic gradients.

Weights carry the intercept as their final coordinate. Predicted
probabilities are clipped to ``[PROB_CLIP, 1 - PROB_CLIP]`` so the log loss
never exceeds :data:`LOG_LOSS_BOUND`, the loss bound used by the MWLD and
variance bookkeeping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import check_labels

PROB_CLIP = 1e-12
LOG_LOSS_BOUND = -math.log(PROB_CLIP)


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size < 1:
            raise ValueError("a model needs at least the intercept weight")
        if not np.all(np.isfinite(w)):
            raise ValueError("model weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, n_features: int) -> "LinearModel":
        return cls(np.zeros(n_features + 1))

    @property
    def n_features(self) -> int:
        return self.weights.size - 1


def augment(features) -> np.ndarray:
    """Append the constant intercept column."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        return np.append(x, 1.0)
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _scores(model: LinearModel, features) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got {x.shape[-1]}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    xa = augment(x)
    return xa @ model.weights, xa


def predict_probability(model: LinearModel, features):
    """Probability of label 1 (unclipped sigmoid of the affine score)."""
    s, _ = _scores(model, features)
    return expit(s)


def _clipped(p):
    return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)


def log_losses_from_scores(scores: np.ndarray, y: np.ndarray):
    """Per-sample clipped log loss and its derivative with respect to the score."""
    p = expit(scores)
    pc = _clipped(p)
    loss = -y * np.log(pc) - (1 - y) * np.log1p(-pc)
    # the clipped loss is flat where the clip is active
    active = (p > PROB_CLIP) & (p < 1.0 - PROB_CLIP)
    dscore = np.where(active, p - y, 0.0)
    return loss, dscore


def log_loss(model: LinearModel, features, labels):
    """Clipped log loss; scalar for one sample, array for a feature matrix."""
    s, _ = _scores(model, features)
    y = check_labels(np.atleast_1d(labels), np.size(s))
    loss, _ = log_losses_from_scores(np.atleast_1d(s), y)
    return float(loss[0]) if np.ndim(s) == 0 else loss


def log_loss_gradient(model: LinearModel, features, labels) -> np.ndarray:
    """Gradient of :func:`log_loss` with respect to the weights.

    ``(p - y) * [x, 1]`` for one sample, or one row per sample.
    """
    s, xa = _scores(model, features)
    y = check_labels(np.atleast_1d(labels), np.size(s))
    _, dscore = log_losses_from_scores(np.atleast_1d(s), y)
    if np.ndim(s) == 0:
        return dscore[0] * xa
    return dscore[:, None] * xa


def zero_one_loss(model: LinearModel, features, labels):
    """1 where the thresholded prediction disagrees with the label.

    Probabilities of exactly 0.5 are classified as 1.
    """
    p = predict_probability(model, features)
    y = check_labels(np.atleast_1d(labels), np.size(p))
    wrong = ((np.atleast_1d(p) >= 0.5).astype(np.int64) != y).astype(np.int64)
    return int(wrong[0]) if np.ndim(p) == 0 else wrong
