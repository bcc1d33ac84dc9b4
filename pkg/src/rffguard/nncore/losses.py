"""Losses returning ``(value, gradient)`` pairs; batch losses are batch means."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument, ShapeError


def log_softmax(z, axis: int = -1):
    z = np.asarray(z)
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(z, axis: int = -1):
    return np.exp(log_softmax(z, axis))


def sparse_ce_loss(logits, labels, l2_terms: float = 0.0):
    """Mean sparse categorical cross-entropy plus an L2 penalty.

    Accepts a single logit vector with an integer label, or a batch
    ``(B, k)`` with ``B`` labels. The gradient is w.r.t. the logits and
    excludes the L2 part (layers add ``2*l2*w`` themselves).
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    y = np.atleast_1d(np.asarray(labels))
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidArgument("labels must be integers")
    if y.shape != (z.shape[0],):
        raise ShapeError(f"{z.shape[0]} logit rows but labels shape {y.shape}")
    k = z.shape[1]
    if np.any((y < 0) | (y >= k)):
        raise InvalidArgument(f"label outside [0, {k})")
    logp = log_softmax(z.astype(np.float64))
    rows = np.arange(len(y))
    loss = -logp[rows, y].mean() + l2_terms
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    grad /= len(y)
    grad = grad.astype(logits.dtype)
    return float(loss), (grad[0] if single else grad)


def mse_loss(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff.astype(np.float64) ** 2)), (2.0 * diff / diff.size).astype(pred.dtype)


def feature_matching_loss(real_feats, fake_feats):
    """Squared distance between batch-mean features; gradient is w.r.t. ``fake_feats``."""
    real = np.asarray(real_feats)
    fake = np.asarray(fake_feats)
    if real.shape[1:] != fake.shape[1:]:
        raise ShapeError(f"feature shapes differ: {real.shape} vs {fake.shape}")
    diff = real.mean(axis=0) - fake.mean(axis=0)
    loss = float(np.sum(diff.astype(np.float64) ** 2))
    grad = np.broadcast_to(-2.0 * diff / fake.shape[0], fake.shape).astype(fake.dtype)
    return loss, grad
