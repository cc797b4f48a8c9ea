"""Classification and reconstruction losses as graph nodes."""

from __future__ import annotations

import numpy as np

from .. import diffmath as dm
from .model import Model, ModelError


class LossError(ValueError):
    pass


def _one_hot(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels).astype(np.int64).ravel()
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise LossError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def cross_entropy(logits: dm.Node, labels, n_classes: int) -> dm.Node:
    """Mean softmax cross-entropy of ``logits`` against integer labels."""
    onehot = _one_hot(labels, n_classes)
    lse = dm.logsumexp(logits, axis=1, keepdims=True)
    picked = (logits * onehot).sum(axis=1, keepdims=True)
    return (lse - picked).mean()


def classification_loss(model: Model, batches, labels, features=None) -> dm.Node:
    """Sum over domains of the per-domain mean cross-entropy.

    ``features`` may pass precomputed encoder nodes so the encoder graph is
    shared with the other loss terms.
    """
    if len(batches) != len(labels) or not batches:
        raise LossError("need one label vector per non-empty list of batches")
    feats = features or [model.encode(x) for x in batches]
    total = None
    for z, y in zip(feats, labels):
        term = cross_entropy(model.classify(z), y, model.n_classes)
        total = term if total is None else total + term
    return total


def reconstruction_loss(model: Model, batches, features=None) -> dm.Node:
    """Mean over domains and samples of ``||x - psi(f(x))||^2``."""
    if not model.has_decoder:
        raise ModelError("reconstruction loss needs a decoder")
    if not batches:
        raise LossError("need at least one batch")
    feats = features or [model.encode(x) for x in batches]
    total = None
    for x, z in zip(batches, feats):
        diff = model.decode(z) - dm._lift(np.asarray(x, dtype=np.float64))
        term = dm.square(diff).sum(axis=1).mean()
        total = term if total is None else total + term
    return total * (1.0 / len(batches))
