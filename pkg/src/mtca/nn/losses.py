from __future__ import annotations

import numpy as np

from .tensor import Tensor, _result


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over every real-valued entry."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch in mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    n = diff.size
    return _result(np.asarray(np.mean(diff * diff)), (pred,), lambda g: (g * 2.0 * diff / n,))


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Batch mean of ``-log softmax(logits)[label]``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"expected batch x C logits and batch labels, got {logits.shape}, {labels.shape}")
    n_cls = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_cls):
        raise ValueError(f"labels must lie in [0, {n_cls})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(labels.size)
    loss = np.mean(log_norm - z[rows, labels])

    def backward(g):
        d = softmax(logits.data)
        d[rows, labels] -= 1.0
        return (g * d / labels.size,)

    return _result(np.asarray(loss), (logits,), backward)
