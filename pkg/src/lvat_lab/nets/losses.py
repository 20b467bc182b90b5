"""Probabilistic losses: softmax, cross-entropy, categorical KL and Gaussian KL.

All batch reductions are means over the leading axis and KL values are in nats.
"""

from typing import Any, Literal

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor, as_tensor
from ..exceptions import DataError, NonFiniteError, ShapeError

Reduction = Literal["mean", "none"]


def _check_logits(name: str, logits: Tensor) -> None:
    if logits.ndim != 2:
        raise ShapeError(f"{name} expects (B, K) logits, got shape {logits.shape}")
    if logits.shape[1] < 2:
        raise ShapeError(f"{name} needs at least 2 classes, got {logits.shape[1]}")
    if not logits.is_finite:
        raise NonFiniteError(f"{name} received non-finite logits")


def softmax(logits: Any) -> Tensor:
    """Row-wise class probabilities."""
    logits = as_tensor(logits)
    _check_logits("softmax", logits)
    return T.softmax(logits, axis=1)


def log_softmax(logits: Any) -> Tensor:
    """Row-wise log class probabilities."""
    logits = as_tensor(logits)
    _check_logits("log_softmax", logits)
    return T.log_softmax(logits, axis=1)


def onehot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """One-hot float matrix for integer labels."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"Labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"Labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels.astype(np.int64)] = 1.0
    return out


def cross_entropy(logits: Any, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    logits = as_tensor(logits)
    _check_logits("cross_entropy", logits)
    targets = onehot(labels, logits.shape[1])
    if targets.shape[0] != logits.shape[0]:
        raise ShapeError(f"{targets.shape[0]} labels for {logits.shape[0]} rows of logits")
    picked = T.reduce_sum(T.mul(T.log_softmax(logits, axis=1), targets), axis=1)
    return T.neg(T.reduce_mean(picked))


def kl_categorical(p_logits: Any, q_logits: Any, reduction: Reduction = "mean") -> Tensor:
    """KL(softmax(p) || softmax(q)) per row, averaged over the batch.

    Args:
        p_logits: Logits of the reference distribution. Pass a detached tensor to treat
            it as a fixed target.
        q_logits: Logits of the compared distribution.
        reduction: ``"mean"`` for a scalar, ``"none"`` for per-row values.

    Returns:
        Scalar (or (B,)) tensor of KL values in nats.
    """
    p_logits, q_logits = as_tensor(p_logits), as_tensor(q_logits)
    _check_logits("kl_categorical", p_logits)
    _check_logits("kl_categorical", q_logits)
    if p_logits.shape != q_logits.shape:
        raise ShapeError(f"kl_categorical shapes differ: {p_logits.shape} vs {q_logits.shape}")
    log_p = T.log_softmax(p_logits, axis=1)
    log_q = T.log_softmax(q_logits, axis=1)
    per_row = T.reduce_sum(T.mul(T.exp(log_p), T.sub(log_p, log_q)), axis=1)
    if reduction == "none":
        return per_row
    return T.reduce_mean(per_row)


def gaussian_kl(mu: Any, log_var: Any) -> Tensor:
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over dimensions, mean over batch."""
    mu, log_var = as_tensor(mu), as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ShapeError(f"gaussian_kl shapes differ: {mu.shape} vs {log_var.shape}")
    if mu.ndim != 2:
        raise ShapeError(f"gaussian_kl expects (B, d) inputs, got {mu.shape}")
    if not (mu.is_finite and log_var.is_finite):
        raise NonFiniteError("gaussian_kl received non-finite inputs")
    terms = T.sub(T.sub(T.add(T.square(mu), T.exp(log_var)), 1.0), log_var)
    return T.reduce_mean(T.mul(0.5, T.reduce_sum(terms, axis=1)))
