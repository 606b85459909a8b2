"""Activation functions used by the classifier heads."""

from __future__ import annotations

import numpy as np


def relu(x):
    """max(0, x); passes positive inputs through unchanged."""
    return np.maximum(0, x)


def sigmoid(x):
    """1 / (1 + e^-x), the logistic squashing to (0, 1)."""
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def softmax(v) -> np.ndarray:
    """Exp-normalize with max subtraction for overflow safety.

    Accepts a vector or a batch of row vectors; rows sum to 1.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax input must be non-empty")
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
