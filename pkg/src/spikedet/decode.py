"""Spike-train decoding: count, rate, and membrane-potential accumulation.

Each decoder reduces the leading time axis of a [T, ...] train. Decoders
accept either plain numpy arrays or autograd Tensors stacked as a list of
per-step Tensors; the Tensor path keeps gradients flowing into the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, elementwise_add, scalar_mul

__all__ = [
    "DecodedTensor",
    "decode_count",
    "decode_rate",
    "decode_membrane",
    "decode_train",
    "STRATEGIES",
]

STRATEGIES = ("count", "rate", "membrane")


@dataclass(frozen=True)
class DecodedTensor:
    data: np.ndarray
    strategy: str


def _validate(train: np.ndarray) -> np.ndarray:
    train = np.asarray(train, dtype=np.float64)
    if train.ndim < 1 or train.shape[0] < 1:
        raise ValueError("spike train needs a leading time axis with T >= 1")
    return train


def decode_count(train: np.ndarray) -> DecodedTensor:
    """Sum of spikes over the time axis; range [0, T] for binary trains."""
    train = _validate(train)
    return DecodedTensor(train.sum(axis=0), "count")


def decode_rate(train: np.ndarray) -> DecodedTensor:
    """Spike count divided by T; range [0, 1] for binary trains."""
    train = _validate(train)
    return DecodedTensor(train.sum(axis=0) / train.shape[0], "rate")


def decode_membrane(final_layer_currents: np.ndarray, tau: float, v_reset: float = 0.0) -> DecodedTensor:
    """Leaky accumulation with firing disabled; returns the final potential.

    V <- V + (1/tau) * (X_t - (V - v_reset)), no threshold, no reset.
    """
    currents = _validate(final_layer_currents)
    if tau <= 0:
        raise ValueError("tau must be positive")
    v = np.full(currents.shape[1:], v_reset, dtype=np.float64)
    inv_tau = 1.0 / tau
    for step in currents:
        v = v + inv_tau * (step - (v - v_reset))
    return DecodedTensor(v, "membrane")


def decode_train(steps: list[Tensor], strategy: str) -> Tensor:
    """Differentiable decode of a list of per-step Tensors."""
    if strategy not in ("count", "rate"):
        raise ValueError(f"decode_train supports count/rate, got {strategy!r}")
    if not steps:
        raise ValueError("empty spike train")
    total = steps[0]
    for s in steps[1:]:
        total = elementwise_add(total, s)
    if strategy == "rate":
        total = scalar_mul(total, 1.0 / len(steps))
    return total
