from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)


def adamw_step(params: list[Tensor], grads: list[np.ndarray], state: AdamWState) -> AdamWState:
    """Apply one AdamW update in place and return the (mutated) state.

    Weight decay is decoupled: weights shrink by ``lr * weight_decay`` before
    the bias-corrected Adam step, independent of the gradient.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {p.name or 'parameter'}")
    if not state.exp_avg:
        state.exp_avg = [np.zeros_like(p.data) for p in params]
        state.exp_avg_sq = [np.zeros_like(p.data) for p in params]
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def step_lr(base_lr: float, epoch: int, step_size: int, gamma: float) -> float:
    if step_size < 1:
        raise ValueError("step_size must be >= 1")
    return base_lr * gamma ** math.floor(epoch / step_size)
