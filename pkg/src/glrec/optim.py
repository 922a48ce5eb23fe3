"""Adam optimizer, Gaussian initialization, and the L2 penalty term."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Tensor, add, square, sum_


class NanGradientError(FloatingPointError):
    """Raised when a gradient contains NaN; training must abort."""


@dataclass
class AdamState:
    """Per-parameter moment accumulators keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: list[tuple[str, Tensor]], state: AdamState, lr: float) -> None:
    """One Adam update with bias correction, in place on param data.

    Parameters with `.grad is None` are treated as zero-gradient. NaN in any
    gradient aborts with the offending parameter named.
    """
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    state.step += 1
    t = state.step
    b1, b2, eps = state.beta1, state.beta2, state.eps
    for name, p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if np.isnan(g).any():
            raise NanGradientError(f"NaN gradient in parameter {name!r} at step {t}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def gaussian_init(shape, rng: np.random.Generator, std: float = 0.01) -> Tensor:
    """Trainable tensor with i.i.d. N(0, std^2) entries."""
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def l2_penalty(params: list[tuple[str, Tensor]]) -> Tensor:
    """Sum of squared entries over all trainable parameters (differentiable)."""
    total = Tensor(0.0)
    for _, p in params:
        total = add(total, sum_(square(p)))
    return total
