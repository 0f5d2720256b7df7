from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    step_size: Optional[int] = None  # StepLR period in epochs; None = constant rate
    gamma: float = 1.0
    batch_size: int = 128
    max_epochs: int = 100
    early_stop_patience: int = 20  # 0 disables early stopping
    min_delta: float = 1e-6
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "adamw"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.step_size is not None and self.step_size < 1:
            raise ValueError("step_size must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")


def learning_rate_at(spec: OptimizerSpec, epoch: int) -> float:
    """StepLR: multiply by ``gamma`` every ``step_size`` epochs (epoch is 0-based)."""
    if spec.step_size is None:
        return spec.learning_rate
    return spec.learning_rate * spec.gamma ** (epoch // spec.step_size)


def adam_update(param, grad, m, v, step_index: int, lr: float, betas=(0.9, 0.999),
                eps: float = 1e-8, weight_decay: float = 0.0):
    """One bias-corrected Adam step; ``weight_decay`` is decoupled (AdamW).

    Returns new ``(param, m, v)`` without mutating the inputs.
    """
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    b1, b2 = betas
    if weight_decay:
        param = param * (1.0 - lr * weight_decay)
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step_index)
    v_hat = v / (1.0 - b2 ** step_index)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, params, spec: OptimizerSpec):
        self.params = list(params)
        self.spec = spec
        self.lr = spec.learning_rate
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def weight_decay(self) -> float:
        return self.spec.weight_decay if self.spec.kind == "adamw" else 0.0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for j, p in enumerate(self.params):
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data, self.m[j], self.v[j] = adam_update(
                p.data, grad, self.m[j], self.v[j], self.t, self.lr,
                self.spec.betas, self.spec.eps, self.weight_decay)


def optimizer_step(spec: OptimizerSpec, params, grads, state, step_index: int, epoch: int = 0):
    """Functional form of :class:`Adam`. ``state`` is a list of ``(m, v)``
    pairs (zeros before the first step); returns ``(params, state)``."""
    lr = learning_rate_at(spec, epoch)
    wd = spec.weight_decay if spec.kind == "adamw" else 0.0
    new_params, new_state = [], []
    for p, g, (m, v) in zip(params, grads, state):
        p, m, v = adam_update(p, g, m, v, step_index, lr, spec.betas, spec.eps, wd)
        new_params.append(p)
        new_state.append((m, v))
    return new_params, new_state
