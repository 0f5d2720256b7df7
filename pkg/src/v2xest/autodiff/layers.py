"""Layers used by the estimators, all channels-last: sequences are
``(batch, length, features)``.

Weights are drawn ``U(-g/sqrt(fan_in), g/sqrt(fan_in))`` with ``g = INIT_GAIN``;
biases start at zero.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor

INIT_GAIN = 1.0

LAYER_KINDS = ("dense", "conv1d-dilated", "lstm", "multi-head-self-attention",
               "layer-norm", "batch-norm", "dropout", "relu")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = INIT_GAIN / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _check_last_dim(x: Tensor, expected: int, layer: str):
    if x.shape[-1] != expected:
        raise ValueError(f"{layer}: input shape {x.shape} does not match expected feature size {expected}")


class Module:
    """Parameter/buffer/child registry with train/eval mode."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())
        object.__setattr__(self, "training", True)
        object.__setattr__(self, "rng", None)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = np.asarray(value, dtype=np.float64)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def set_rng(self, rng: np.random.Generator):
        """Share one generator (used by dropout) across the module tree."""
        for m in self.modules():
            object.__setattr__(m, "rng", rng)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())
        for n, b in self.named_buffers():
            state["buffer:" + n] = b.copy()
        return state

    def load_state_dict(self, state: dict):
        params = dict(self.named_parameters())
        expected = set(params) | {"buffer:" + n for n, _ in self.named_buffers()}
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch; missing={missing} unexpected={extra}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != model shape {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)
        for m_prefix, module in self._walk(""):
            for bname in module._buffers:
                module._buffers[bname] = np.array(state["buffer:" + m_prefix + bname], dtype=np.float64)

    def _walk(self, prefix):
        yield prefix, self
        for cname, child in self._children.items():
            yield from child._walk(f"{prefix}{cname}.")

    def __call__(self, x, *args, **kwargs):
        return self.forward(T.as_tensor(x), *args, **kwargs)

    def forward(self, x):
        raise NotImplementedError


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        self.layers = list(layers)
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.weight = _uniform(rng, (n_in, n_out), n_in)
        self.bias = _zeros((n_out,))

    def forward(self, x: Tensor) -> Tensor:
        _check_last_dim(x, self.n_in, "dense")
        return x @ self.weight + self.bias


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class Dropout(Module):
    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        if self.rng is None:
            raise RuntimeError("dropout in train mode needs a generator; call set_rng()")
        keep = self.rng.random(x.shape) >= self.rate
        return T.dropout_mask(x, keep / (1.0 - self.rate))


class Conv1d(Module):
    """1-D convolution over the length axis.

    ``padding="causal"`` pads ``(k-1)*dilation`` on the low-index side only, so
    output position ``t`` sees inputs ``<= t``; ``"same"`` pads symmetrically
    (odd effective width) and keeps the length.
    """

    def __init__(self, n_in: int, n_out: int, kernel_size: int, rng: np.random.Generator,
                 dilation: int = 1, padding: str = "causal"):
        super().__init__()
        if kernel_size < 1 or dilation < 1:
            raise ValueError("kernel_size and dilation must be positive")
        if padding not in ("causal", "same"):
            raise ValueError(f"unknown padding {padding!r}")
        self.n_in, self.n_out = n_in, n_out
        self.kernel_size, self.dilation, self.padding = kernel_size, dilation, padding
        self.weight = _uniform(rng, (kernel_size * n_in, n_out), kernel_size * n_in)
        self.bias = _zeros((n_out,))

    @property
    def receptive_field(self) -> int:
        return (self.kernel_size - 1) * self.dilation + 1

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ValueError(f"conv1d expects (batch, length, channels), got {x.shape}")
        _check_last_dim(x, self.n_in, "conv1d")
        span = (self.kernel_size - 1) * self.dilation
        if self.padding == "causal":
            lo, hi = span, 0
        else:
            lo, hi = span // 2, span - span // 2
        cols = T.im2col(x, self.kernel_size, self.dilation, lo, hi) if self.kernel_size > 1 else x
        return cols @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.dim, self.eps = dim, eps
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = _zeros((dim,))

    def forward(self, x: Tensor) -> Tensor:
        _check_last_dim(x, self.dim, "layer-norm")
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gamma + self.beta


class BatchNorm1d(Module):
    """Normalizes the last (feature) axis with statistics over all other axes.

    Eval mode uses running estimates, making it a fixed affine map.
    """

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.dim, self.momentum, self.eps = dim, momentum, eps
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = _zeros((dim,))
        self.register_buffer("running_mean", np.zeros(dim))
        self.register_buffer("running_var", np.ones(dim))

    def forward(self, x: Tensor) -> Tensor:
        _check_last_dim(x, self.dim, "batch-norm")
        axes = tuple(range(x.ndim - 1))
        if self.training:
            mu = x.mean(axis=axes, keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=axes, keepdims=True)
            n = x.size // self.dim
            m = self.momentum
            self._buffers["running_mean"] = (1 - m) * self._buffers["running_mean"] + m * mu.data.ravel()
            unbiased = var.data.ravel() * n / max(n - 1, 1)
            self._buffers["running_var"] = (1 - m) * self._buffers["running_var"] + m * unbiased
            return xc / T.sqrt(var + self.eps) * self.gamma + self.beta
        scale = 1.0 / np.sqrt(self._buffers["running_var"] + self.eps)
        return (x - self._buffers["running_mean"]) * scale * self.gamma + self.beta


class LSTM(Module):
    """Single-layer LSTM; gate order i, f, g, o.  Returns all hidden states
    ``(batch, time, hidden)`` and the final ``(h, c)``."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.n_in, self.hidden = n_in, hidden
        self.weight = _uniform(rng, (n_in + hidden, 4 * hidden), hidden)
        self.bias = _zeros((4 * hidden,))

    def step(self, x_t: Tensor, h: Tensor, c: Tensor):
        H = self.hidden
        gates = T.concat([x_t, h], axis=-1) @ self.weight + self.bias
        i = T.sigmoid(gates[:, 0:H])
        f = T.sigmoid(gates[:, H:2 * H])
        g = T.tanh(gates[:, 2 * H:3 * H])
        o = T.sigmoid(gates[:, 3 * H:4 * H])
        c = f * c + i * g
        h = o * T.tanh(c)
        return h, c

    def initial_state(self, batch: int):
        return Tensor(np.zeros((batch, self.hidden))), Tensor(np.zeros((batch, self.hidden)))

    def forward(self, x: Tensor, state=None):
        if x.ndim != 3:
            raise ValueError(f"lstm expects (batch, time, features), got {x.shape}")
        _check_last_dim(x, self.n_in, "lstm")
        h, c = state if state is not None else self.initial_state(x.shape[0])
        outs = []
        for t in range(x.shape[1]):
            h, c = self.step(x[:, t, :], h, c)
            outs.append(h)
        return T.stack(outs, axis=1), (h, c)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads:
            raise ValueError(f"heads ({heads}) must divide dim ({dim})")
        self.dim, self.heads = dim, heads
        self.qkv = Dense(dim, 3 * dim, rng)
        self.proj = Dense(dim, dim, rng)
        self.last_weights: Optional[np.ndarray] = None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ValueError(f"attention expects (batch, tokens, dim), got {x.shape}")
        _check_last_dim(x, self.dim, "attention")
        b, n, _ = x.shape
        dh = self.dim // self.heads
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]  # (b, heads, n, dh)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
        weights = T.softmax(scores, axis=-1)
        object.__setattr__(self, "last_weights", weights.data)
        ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(b, n, self.dim)
        return self.proj(ctx)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    n_in: int = 0
    n_out: int = 0
    kernel_size: int = 1
    dilation: int = 1
    heads: int = 1
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dropout":
            if not 0.0 <= self.rate < 1.0:
                raise ValueError("dropout rate must be in [0, 1)")
        elif self.kind != "relu" and self.n_in <= 0:
            raise ValueError(f"{self.kind} needs a positive input size")
        if self.kind == "multi-head-self-attention" and (self.heads <= 0 or self.n_in % self.heads):
            raise ValueError(f"heads ({self.heads}) must divide hidden dim ({self.n_in})")


def build_layer(spec: LayerSpec, rng: np.random.Generator) -> Module:
    k = spec.kind
    if k == "dense":
        return Dense(spec.n_in, spec.n_out, rng)
    if k == "conv1d-dilated":
        return Conv1d(spec.n_in, spec.n_out, spec.kernel_size, rng, dilation=spec.dilation)
    if k == "lstm":
        return LSTM(spec.n_in, spec.n_out, rng)
    if k == "multi-head-self-attention":
        return MultiHeadSelfAttention(spec.n_in, spec.heads, rng)
    if k == "layer-norm":
        return LayerNorm(spec.n_in)
    if k == "batch-norm":
        return BatchNorm1d(spec.n_in)
    if k == "dropout":
        return Dropout(spec.rate)
    return ReLU()


def forward(layer: Module, x, mode: str = "eval") -> Tensor:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    layer.train(mode == "train")
    out = layer(T.as_tensor(x))
    return out[0] if isinstance(out, tuple) else out
