"""Network bodies of the five estimators.

Each network is residual around the estimate it refines: it emits a
correction that is added to its base input, so a zeroed output layer turns
the network into the identity on that estimate.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.layers import (LSTM, BatchNorm1d, Conv1d, Dense, Dropout, LayerNorm, Module,
                               MultiHeadSelfAttention)
from ..autodiff.tensor import Tensor
from .config import EstimatorConfig


class MLPRefiner(Module):
    """104 -> hidden... -> 104, applied to one interleaved channel column."""

    def __init__(self, cfg: EstimatorConfig, rng: np.random.Generator):
        super().__init__()
        widths = (104,) + tuple(cfg.hidden_sizes)
        self.hidden = [Dense(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        for i, layer in enumerate(self.hidden):
            setattr(self, f"hidden{i}", layer)
        self.out = Dense(widths[-1], 104, rng)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        z = x
        for layer in self.hidden:
            z = T.relu(layer(z))
        return x + self.out(z)

    def output_layer(self) -> Dense:
        return self.out


class TCN(Module):
    """Causal dilated convolutions over the 52 subcarriers.

    Input ``(batch, 52, 4)``: previous estimate (re, im) and received symbol
    (re, im).  Output ``(batch, 52, 2)``: refined estimate.
    """

    def __init__(self, cfg: EstimatorConfig, rng: np.random.Generator):
        super().__init__()
        c = cfg.hidden_dim
        self.levels = []
        for level in range(cfg.n_layers):
            n_in = 4 if level == 0 else c
            conv = Conv1d(n_in, c, cfg.kernel_size, rng, dilation=2 ** level, padding="causal")
            skip = Conv1d(n_in, c, 1, rng) if n_in != c else None
            self.levels.append((conv, skip))
            setattr(self, f"conv{level}", conv)
            if skip is not None:
                setattr(self, f"skip{level}", skip)
        self.drop = Dropout(cfg.dropout)
        self.out = Dense(c if cfg.n_layers else 4, 2, rng)

    @property
    def receptive_field(self) -> int:
        return 1 + sum((conv.kernel_size - 1) * conv.dilation for conv, _ in self.levels)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        z = x
        for conv, skip in self.levels:
            res = z if skip is None else skip(z)
            z = self.drop(T.relu(conv(z))) + res
        return x[:, :, 0:2] + self.out(z)

    def output_layer(self) -> Dense:
        return self.out


class LSTMNet(Module):
    """LSTM over OFDM symbols; each step sees the previous estimate (104 reals,
    optionally followed by the 104-real received symbol) and proposes the
    current estimate."""

    def __init__(self, cfg: EstimatorConfig, rng: np.random.Generator):
        super().__init__()
        n_in = 208 if cfg.lstm_include_rx else 104
        self.lstm = LSTM(n_in, cfg.hidden_dim, rng)
        self.out = Dense(cfg.hidden_dim, 104, rng)

    def forward(self, x) -> Tensor:
        """Teacher-forced sequence ``(batch, time, n_in)`` -> ``(batch, time, 104)``."""
        x = T.as_tensor(x)
        hs, _ = self.lstm(x)
        return x[:, :, 0:104] + self.out(hs)

    def step(self, x_t, state):
        """One free-running step: ``(batch, n_in)`` -> ``((batch, 104), state)``."""
        x_t = T.as_tensor(x_t)
        if state is None:
            state = self.lstm.initial_state(x_t.shape[0])
        h, c = self.lstm.step(x_t, *state)
        return x_t[:, 0:104] + self.out(h), (h, c)

    def output_layer(self) -> Dense:
        return self.out


class EncoderLayer(Module):
    """Pre-norm transformer encoder block."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ff1 = Dense(dim, ffn_dim, rng)
        self.ff2 = Dense(ffn_dim, dim, rng)
        self.drop = Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.drop(self.attn(self.norm1(x)))
        return x + self.drop(self.ff2(T.relu(self.ff1(self.norm2(x)))))


class CNNTransformer(Module):
    """Subcarriers as tokens.  Input ``(batch, 52, 102)``: the 100 interleaved
    received data columns followed by the preamble LS estimate (re, im).
    Output ``(batch, 52, 100)``: interleaved estimate for all 50 data symbols,
    as a correction on the held LS estimate."""

    def __init__(self, cfg: EstimatorConfig, rng: np.random.Generator, n_tokens: int = 52):
        super().__init__()
        d = cfg.hidden_dim
        self.n_out = 2 * cfg.n_data_symbols
        n_in = self.n_out + 2
        self.convs = []
        for i in range(cfg.cnn_layers):
            conv = Conv1d(n_in if i == 0 else d, d, cfg.kernel_size, rng, padding="same")
            bn = BatchNorm1d(d) if cfg.batch_norm else None
            self.convs.append((conv, bn))
            setattr(self, f"conv{i}", conv)
            if bn is not None:
                setattr(self, f"bn{i}", bn)
        self.embed = Dense(n_in, d, rng) if not cfg.cnn_layers else None
        self.pos = Tensor(rng.normal(0.0, 0.02, size=(n_tokens, d)), requires_grad=True) if cfg.positional else None
        self.blocks = [EncoderLayer(d, cfg.heads, cfg.ffn_dim, cfg.dropout, rng) for _ in range(cfg.n_layers)]
        for i, blk in enumerate(self.blocks):
            setattr(self, f"block{i}", blk)
        self.norm = LayerNorm(d)
        self.out = Dense(d, self.n_out, rng)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim != 3 or x.shape[-1] != self.n_out + 2:
            raise ValueError(f"cnn-transformer expects (batch, tokens, {self.n_out + 2}), got {x.shape}")
        z = x
        for conv, bn in self.convs:
            z = conv(z)
            if bn is not None:
                z = bn(z)
            z = T.relu(z)
        if self.embed is not None:
            z = self.embed(z)
        if self.pos is not None:
            z = z + self.pos
        for blk in self.blocks:
            z = blk(z)
        base = T.concat([x[:, :, self.n_out:self.n_out + 2]] * (self.n_out // 2), axis=-1)
        return base + self.out(self.norm(z))

    def output_layer(self) -> Dense:
        return self.out


NETWORKS = {
    "sta-mlp": MLPRefiner,
    "trfi-mlp": MLPRefiner,
    "tcn-dpa": TCN,
    "lstm-dpa-ta": LSTMNet,
    "cnn-transformer": CNNTransformer,
}


def build_network(cfg: EstimatorConfig, seed: int) -> Module:
    """Fresh network whose output layer starts at zero, so training begins
    from the classical estimate it refines."""
    rng = np.random.default_rng([seed, list(NETWORKS).index(cfg.name)])
    return zero_output(NETWORKS[cfg.name](cfg, rng))


def zero_output(net: Module) -> Module:
    """Zero the final layer so the network is the identity on its base estimate."""
    out = net.output_layer()
    out.weight.data[...] = 0.0
    out.bias.data[...] = 0.0
    return net
