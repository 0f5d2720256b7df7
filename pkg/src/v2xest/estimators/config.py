"""Estimator hyperparameters.

``TUNED`` holds the tuned values per model and training regime, keyed by
row label; ``default_config`` turns a column of it into an
:class:`EstimatorConfig`.  Values not in the table (channel widths, FFN size,
weight decay, batch-norm placement) are fixed here.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace

from ..autodiff.layers import LayerSpec
from ..autodiff.optim import OptimizerSpec

NAMES = ("sta-mlp", "trfi-mlp", "tcn-dpa", "lstm-dpa-ta", "cnn-transformer")
REGIMES = ("mixed-snr", "high-snr-40db")

# row label -> (mixed SNR, 40 dB)
TUNED = {
    "cnn-transformer": {
        "Learning rate": (0.001, 0.001),
        "Transformer layers": (2, 4),
        "Number of attention heads": (2, 4),
        "Hidden dimension": (128, 128),
        "Dropout rate": (0.1, 0.25),
        "Number of epochs": (110, 200),
        "Number of CNN layers": (2, 4),
        "CNN kernel size": (3, 3),
    },
    "tcn-dpa": {
        "Learning rate": (0.0006, 0.003),
        "Number of Layers": (4, 4),
        "Kernel Size": (2, 2),
        "Dropout": (0.17, 0.01),
        "StepLR Step Size": (21, 17),
        "StepLR Gamma": (0.9, 0.8),
        "Epochs": (156, 100),
    },
    "sta-mlp": {
        "Learning rate": (0.001, 0.001),
        "Number of layers": (2, 3),
        "Size of hidden layer 0": (29, 15),
        "Size of hidden layer 1": (27, 15),
        "Size of hidden layer 2": (None, 15),
        "Total training epochs": (133, 300),
    },
    "trfi-mlp": {
        "Learning rate": (0.0004, 0.001),
        "Number of layers": (3, 3),
        "Size of hidden layer 0": (23, 15),
        "Size of hidden layer 1": (29, 15),
        "Size of hidden layer 2": (21, 15),
        "Total training epochs": (130, 160),
    },
    "lstm-dpa-ta": {
        "Learning rate": (0.004, 0.01),
        "LSTM size": (128, 128),
        "StepLR step size": (35, 10),
        "StepLR step gamma": (0.7, 0.8),
        "Training epochs": (160, 500),
    },
}

ADAMW_WEIGHT_DECAY = 0.01
TCN_CHANNELS = 32
FFN_MULTIPLIER = 2


@dataclass(frozen=True)
class EstimatorConfig:
    name: str
    regime: str
    optimizer: OptimizerSpec
    hidden_sizes: tuple = ()  # MLP widths
    n_layers: int = 0  # TCN levels or transformer encoder layers
    kernel_size: int = 0  # TCN or CNN kernel
    dropout: float = 0.0
    hidden_dim: int = 0  # transformer model width, LSTM size or TCN channels
    heads: int = 0
    cnn_layers: int = 0
    ffn_dim: int = 0
    batch_norm: bool = False
    positional: bool = True
    lstm_include_rx: bool = False
    sta_alpha: float = 2.0
    sta_beta: int = 2
    ta_alpha: float = 2.0
    n_data_symbols: int = 50

    def __post_init__(self):
        if self.name not in NAMES:
            raise ValueError(f"unknown estimator {self.name!r}; expected one of {NAMES}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")

    @property
    def epochs(self) -> int:
        return self.optimizer.max_epochs

    @property
    def learning_rate(self) -> float:
        return self.optimizer.learning_rate

    @property
    def layers(self) -> list:
        """Architecture as a flat LayerSpec list (documentation/inspection)."""
        if self.name in ("sta-mlp", "trfi-mlp"):
            specs, n_in = [], 104
            for width in self.hidden_sizes:
                specs += [LayerSpec("dense", n_in, width), LayerSpec("relu")]
                n_in = width
            return specs + [LayerSpec("dense", n_in, 104)]
        if self.name == "tcn-dpa":
            specs, n_in = [], 4
            for level in range(self.n_layers):
                specs += [LayerSpec("conv1d-dilated", n_in, self.hidden_dim, self.kernel_size, 2 ** level),
                          LayerSpec("relu"), LayerSpec("dropout", rate=self.dropout)]
                n_in = self.hidden_dim
            return specs + [LayerSpec("dense", n_in, 2)]
        if self.name == "lstm-dpa-ta":
            n_in = 208 if self.lstm_include_rx else 104
            return [LayerSpec("lstm", n_in, self.hidden_dim), LayerSpec("dense", self.hidden_dim, 104)]
        d = self.hidden_dim
        specs = []
        n_in = 102
        for _ in range(self.cnn_layers):
            specs.append(LayerSpec("conv1d-dilated", n_in, d, self.kernel_size))
            if self.batch_norm:
                specs.append(LayerSpec("batch-norm", d))
            specs.append(LayerSpec("relu"))
            n_in = d
        if not self.cnn_layers:
            specs.append(LayerSpec("dense", n_in, d))
        for _ in range(self.n_layers):
            specs += [LayerSpec("layer-norm", d), LayerSpec("multi-head-self-attention", d, heads=self.heads),
                      LayerSpec("dropout", rate=self.dropout), LayerSpec("layer-norm", d),
                      LayerSpec("dense", d, self.ffn_dim), LayerSpec("relu"),
                      LayerSpec("dense", self.ffn_dim, d), LayerSpec("dropout", rate=self.dropout)]
        return specs + [LayerSpec("layer-norm", d), LayerSpec("dense", d, 100)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"]["betas"] = list(d["optimizer"]["betas"])
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        d = dict(d)
        opt = dict(d.pop("optimizer"))
        opt["betas"] = tuple(opt.get("betas", (0.9, 0.999)))
        d["hidden_sizes"] = tuple(d.get("hidden_sizes", ()))
        return cls(optimizer=OptimizerSpec(**opt), **d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "EstimatorConfig":
        opt_keys = {k: kwargs.pop(k) for k in list(kwargs) if k in OptimizerSpec.__dataclass_fields__}
        cfg = replace(self, **kwargs)
        if opt_keys:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, **opt_keys))
        return cfg


def _col(regime: str) -> int:
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    return REGIMES.index(regime)


def default_config(name: str, regime: str = "mixed-snr") -> EstimatorConfig:
    if name not in TUNED:
        raise ValueError(f"unknown estimator {name!r}; expected one of {NAMES}")
    c = _col(regime)
    row = {label: vals[c] for label, vals in TUNED[name].items()}
    if name == "cnn-transformer":
        d = row["Hidden dimension"]
        return EstimatorConfig(
            name, regime,
            OptimizerSpec("adamw", row["Learning rate"], weight_decay=ADAMW_WEIGHT_DECAY,
                          batch_size=16, max_epochs=row["Number of epochs"]),
            n_layers=row["Transformer layers"], heads=row["Number of attention heads"],
            hidden_dim=d, dropout=row["Dropout rate"], cnn_layers=row["Number of CNN layers"],
            kernel_size=row["CNN kernel size"], ffn_dim=FFN_MULTIPLIER * d, batch_norm=True)
    if name == "tcn-dpa":
        return EstimatorConfig(
            name, regime,
            OptimizerSpec("adam", row["Learning rate"], step_size=row["StepLR Step Size"],
                          gamma=row["StepLR Gamma"], batch_size=128, max_epochs=row["Epochs"]),
            n_layers=row["Number of Layers"], kernel_size=row["Kernel Size"], dropout=row["Dropout"],
            hidden_dim=TCN_CHANNELS)
    if name in ("sta-mlp", "trfi-mlp"):
        n = row["Number of layers"]
        sizes = tuple(row[f"Size of hidden layer {i}"] for i in range(n))
        return EstimatorConfig(
            name, regime,
            OptimizerSpec("adam", row["Learning rate"], batch_size=128, max_epochs=row["Total training epochs"]),
            hidden_sizes=sizes)
    return EstimatorConfig(
        name, regime,
        OptimizerSpec("adam", row["Learning rate"], step_size=row["StepLR step size"],
                      gamma=row["StepLR step gamma"], batch_size=128, max_epochs=row["Training epochs"]),
        hidden_dim=row["LSTM size"])


def scale_epochs(cfg: EstimatorConfig, ratio: float) -> EstimatorConfig:
    """Shrink the epoch budget (and StepLR period, keeping the schedule's
    shape) by ``ratio``, rounding up."""
    opt = cfg.optimizer
    epochs = max(1, math.ceil(opt.max_epochs * ratio))
    step = None if opt.step_size is None else max(1, math.ceil(opt.step_size * ratio))
    return replace(cfg, optimizer=replace(opt, max_epochs=epochs, step_size=step))
