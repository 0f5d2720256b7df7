"""Channel-estimation pipelines wrapping the networks.

Per-symbol estimators (MLP, TCN, LSTM) are trained teacher-forced: the
estimate carried in from the previous symbol is replaced by the true channel
of that symbol, and the classical backbone step (DPA, STA or TRFI) is run
from there to form the input.  The target is the true channel of the
current data symbol.  At evaluation they
run free, feeding their own estimates forward.  All pipelines take a batch
of received frames ``(F, 52, 52)`` and return ``(F, 52, 50)`` estimates.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..autodiff.train import train_loop
from ..classical import (EstimateGrid, StaParams, dpa_step, preamble_estimate,
                         sta_symbol, temporal_average, trfi_symbol)
from ..phy import N_PREAMBLE, N_SUB
from .config import EstimatorConfig
from .networks import build_network

log = logging.getLogger(__name__)

EVAL_CHUNK = 256


def interleave(frame) -> np.ndarray:
    """Complex ``(..., 52, N)`` -> real ``(..., 52, 2N)``; column ``2t`` is the
    real part of symbol ``t`` and column ``2t+1`` its imaginary part."""
    frame = np.asarray(frame)
    return np.stack([frame.real, frame.imag], axis=-1).reshape(*frame.shape[:-1], 2 * frame.shape[-1])


def deinterleave(mat) -> np.ndarray:
    mat = np.asarray(mat)
    pairs = mat.reshape(*mat.shape[:-1], mat.shape[-1] // 2, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def _one_step_dpa(rx, h) -> np.ndarray:
    """Teacher-forced previous estimates for symbol-recursive models.

    Entry ``i`` is what the recursion would carry into data symbol ``i`` if
    its estimate for symbol ``i-1`` had been the true channel: the preamble LS
    estimate for ``i = 0``, else one DPA update of symbol ``i-1`` from the
    true channel.  This keeps per-symbol decision noise but not the
    unbounded error build-up of a free-running classical tracker.
    """
    data = rx[..., N_PREAMBLE:]
    h_data = np.asarray(h)[..., N_PREAMBLE:N_PREAMBLE + data.shape[-1]]
    steps, _ = dpa_step(data[..., :-1], h_data[..., :-1])
    return np.concatenate([preamble_estimate(rx)[..., None], steps], axis=-1)


def _as_frames(rx) -> np.ndarray:
    rx = np.asarray(rx)
    if rx.ndim == 2:
        rx = rx[None]
    if rx.ndim != 3 or rx.shape[1] != N_SUB:
        raise ValueError(f"expected received frames (F, {N_SUB}, n_sym), got {rx.shape}")
    return rx


class NeuralEstimator:
    """A network plus the pipeline that turns received frames into estimates."""

    def __init__(self, config: EstimatorConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.net = build_network(config, seed)
        self.net.eval()
        self.trained = False

    @property
    def name(self) -> str:
        return self.config.name

    # subclasses ------------------------------------------------------------

    def training_pairs(self, rx, h) -> tuple:
        raise NotImplementedError

    def _estimate(self, rx) -> EstimateGrid:
        raise NotImplementedError

    # shared ------------------------------------------------------------------

    def _check_frames(self, rx):
        rx = _as_frames(rx)
        need = N_PREAMBLE + self.config.n_data_symbols
        if rx.shape[-1] < need:
            raise ValueError(f"frame has {rx.shape[-1]} symbols; {self.name} needs {need}")
        return rx[..., :need]

    def estimate(self, rx, allow_untrained: bool = False) -> EstimateGrid:
        if not (self.trained or allow_untrained):
            raise RuntimeError(f"{self.name}: model is untrained; train it or load a checkpoint")
        rx = self._check_frames(rx)
        self.net.eval()
        parts, flags = [], []
        with T.no_grad():
            for start in range(0, rx.shape[0], EVAL_CHUNK):
                grid = self._estimate(rx[start:start + EVAL_CHUNK])
                parts.append(grid.h_hat)
                flags.append(grid.flagged)
        flagged = None if any(f is None for f in flags) else np.concatenate(flags)
        return EstimateGrid(np.concatenate(parts), self.name, flagged)

    def fit(self, train, val, seed: int | None = None):
        """``train``/``val`` are ``(rx, h)`` pairs of frame arrays."""
        x_tr, y_tr = self.training_pairs(*train)
        x_va, y_va = self.training_pairs(*val)
        seed = self.seed if seed is None else seed
        _, hist = train_loop(self.net, (x_tr, y_tr), (x_va, y_va), self.config.optimizer, seed)
        self.trained = True
        log.info("%s/%s trained %d epochs, best val %.3e", self.name, self.config.regime,
                 hist.epochs_run, min(hist.val_loss))
        return hist

    def training_nmse(self, rx, h) -> float:
        """NMSE of the network output against its target on teacher-forced pairs."""
        x, y = self.training_pairs(rx, h)
        self.net.eval()
        err = ref = 0.0
        with T.no_grad():
            for start in range(0, len(x), 1024):
                pred = self.net(x[start:start + 1024]).data
                err += float(np.sum((pred - y[start:start + 1024]) ** 2))
                ref += float(np.sum(y[start:start + 1024] ** 2))
        return err / ref

    def save(self, path, extra_meta: dict | None = None):
        meta = {"estimator": self.name, "regime": self.config.regime,
                "config_hash": self.config.config_hash(), "seed": self.seed,
                "config": self.config.to_dict()}
        meta.update(extra_meta or {})
        save_checkpoint(Path(path), self.net.state_dict(), meta)

    @classmethod
    def load(cls, path, config: EstimatorConfig | None = None) -> "NeuralEstimator":
        state, meta = load_checkpoint(path)
        stored = EstimatorConfig.from_dict(meta["config"])
        if config is not None and config.config_hash() != meta["config_hash"]:
            raise ValueError(f"{path}: checkpoint config hash {meta['config_hash']} does not match "
                             f"requested config {config.config_hash()}")
        est = make_estimator(stored, seed=meta.get("seed", 0))
        est.net.load_state_dict(state)
        est.net.eval()
        est.trained = True
        return est


def _columns(grid: np.ndarray) -> np.ndarray:
    """(F, 52, n) complex -> (F, n, 104) reals, (re, im) per subcarrier."""
    cols = np.swapaxes(grid, -1, -2)
    return np.stack([cols.real, cols.imag], axis=-1).reshape(*cols.shape[:-1], 2 * N_SUB)


def _column_to_complex(x: np.ndarray) -> np.ndarray:
    pairs = x.reshape(*x.shape[:-1], N_SUB, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


class MLPEstimator(NeuralEstimator):
    """STA-MLP / TRFI-MLP: DPA -> STA or TRFI -> MLP per data symbol, with the
    refined column carried into the next symbol's equalization."""

    @property
    def backbone(self) -> str:
        return "STA" if self.name == "sta-mlp" else "TRFI"

    @property
    def sta_params(self) -> StaParams:
        return StaParams(self.config.sta_alpha, self.config.sta_beta)

    def training_pairs(self, rx, h):
        # the refined column carried into symbol i stands in for the true
        # channel of symbol i-1 (the preamble estimate for i = 0)
        rx = self._check_frames(rx)
        data = rx[..., N_PREAMBLE:]
        n = data.shape[-1]
        h_data = np.asarray(h)[..., N_PREAMBLE:N_PREAMBLE + n]
        carried = np.concatenate([preamble_estimate(rx)[..., None], h_data[..., :-1]], axis=-1)
        base = np.empty(data.shape, dtype=complex)
        h_dpa_prev = None
        for i in range(n):
            if self.backbone == "STA":
                base[..., i] = sta_symbol(data[..., i], carried[..., i], self.sta_params)
            else:
                y_prev = data[..., i - 1] if i else None
                base[..., i], h_dpa_prev, _ = trfi_symbol(data[..., i], y_prev, carried[..., i], h_dpa_prev)
        x = _columns(base).reshape(-1, 2 * N_SUB)
        y = _columns(h_data).reshape(-1, 2 * N_SUB)
        return x, y

    def _estimate(self, rx):
        data = rx[..., N_PREAMBLE:]
        carried = preamble_estimate(rx)
        h_dpa_prev = carried
        out = np.empty(data.shape, dtype=complex)
        flagged = np.zeros((rx.shape[0], data.shape[-1]), dtype=bool)
        for i in range(data.shape[-1]):
            if self.backbone == "STA":
                col = sta_symbol(data[..., i], carried, self.sta_params)
            else:
                y_prev = data[..., i - 1] if i else None
                col, h_dpa_prev, flagged[:, i] = trfi_symbol(data[..., i], y_prev, carried, h_dpa_prev)
            x = _columns(col[..., None])[:, 0, :]
            carried = _column_to_complex(self.net(x).data)
            out[..., i] = carried
        return EstimateGrid(out, self.name, flagged)


def _tcn_features(prev: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(..., 52) previous estimate and received symbol -> (..., 52, 4)."""
    return np.stack([prev.real, prev.imag, y.real, y.imag], axis=-1)


class TCNEstimator(NeuralEstimator):
    """TCN-DPA: the TCN refines the previous estimate using the current
    received symbol; the refined estimate equalizes the symbol and a DPA
    update produces the carried estimate."""

    def training_pairs(self, rx, h):
        rx = self._check_frames(rx)
        prev = _one_step_dpa(rx, h)
        data = rx[..., N_PREAMBLE:]
        feats = _tcn_features(np.swapaxes(prev, -1, -2), np.swapaxes(data, -1, -2))
        target = np.swapaxes(np.asarray(h)[..., N_PREAMBLE:N_PREAMBLE + data.shape[-1]], -1, -2)
        y = np.stack([target.real, target.imag], axis=-1)
        return feats.reshape(-1, N_SUB, 4), y.reshape(-1, N_SUB, 2)

    def refine(self, prev, y_i) -> np.ndarray:
        out = self.net(_tcn_features(prev, y_i)).data
        return out[..., 0] + 1j * out[..., 1]

    def _estimate(self, rx):
        data = rx[..., N_PREAMBLE:]
        carried = preamble_estimate(rx)
        out = np.empty(data.shape, dtype=complex)
        for i in range(data.shape[-1]):
            refined = self.refine(carried, data[..., i])
            carried, _ = dpa_step(data[..., i], refined)
            out[..., i] = carried
        return EstimateGrid(out, self.name)


class LSTMEstimator(NeuralEstimator):
    """LSTM-DPA-TA: OFDM symbols are LSTM steps; each step proposes an
    estimate from the previous one, DPA updates it against the received
    symbol, and temporal averaging smooths the sequence."""

    def _inputs(self, prev_cols: np.ndarray, data_cols: np.ndarray) -> np.ndarray:
        if self.config.lstm_include_rx:
            return np.concatenate([prev_cols, data_cols], axis=-1)
        return prev_cols

    def training_pairs(self, rx, h):
        rx = self._check_frames(rx)
        prev = _one_step_dpa(rx, h)
        data = rx[..., N_PREAMBLE:]
        x = self._inputs(_columns(prev), _columns(data))
        y = _columns(np.asarray(h)[..., N_PREAMBLE:N_PREAMBLE + data.shape[-1]])
        return x, y

    def pre_ta(self, rx) -> np.ndarray:
        rx = self._check_frames(rx)
        data = rx[..., N_PREAMBLE:]
        carried = preamble_estimate(rx)
        out = np.empty(data.shape, dtype=complex)
        state = None
        with T.no_grad():
            for i in range(data.shape[-1]):
                x = self._inputs(_columns(carried[..., None])[:, 0], _columns(data[..., i:i + 1])[:, 0])
                cand, state = self.net.step(x, state)
                carried, _ = dpa_step(data[..., i], _column_to_complex(cand.data))
                out[..., i] = carried
        return out

    def _estimate(self, rx):
        seq = self.pre_ta(rx)
        return EstimateGrid(temporal_average(seq, self.config.ta_alpha, preamble_estimate(rx)), self.name)


class CNNTransformerEstimator(NeuralEstimator):
    """Whole-frame estimator: all received data symbols plus the preamble
    estimate in, the full 52 x 50 estimate out."""

    def features(self, rx) -> np.ndarray:
        rx = self._check_frames(rx)
        h0 = preamble_estimate(rx)
        return np.concatenate([interleave(rx[..., N_PREAMBLE:]), np.stack([h0.real, h0.imag], axis=-1)], axis=-1)

    def training_pairs(self, rx, h):
        x = self.features(rx)
        n = self.config.n_data_symbols
        return x, interleave(np.asarray(h)[..., N_PREAMBLE:N_PREAMBLE + n])

    def _estimate(self, rx):
        return EstimateGrid(deinterleave(self.net(self.features(rx)).data), self.name)


ESTIMATOR_CLASSES = {
    "sta-mlp": MLPEstimator,
    "trfi-mlp": MLPEstimator,
    "tcn-dpa": TCNEstimator,
    "lstm-dpa-ta": LSTMEstimator,
    "cnn-transformer": CNNTransformerEstimator,
}


def make_estimator(config: EstimatorConfig, seed: int = 0) -> NeuralEstimator:
    return ESTIMATOR_CLASSES[config.name](config, seed)


def mlp_refine(name: str, rx, estimator: NeuralEstimator, allow_untrained: bool = True) -> EstimateGrid:
    if name not in ("sta-mlp", "trfi-mlp") or estimator.name != name:
        raise ValueError(f"mlp_refine: config is {estimator.name!r}, requested {name!r}")
    return estimator.estimate(rx, allow_untrained=allow_untrained)


def tcn_dpa_estimate(rx, estimator: TCNEstimator) -> EstimateGrid:
    return estimator.estimate(rx)


def lstm_dpa_ta_estimate(rx, estimator: LSTMEstimator) -> EstimateGrid:
    return estimator.estimate(rx)


def cnn_transformer_estimate(rx, estimator: CNNTransformerEstimator) -> EstimateGrid:
    return estimator.estimate(rx)
