"""Preamble LS, DPA tracking, STA and TRFI, and temporal averaging.

Column operations take arrays whose last axis is the 52 subcarriers and
broadcast over any leading batch axes, so a whole test corpus can be pushed
through one symbol at a time.

Per-symbol schedule, for data symbol ``i`` with carried estimate ``c``:

* DPA:  ``h_i = y_i / demap(y_i / c)``; carry ``h_i``.
* STA:  DPA against ``c``, frequency window, then ``(1-1/a) c + (1/a) fd``.
* TRFI: DPA against ``c``; the new DPA estimate re-decides symbol ``i-1``
  and subcarriers whose decision agrees with the one made by the previous
  DPA estimate are anchors; the rest are spline-interpolated.  The first
  data symbol has no predecessor and is taken as all-reliable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .phy import N_PREAMBLE, N_SUB, build_preamble, demap_nearest, safe_divide

METHODS = ("LS-held", "DPA", "STA", "TRFI")


@dataclass(frozen=True)
class StaParams:
    alpha: float = 2.0
    beta: int = 2

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    @property
    def weights(self) -> np.ndarray:
        n = 2 * self.beta + 1
        return np.full(n, 1.0 / n)


@dataclass
class ReliabilitySets:
    mask: np.ndarray  # True where reliable; (..., 52)

    @property
    def reliable(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def unreliable(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)


@dataclass
class EstimateGrid:
    h_hat: np.ndarray  # (..., 52, n_data_sym)
    kind: str
    flagged: Optional[np.ndarray] = field(default=None, repr=False)


def ls_initial(y_p1, y_p2, p) -> np.ndarray:
    p = np.asarray(p)
    if np.any(p == 0):
        raise ValueError("preamble has a zero entry")
    return (np.asarray(y_p1) + np.asarray(y_p2)) / (2.0 * p)


def dpa_step(y_i, h_prev) -> tuple[np.ndarray, np.ndarray]:
    """Equalize with the previous estimate, slice, divide. Returns (h_dpa, d)."""
    d, _ = demap_nearest(safe_divide(y_i, h_prev))
    return np.asarray(y_i) / d, d


def sta_frequency_average(h_dpa, params: StaParams = StaParams()) -> np.ndarray:
    """Moving average over +/-beta subcarriers; edge windows are truncated
    and renormalized."""
    h = np.asarray(h_dpa)
    b = params.beta
    if b == 0:
        return h.copy()
    n = h.shape[-1]
    pad = [(0, 0)] * (h.ndim - 1) + [(1, 0)]
    csum = np.cumsum(np.pad(h, pad), axis=-1)
    k = np.arange(n)
    lo = np.clip(k - b, 0, n)
    hi = np.clip(k + b + 1, 0, n)
    return (csum[..., hi] - csum[..., lo]) / (hi - lo)


def sta_temporal_update(h_fd, h_sta_prev, params: StaParams = StaParams()) -> np.ndarray:
    w = 1.0 / params.alpha
    return (1.0 - w) * np.asarray(h_sta_prev) + w * np.asarray(h_fd)


def trfi_reliability(y_prev, h_dpa_i, h_dpa_prev) -> ReliabilitySets:
    _, lab_cur = demap_nearest(safe_divide(y_prev, h_dpa_i))
    _, lab_prev = demap_nearest(safe_divide(y_prev, h_dpa_prev))
    return ReliabilitySets(mask=lab_cur == lab_prev)


def _interp_column(h: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.flatnonzero(mask)
    targets = np.flatnonzero(~mask)
    # flat hold outside the outermost anchors
    xt = np.clip(targets, x[0], x[-1]).astype(float)
    # not-a-knot ends, so a channel that is cubic across subcarriers is
    # recovered exactly
    spline = CubicSpline(x.astype(float), np.stack([h.real[x], h.imag[x]], axis=-1), bc_type="not-a-knot")
    vals = spline(xt)
    out = h.copy()
    out[targets] = vals[:, 0] + 1j * vals[:, 1]
    return out


def trfi_interpolate(h_dpa, sets: ReliabilitySets) -> tuple[np.ndarray, np.ndarray]:
    """Replace unreliable subcarriers by a not-a-knot cubic spline through the
    reliable ones (real and imaginary parts separately).

    Returns ``(h_trfi, flagged)``; columns with fewer than two anchors pass
    through unchanged and are flagged.
    """
    h = np.asarray(h_dpa)
    mask = np.broadcast_to(sets.mask, h.shape)
    out = h.copy()
    flat_h = h.reshape(-1, h.shape[-1])
    flat_m = mask.reshape(-1, h.shape[-1])
    flat_o = out.reshape(-1, h.shape[-1])
    flagged = np.zeros(flat_h.shape[0], dtype=bool)
    for row in np.flatnonzero(~flat_m.all(axis=1)):
        if flat_m[row].sum() < 2:
            flagged[row] = True
            continue
        flat_o[row] = _interp_column(flat_h[row], flat_m[row])
    return flat_o.reshape(h.shape), flagged.reshape(h.shape[:-1])


def temporal_average(h_seq, alpha_ta: float = 2.0, h0=None) -> np.ndarray:
    """Exponential smoothing along the symbol axis (last axis of ``h_seq``),
    seeded by ``h0`` (defaults to the first column, i.e. no smoothing at start)."""
    if alpha_ta < 1:
        raise ValueError(f"alpha_ta must be >= 1, got {alpha_ta}")
    h_seq = np.asarray(h_seq)
    w = 1.0 / alpha_ta
    prev = h_seq[..., 0] if h0 is None else np.asarray(h0)
    out = np.empty_like(h_seq)
    for i in range(h_seq.shape[-1]):
        prev = (1.0 - w) * prev + w * h_seq[..., i]
        out[..., i] = prev
    return out


def preamble_estimate(rx) -> np.ndarray:
    p, _ = build_preamble()
    return ls_initial(rx[..., 0], rx[..., 1], p)


def sta_symbol(y_i, carried, params: StaParams) -> np.ndarray:
    h_dpa, _ = dpa_step(y_i, carried)
    return sta_temporal_update(sta_frequency_average(h_dpa, params), carried, params)


def trfi_symbol(y_i, y_prev, carried, h_dpa_prev) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One TRFI step. Returns (h_trfi, h_dpa, flagged)."""
    h_dpa, _ = dpa_step(y_i, carried)
    if y_prev is None:
        return h_dpa, h_dpa, np.zeros(h_dpa.shape[:-1], dtype=bool)
    sets = trfi_reliability(y_prev, h_dpa, h_dpa_prev)
    h_trfi, flagged = trfi_interpolate(h_dpa, sets)
    return h_trfi, h_dpa, flagged


def run_classical(rx, method: str, sta: StaParams = StaParams()) -> EstimateGrid:
    """Estimate the channel over the data symbols of one or more frames.

    ``rx`` has shape ``(..., 52, 52)``; the result is ``(..., 52, 50)``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    rx = np.asarray(rx)
    if rx.shape[-2] != N_SUB:
        raise ValueError(f"expected {N_SUB} subcarrier rows, got shape {rx.shape}")
    data = rx[..., N_PREAMBLE:]
    n_data = data.shape[-1]
    h0 = preamble_estimate(rx)
    out = np.empty(data.shape, dtype=complex)
    flagged = np.zeros(data.shape[:-2] + (n_data,), dtype=bool)

    if method == "LS-held":
        out[...] = h0[..., None]
        return EstimateGrid(out, method, flagged)

    carried = h0
    h_dpa_prev = h0
    for i in range(n_data):
        y_i = data[..., i]
        if method == "DPA":
            carried, _ = dpa_step(y_i, carried)
        elif method == "STA":
            carried = sta_symbol(y_i, carried, sta)
        else:
            y_prev = data[..., i - 1] if i > 0 else None
            carried, h_dpa_prev, flagged[..., i] = trfi_symbol(y_i, y_prev, carried, h_dpa_prev)
        out[..., i] = carried
    return EstimateGrid(out, method, flagged)


def nmse(h_hat, h_true) -> float:
    """Mean over frames of ||h_hat - h||^2 / ||h||^2 (last two axes form a frame)."""
    h_hat = np.asarray(h_hat)
    h_true = np.asarray(h_true)
    err = np.sum(np.abs(h_hat - h_true) ** 2, axis=(-2, -1))
    ref = np.sum(np.abs(h_true) ** 2, axis=(-2, -1))
    return float(np.mean(err / ref))
