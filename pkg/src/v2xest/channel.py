"""Doubly-selective Rayleigh channel: tapped delay line with Jakes Doppler.

Each tap is a sum-of-sinusoids process with random arrival angles and
phases, sampled once per OFDM symbol (block fading).  The frequency
response at active bin ``k`` is ``sum_l g_l(i) exp(-2j pi k tau_l / 64)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phy import N_FFT, SUBCARRIER_BINS


def _default_delays() -> tuple:
    # 12 taps evenly spread over 0..0.4 us at 10 MHz (fractional sample delays)
    return tuple(float(d) for d in np.linspace(0.0, 4.0, 12))


def _default_powers() -> tuple:
    return tuple(-6.0 * d for d in _default_delays())


@dataclass(frozen=True)
class ChannelProfile:
    """Tap profile plus Doppler numerology.

    The default is a VTV-SDWW-like expressway profile: 12 exponentially
    decaying taps within 0.4 us, about 24 dB down at the last tap.  It is not the published tap table.
    """

    tap_delays: tuple = field(default_factory=_default_delays)  # samples at 10 MHz
    tap_powers_db: tuple = field(default_factory=_default_powers)
    doppler_hz: float = 550.0
    symbol_duration_s: float = 8e-6
    fft_size: int = N_FFT
    n_sinusoids: int = 64

    def __post_init__(self):
        if len(self.tap_delays) != len(self.tap_powers_db) or not self.tap_delays:
            raise ValueError("tap_delays and tap_powers_db must be non-empty and equal length")
        if self.doppler_hz < 0:
            raise ValueError(f"doppler_hz must be >= 0, got {self.doppler_hz}")
        if self.symbol_duration_s <= 0:
            raise ValueError("symbol_duration_s must be positive")

    @property
    def n_taps(self) -> int:
        return len(self.tap_delays)

    @property
    def tap_powers(self) -> np.ndarray:
        lin = 10.0 ** (np.asarray(self.tap_powers_db, dtype=float) / 10.0)
        return lin / lin.sum()

    @property
    def active_bins(self) -> np.ndarray:
        return SUBCARRIER_BINS

    @classmethod
    def from_config(cls, cfg: dict) -> "ChannelProfile":
        """Build from config keys ``taps`` ([[delay, power_db], ...]),
        ``doppler_hz`` and ``symbol_duration_s``."""
        kwargs = {}
        if "taps" in cfg:
            taps = np.asarray(cfg["taps"], dtype=float).reshape(-1, 2)
            kwargs["tap_delays"] = tuple(taps[:, 0].tolist())
            kwargs["tap_powers_db"] = tuple(taps[:, 1].tolist())
        for key in ("doppler_hz", "symbol_duration_s"):
            if key in cfg:
                kwargs[key] = float(cfg[key])
        if "n_sinusoids" in cfg:
            kwargs["n_sinusoids"] = int(cfg["n_sinusoids"])
        return cls(**kwargs)

    def to_config(self) -> dict:
        return {
            "taps": [[d, p] for d, p in zip(self.tap_delays, self.tap_powers_db)],
            "doppler_hz": self.doppler_hz,
            "symbol_duration_s": self.symbol_duration_s,
            "n_sinusoids": self.n_sinusoids,
        }


def generate_taps(profile: ChannelProfile, n_sym: int, seed, n_frames=None) -> np.ndarray:
    """Complex tap gains, shape ``(n_sym, n_taps)`` or ``(n_frames, n_sym, n_taps)``.

    Taps are independent; tap ``l`` has variance ``profile.tap_powers[l]`` and
    time autocorrelation ``J0(2 pi f_d tau)``.
    """
    if n_sym < 1:
        raise ValueError("n_sym must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lead = () if n_frames is None else (n_frames,)
    m = profile.n_sinusoids
    shape = lead + (profile.n_taps, m)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    t = np.arange(n_sym) * profile.symbol_duration_s
    freqs = profile.doppler_hz * np.cos(angles)  # (..., L, M)
    arg = 2.0 * np.pi * freqs[..., None, :, :] * t[:, None, None] + phases[..., None, :, :]
    g = np.exp(1j * arg).sum(axis=-1) / np.sqrt(m)  # (..., n_sym, L)
    return g * np.sqrt(profile.tap_powers)


def frequency_basis(profile: ChannelProfile) -> np.ndarray:
    """(52, n_taps) matrix mapping tap gains to active-bin responses."""
    k = profile.active_bins.astype(float)
    delays = np.asarray(profile.tap_delays, dtype=float)
    return np.exp(-2j * np.pi * np.outer(k, delays) / profile.fft_size)


def taps_to_frequency(taps, profile: ChannelProfile) -> np.ndarray:
    """Per-symbol frequency response, shape ``(..., 52, n_sym)``."""
    taps = np.asarray(taps)
    if not np.all(np.isfinite(taps)):
        raise ValueError("tap gains must be finite")
    return frequency_basis(profile) @ np.swapaxes(taps, -1, -2)


def generate_channel(profile: ChannelProfile, n_sym: int, seed) -> np.ndarray:
    return taps_to_frequency(generate_taps(profile, n_sym, seed), profile)
