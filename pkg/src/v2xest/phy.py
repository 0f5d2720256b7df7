"""IEEE 802.11p-style frame layout, 16QAM mapping and the Y = H X + N link.

Grids are ``(52, n_sym)`` complex arrays: rows are the active subcarriers in
ascending frequency order (-26..-1, +1..+26), columns are OFDM symbols.
A frame is two preamble symbols followed by 50 data symbols.

The 16QAM label table is the IEEE 802.11 Gray mapping.  A 4-bit label
``b0 b1 b2 b3`` (b0 is the MSB) picks the in-phase level from ``b0 b1`` and
the quadrature level from ``b2 b3``::

    b0b1 / b2b3 :  00   01   11   10
    level       :  -3   -1   +1   +3      (scaled by 1/sqrt(10))

so label 0 is ``(-3 - 3j)/sqrt(10)`` and label 15 is ``(1 + 1j)/sqrt(10)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_FFT = 64
N_SUB = 52
N_PREAMBLE = 2
N_DATA_SYM = 50
N_SYM = N_PREAMBLE + N_DATA_SYM
BITS_PER_SYMBOL = 4

# signed FFT bin of each active row
SUBCARRIER_BINS = np.concatenate([np.arange(-26, 0), np.arange(1, 27)])
PILOT_INDICES = np.array([5, 19, 32, 46])  # bins -21, -7, +7, +21
DATA_INDICES = np.setdiff1d(np.arange(N_SUB), PILOT_INDICES)
N_DATA_SUB = DATA_INDICES.size
BITS_PER_FRAME = N_DATA_SYM * N_DATA_SUB * BITS_PER_SYMBOL

PREAMBLE_SEED = 80211
_SCALE = 1.0 / math.sqrt(10.0)
_GRAY_LEVEL = {0b00: -3.0, 0b01: -1.0, 0b11: 1.0, 0b10: 3.0}

# Pilots are the unit-power constellation point nearest +1, so an estimator
# that treats them like data still decides them correctly.
PILOT_VALUE = complex(3.0, 1.0) * _SCALE


@dataclass(frozen=True)
class ConstellationMap:
    points: np.ndarray  # (16,) complex, indexed by label
    labels: np.ndarray  # (16,) int
    bits: np.ndarray = field(repr=False)  # (16, 4) uint8, MSB first

    @property
    def size(self) -> int:
        return self.points.size


def _build_constellation() -> ConstellationMap:
    labels = np.arange(16)
    points = np.empty(16, dtype=complex)
    for lab in labels:
        i_level = _GRAY_LEVEL[(lab >> 2) & 0b11]
        q_level = _GRAY_LEVEL[lab & 0b11]
        points[lab] = complex(i_level, q_level) * _SCALE
    bits = ((labels[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    return ConstellationMap(points=points, labels=labels, bits=bits)


QAM16 = _build_constellation()


def constellation() -> ConstellationMap:
    return QAM16


def bits_to_labels(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % BITS_PER_SYMBOL:
        raise ValueError(f"bit count {bits.size} is not divisible by {BITS_PER_SYMBOL}")
    groups = bits.reshape(-1, BITS_PER_SYMBOL)
    return groups @ np.array([8, 4, 2, 1], dtype=np.int64)


def labels_to_bits(labels) -> np.ndarray:
    """Inverse of :func:`bits_to_labels`; returns a flat uint8 array."""
    return QAM16.bits[np.asarray(labels, dtype=np.int64)].reshape(-1)


def map_bits(bits) -> np.ndarray:
    """Map a flat bit sequence onto 16QAM points, 4 bits (MSB first) per point."""
    return QAM16.points[bits_to_labels(bits)]


# Per-axis decision: thresholds at -2, 0, +2 (unscaled) pick the Gray code of
# the nearest level.  A value exactly on a threshold is equidistant from two
# levels and takes the smaller code, which is the smaller 16QAM label.
_AXIS_CODE = np.array([0b00, 0b01, 0b11, 0b10])


def _axis_codes(v: np.ndarray) -> np.ndarray:
    t = 2.0 * _SCALE
    idx = (v > -t).astype(np.int64) + (v > 0.0) + (v >= t)
    return _AXIS_CODE[idx]


def demap_nearest(y) -> tuple[np.ndarray, np.ndarray]:
    """Hard decision: nearest constellation point and its label.

    Square 16QAM decouples into two 4-level decisions.  Ties go to the
    lowest label.
    """
    y = np.asarray(y, dtype=complex)
    if not np.all(np.isfinite(y)):
        raise ValueError("demap_nearest got non-finite input")
    labels = (_axis_codes(y.real) << 2) | _axis_codes(y.imag)
    return QAM16.points[labels], labels


def build_preamble() -> tuple[np.ndarray, np.ndarray]:
    """Two identical +/-1 training symbols over the 52 active subcarriers."""
    rng = np.random.default_rng(PREAMBLE_SEED)
    p = rng.choice(np.array([-1.0, 1.0]), size=N_SUB).astype(complex)
    return p, p.copy()


def random_bits(rng: np.random.Generator, n: int = BITS_PER_FRAME) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def build_frame(bits) -> np.ndarray:
    """Assemble the (52, 52) transmit grid: 2 preamble columns, then data.

    Bits fill data subcarriers symbol-major, subcarrier-minor.  A
    ``(..., 9600)`` bit array gives a ``(..., 52, 52)`` stack of frames.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim == 0 or bits.shape[-1] != BITS_PER_FRAME:
        bits = bits.reshape(-1)
        if bits.size != BITS_PER_FRAME:
            raise ValueError(f"a frame carries {BITS_PER_FRAME} bits, got {bits.size}")
    lead = bits.shape[:-1]
    p, _ = build_preamble()
    grid = np.empty(lead + (N_SUB, N_SYM), dtype=complex)
    grid[..., 0] = p
    grid[..., 1] = p
    data = map_bits(bits).reshape(lead + (N_DATA_SYM, N_DATA_SUB))
    grid[..., DATA_INDICES, N_PREAMBLE:] = np.swapaxes(data, -1, -2)
    grid[..., PILOT_INDICES, N_PREAMBLE:] = PILOT_VALUE
    return grid


def frame_data_bits(grid_labels: np.ndarray) -> np.ndarray:
    """Flatten a (..., 48, 50) label array to bits in symbol-major order."""
    lab = np.swapaxes(grid_labels, -1, -2)  # (..., 50, 48)
    bits = QAM16.bits[lab]  # (..., 50, 48, 4)
    return bits.reshape(*lab.shape[:-2], -1)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    signal_power: float = 1.0

    @property
    def noise_variance(self) -> float:
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        return self.signal_power / 10.0 ** (self.snr_db / 10.0)


def apply_channel_and_noise(tx, h, noise: NoiseSpec, seed) -> np.ndarray:
    """Element-wise ``Y = H X + N`` with circular complex Gaussian ``N``."""
    tx = np.asarray(tx, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if tx.shape != h.shape:
        raise ValueError(f"tx shape {tx.shape} does not match channel shape {h.shape}")
    y = h * tx
    var = noise.noise_variance
    if var > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        std = math.sqrt(var / 2.0)
        y = y + std * (rng.standard_normal(tx.shape) + 1j * rng.standard_normal(tx.shape))
    return y


def safe_divide(num, den, floor: float = 1e-12) -> np.ndarray:
    """``num / den`` with divisors smaller than ``floor`` in modulus clamped to
    ``floor * exp(j arg den)``."""
    den = np.asarray(den, dtype=complex)
    mag = np.abs(den)
    small = mag < floor
    if np.any(small):
        den = den.copy()
        den[small] = floor * np.exp(1j * np.angle(den[small]))
    return np.asarray(num) / den


def equalize_and_demap(rx, estimate) -> np.ndarray:
    """Zero-forcing equalization + hard decision over the data region.

    ``rx`` is the (..., 52, 52) received grid, ``estimate`` the (..., 52, 50)
    channel estimate for the data symbols.  Returns bits ordered
    symbol-major, subcarrier-minor, 4 bits per point.
    """
    rx = np.asarray(rx)
    estimate = np.asarray(estimate)
    data_rx = rx[..., N_PREAMBLE:]
    if data_rx.shape != estimate.shape:
        raise ValueError(f"estimate shape {estimate.shape} does not match data shape {data_rx.shape}")
    y_eq = safe_divide(data_rx[..., DATA_INDICES, :], estimate[..., DATA_INDICES, :])
    _, labels = demap_nearest(y_eq)
    return frame_data_bits(labels)

