"""BER evaluation, mixed-vs-high comparison, and CSV/SVG output.

BER is scored on the 48 data subcarriers of the 50 data symbols; preamble
and pilot positions carry no payload bits.  Frames are scored in corpus
order, so error totals do not depend on chunking.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import erfc

from .classical import METHODS, run_classical
from .dataset import Corpus
from .phy import BITS_PER_FRAME, N_PREAMBLE, NoiseSpec, apply_channel_and_noise, build_frame, equalize_and_demap

CSV_COLUMNS = ("estimator", "regime", "snr_db", "ber", "bits", "seed", "config_hash")
DELTA_COLUMNS = ("estimator", "snr_db", "ber_mixed", "ber_high", "delta_ber")
DELTA_CONVENTION = "delta_ber = ber_high - ber_mixed; positive means the mixed-SNR model has lower BER"
EVAL_CHUNK = 256


def compute_ber(tx_bits, rx_bits) -> float:
    tx_bits = np.asarray(tx_bits).ravel()
    rx_bits = np.asarray(rx_bits).ravel()
    if tx_bits.size != rx_bits.size:
        raise ValueError(f"bit sequences differ in length: {tx_bits.size} vs {rx_bits.size}")
    if tx_bits.size == 0:
        raise ValueError("cannot compute BER of an empty sequence")
    return int(np.count_nonzero(tx_bits != rx_bits)) / tx_bits.size


def qam16_awgn_ber(snr_db) -> np.ndarray:
    """Closed-form Gray-coded 16QAM bit error rate over AWGN at unit symbol
    energy, exact including the outer-ring terms."""
    snr = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    a = (1.0 / math.sqrt(10.0)) / np.sqrt(1.0 / (2.0 * snr))

    def q(x):
        return 0.5 * erfc(x / math.sqrt(2.0))

    return 0.25 * (3.0 * q(a) + 2.0 * q(3.0 * a) - q(5.0 * a))


@dataclass(frozen=True)
class ExperimentRecord:
    estimator: str
    regime: str
    snr_db: float
    ber: float
    bits: int
    seed: int
    config_hash: str

    def __post_init__(self):
        if self.bits <= 0:
            raise ValueError("bits_counted must be positive")
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"BER {self.ber} outside [0, 1]")


@dataclass(frozen=True)
class BerCurve:
    estimator: str
    regime: str
    snr_db: tuple
    errors: tuple
    bits: tuple
    seed: int = 0
    config_hash: str = "-"

    def __post_init__(self):
        if not (len(self.snr_db) == len(self.errors) == len(self.bits)) or not self.snr_db:
            raise ValueError("a curve needs equal-length, non-empty snr/errors/bits")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ValueError(f"SNR grid must be strictly increasing, got {self.snr_db}")
        if any(n <= 0 for n in self.bits):
            raise ValueError("every point needs a positive bit count")

    @property
    def ber(self) -> tuple:
        return tuple(e / n for e, n in zip(self.errors, self.bits))

    @property
    def key(self) -> tuple:
        return (self.estimator, self.regime)

    def records(self) -> list:
        return [ExperimentRecord(self.estimator, self.regime, s, b, n, self.seed, self.config_hash)
                for s, b, n in zip(self.snr_db, self.ber, self.bits)]

    def at(self, snr_db: float) -> float:
        return self.ber[self.snr_db.index(snr_db)]


@dataclass
class Evaluation:
    curves: list
    frame_nmse: dict = field(default_factory=dict)  # curve key -> per-frame NMSE


def _frame_nmse(h_hat: np.ndarray, h_true: np.ndarray) -> np.ndarray:
    axes = tuple(range(1, h_true.ndim))
    return np.sum(np.abs(h_hat - h_true) ** 2, axis=axes) / np.sum(np.abs(h_true) ** 2, axis=axes)


def _score(rx, h_hat, bits, snr, levels) -> tuple:
    errs = np.count_nonzero(equalize_and_demap(rx, h_hat) != bits, axis=-1)
    errors = tuple(int(errs[snr == s].sum()) for s in levels)
    counted = tuple(int(np.count_nonzero(snr == s)) * BITS_PER_FRAME for s in levels)
    return errors, counted


def _estimate(estimator, rx) -> np.ndarray:
    if isinstance(estimator, str):
        return run_classical(rx, estimator).h_hat
    return estimator.estimate(rx).h_hat


def score_estimator(estimator, corpus: Corpus, regime: str = "-", seed: int = 0,
                    config_hash: str = "-", name: Optional[str] = None) -> tuple:
    """BER curve and per-frame NMSE of one estimator (a classical method name
    or a trained :class:`NeuralEstimator`) on a test corpus."""
    if len(corpus) == 0:
        raise ValueError("empty test corpus")
    snr = corpus.snr_db
    levels = tuple(sorted(set(float(s) for s in snr)))
    errors = np.zeros(len(levels), dtype=np.int64)
    counted = np.zeros(len(levels), dtype=np.int64)
    nmse = np.empty(len(corpus))
    for start in range(0, len(corpus), EVAL_CHUNK):
        part = corpus.subset(np.arange(start, min(start + EVAL_CHUNK, len(corpus))))
        rx, h = part.rx, part.channel
        h_hat = _estimate(estimator, rx)
        e, n = _score(rx, h_hat, part.bits, part.snr_db, levels)
        errors += e
        counted += n
        nmse[start:start + len(part)] = _frame_nmse(h_hat, h[..., N_PREAMBLE:])
    if name is None:
        name = estimator if isinstance(estimator, str) else estimator.name
    curve = BerCurve(name, regime, levels, tuple(int(x) for x in errors), tuple(int(x) for x in counted),
                     seed, config_hash)
    return curve, nmse


def ideal_baseline(corpus: Corpus, seed: int = 0) -> BerCurve:
    """Equalize with the true channel: the lower bound any estimator faces."""
    snr = corpus.snr_db
    levels = tuple(sorted(set(float(s) for s in snr)))
    errors = np.zeros(len(levels), dtype=np.int64)
    counted = np.zeros(len(levels), dtype=np.int64)
    for start in range(0, len(corpus), EVAL_CHUNK):
        part = corpus.subset(np.arange(start, min(start + EVAL_CHUNK, len(corpus))))
        e, n = _score(part.rx, part.channel[..., N_PREAMBLE:], part.bits, part.snr_db, levels)
        errors += e
        counted += n
    return BerCurve("ideal", "-", levels, tuple(int(x) for x in errors), tuple(int(x) for x in counted), seed)


def awgn_ideal_curve(snr_levels, seed: int = 0, min_errors: int = 1000, min_bits: int = 10**5,
                     max_bits: int = 10**9, batch_frames: int = 512) -> BerCurve:
    """Ideal-equalizer BER over a unit channel (H = 1 everywhere), with the
    bit budget per point grown until ``min_errors`` errors or ``max_bits``."""
    levels = tuple(float(s) for s in snr_levels)
    errors, counted = [], []
    for li, s in enumerate(levels):
        rng = np.random.default_rng([seed, li])
        e = n = 0
        while (e < min_errors or n < min_bits) and n < max_bits:
            bits = rng.integers(0, 2, size=(batch_frames, BITS_PER_FRAME), dtype=np.uint8)
            tx = build_frame(bits)
            ones = np.ones_like(tx)
            rx = apply_channel_and_noise(tx, ones, NoiseSpec(s), rng)
            e += int(np.count_nonzero(equalize_and_demap(rx, ones[..., N_PREAMBLE:]) != bits))
            n += bits.size
        errors.append(e)
        counted.append(n)
    return BerCurve("ideal-awgn", "-", levels, tuple(errors), tuple(counted), seed)


def evaluate(estimator, test_corpus: Corpus, checkpoint=None, regime: Optional[str] = None,
             seed: int = 0, include_ls: bool = True) -> Evaluation:
    """Score ``estimator`` (classical method name or neural estimator) on the
    test corpus, alongside the LS-held baseline.

    With ``checkpoint``, the weights are loaded from it after checking that
    its config hash matches the estimator's config.
    """
    from .estimators.pipelines import NeuralEstimator

    config_hash = "-"
    if isinstance(estimator, str):
        if estimator not in METHODS:
            raise ValueError(f"unknown classical method {estimator!r}")
        regime = regime or "-"
    else:
        if checkpoint is not None:
            estimator = NeuralEstimator.load(checkpoint, config=estimator.config)
        regime = regime or estimator.config.regime
        config_hash = estimator.config.config_hash()
    result = Evaluation([])
    todo = [(estimator, regime, config_hash)]
    if include_ls and estimator != "LS-held":
        todo.insert(0, ("LS-held", "-", "-"))
    for est, reg, h in todo:
        curve, nmse = score_estimator(est, test_corpus, reg, seed, h)
        result.curves.append(curve)
        result.frame_nmse[curve.key] = nmse
    return result


def delta_ber(curve_mixed: BerCurve, curve_high: BerCurve) -> tuple:
    """Per-SNR ``high - mixed``; positive means mixed-SNR training did better."""
    if tuple(curve_mixed.snr_db) != tuple(curve_high.snr_db):
        raise ValueError(f"SNR grids differ: {curve_mixed.snr_db} vs {curve_high.snr_db}")
    return tuple(h - m for m, h in zip(curve_mixed.ber, curve_high.ber))


# output ------------------------------------------------------------------------

def curves_to_csv(curves) -> str:
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in curves:
        for r in c.records():
            w.writerow([r.estimator, r.regime, repr(float(r.snr_db)), repr(float(r.ber)), r.bits, r.seed,
                        r.config_hash])
    return buf.getvalue()


def curves_from_csv(text: str) -> list:
    """Inverse of :func:`curves_to_csv`; curve order follows first appearance."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"CSV must have columns {','.join(CSV_COLUMNS)}")
    grouped: dict = {}
    for r in rows:
        grouped.setdefault((r["estimator"], r["regime"]), []).append(r)
    curves = []
    for (name, regime), rs in grouped.items():
        bits = tuple(int(r["bits"]) for r in rs)
        errors = tuple(int(round(float(r["ber"]) * n)) for r, n in zip(rs, bits))
        curves.append(BerCurve(name, regime, tuple(float(r["snr_db"]) for r in rs), errors, bits,
                               int(rs[0]["seed"]), rs[0]["config_hash"]))
    return curves


def delta_to_csv(pairs) -> str:
    """``pairs``: iterable of (mixed curve, high curve) for the same estimator."""
    buf = io.StringIO()
    buf.write(f"# {DELTA_CONVENTION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DELTA_COLUMNS)
    for mixed, high in pairs:
        if mixed.estimator != high.estimator:
            raise ValueError(f"pairing {mixed.estimator!r} with {high.estimator!r}")
        for s, bm, bh, d in zip(mixed.snr_db, mixed.ber, high.ber, delta_ber(mixed, high)):
            w.writerow([mixed.estimator, repr(float(s)), repr(float(bm)), repr(float(bh)), repr(float(d))])
    return buf.getvalue()


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _svg_frame(title: str, x_label: str, y_label: str, width: int, height: int) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 6}" text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {height / 2:.0f})">{y_label}</text>',
    ]


def ber_floor(bits: int) -> float:
    """Where a zero BER is drawn on the log axis: half of one error."""
    return 0.5 / bits


def render_ber_svg(curves, title: str = "BER vs SNR", width: int = 640, height: int = 420) -> str:
    """Log-scale BER plot.  Zero-BER points are drawn at ``ber_floor(bits)``
    with a hollow marker."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to plot")
    left, right, top, bottom = 60, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    xs = [s for c in curves for s in c.snr_db]
    ys = [b if b > 0 else ber_floor(n) for c in curves for b, n in zip(c.ber, c.bits)]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    d0 = math.floor(math.log10(min(ys)))
    d1 = max(math.ceil(math.log10(max(ys))), d0 + 1)

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (d1 - math.log10(y)) / (d1 - d0) * ph

    out = _svg_frame(title, "SNR (dB)", "BER", width, height)
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for d in range(d0, d1 + 1):
        y = py(10.0 ** d)
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 4}" y="{_fmt(y + 4)}" text-anchor="end">1e{d}</text>')
    for s in sorted(set(xs)):
        x = px(s)
        out.append(f'<line x1="{_fmt(x)}" y1="{top + ph}" x2="{_fmt(x)}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 16}" text-anchor="middle">{s:g}</text>')
    for i, c in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(px(s), py(b if b > 0 else ber_floor(n)), b > 0) for s, b, n in zip(c.snr_db, c.ber, c.bits)]
        path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y, _ in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y, nonzero in pts:
            fill = color if nonzero else "white"
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{fill}" stroke="{color}"/>')
        label = c.estimator if c.regime == "-" else f"{c.estimator} ({c.regime})"
        ly = top + 14 * i + 10
        out.append(f'<line x1="{left + pw + 8}" y1="{ly}" x2="{left + pw + 22}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 26}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_delta_svg(pairs, title: str = "BER difference (high - mixed)", width: int = 640,
                     height: int = 420) -> str:
    """Linear-axis plot of ``high - mixed`` per estimator with a zero line."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no curves to plot")
    left, right, top, bottom = 70, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    series = [(m.estimator, m.snr_db, delta_ber(m, h)) for m, h in pairs]
    xs = [s for _, snr, _ in series for s in snr]
    ys = [d for _, _, ds in series for d in ds] + [0.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    span = max(abs(min(ys)), abs(max(ys))) or 1e-3
    y0, y1 = -1.1 * span, 1.1 * span

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = _svg_frame(title, "SNR (dB)", "delta BER", width, height)
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{_fmt(py(0))}" x2="{left + pw}" y2="{_fmt(py(0))}" stroke="black" '
               f'stroke-dasharray="4 3"/>')
    for frac in (-1.0, -0.5, 0.0, 0.5, 1.0):
        y = py(frac * span)
        out.append(f'<text x="{left - 4}" y="{_fmt(y + 4)}" text-anchor="end">{frac * span:.3g}</text>')
    for s in sorted(set(xs)):
        out.append(f'<text x="{_fmt(px(s))}" y="{top + ph + 16}" text-anchor="middle">{s:g}</text>')
    for i, (name, snr, ds) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        path = " ".join(f"{_fmt(px(s))},{_fmt(py(d))}" for s, d in zip(snr, ds))
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 * i + 10
        out.append(f'<line x1="{left + pw + 8}" y1="{ly}" x2="{left + pw + 22}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 26}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_text(path, text: str) -> Path:
    """Write atomically; the bytes depend only on ``text``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(text.encode("utf-8"))
    tmp.replace(path)
    return path


def emit(curves, out_dir, stem: str = "ber", title: str = "BER vs SNR") -> tuple:
    """Write ``<stem>.csv`` and ``<stem>.svg``; returns both paths."""
    curves = list(curves)
    out_dir = Path(out_dir)
    return (write_text(out_dir / f"{stem}.csv", curves_to_csv(curves)),
            write_text(out_dir / f"{stem}.svg", render_ber_svg(curves, title)))


def emit_delta(pairs, out_dir, stem: str = "delta_ber") -> tuple:
    pairs = list(pairs)
    out_dir = Path(out_dir)
    return (write_text(out_dir / f"{stem}.csv", delta_to_csv(pairs)),
            write_text(out_dir / f"{stem}.svg", render_delta_svg(pairs)))
