"""Training and test corpora: generation, persistence, splitting, loading.

A corpus directory holds two files::

    manifest.txt   key-value manifest (see kvconfig), sorted keys
    records.bin    fixed-size little-endian records, back to back

Record layout (``RECORD_DTYPE``, 87,752 bytes, no padding)::

    level_index   uint32
    frame_index   uint32
    snr_db        float64
    frame_seed    uint64
    bits          uint8[1200]          np.packbits of the 9600 data bits
    rx            float64[52, 52, 2]   received grid, (real, imag) pairs
    channel       float64[52, 52, 2]   true channel grid, (real, imag) pairs

The transmit grid is not stored; it is rebuilt from the bits.

Every frame derives from its own seed, a counter-based hash of
``(stream, root seed, level index, frame index)``; bits, channel and noise
draw from three child generators of that seed, so any record can be rebuilt
alone and train/test streams never share a seed.
"""
from __future__ import annotations

import hashlib
import logging
import os
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import ChannelProfile, generate_channel
from .kvconfig import dump_kv, load_kv
from .phy import BITS_PER_FRAME, N_SUB, N_SYM, NoiseSpec, apply_channel_and_noise, build_frame, random_bits

log = logging.getLogger(__name__)

MIXED_LEVELS = tuple(float(s) for s in range(0, 45, 5))
HIGH_LEVELS = (40.0,)
CORPUS_REGIMES = ("mixed", "high40")
PROFILES = ("paper", "desk")
PAPER_FRAMES_PER_LEVEL = 2000
DESK_FRAMES_PER_LEVEL = 200
FORMAT = "v2xest-corpus-1"

RECORD_DTYPE = np.dtype([
    ("level_index", "<u4"),
    ("frame_index", "<u4"),
    ("snr_db", "<f8"),
    ("frame_seed", "<u8"),
    ("bits", "u1", (BITS_PER_FRAME // 8,)),
    ("rx", "<f8", (N_SUB, N_SYM, 2)),
    ("channel", "<f8", (N_SUB, N_SYM, 2)),
])

_STREAMS = {"train": 0x7472, "test": 0x7465}


def frame_seed(root_seed: int, level_index: int, frame_index: int, stream: str = "train") -> int:
    """64-bit seed from a BLAKE2b hash of the packed counters."""
    if stream not in _STREAMS:
        raise ValueError(f"unknown seed stream {stream!r}")
    msg = struct.pack("<QQQQ", _STREAMS[stream], root_seed & (2**64 - 1), level_index, frame_index)
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class CorpusManifest:
    regime: str = "mixed"
    snr_levels_db: tuple = MIXED_LEVELS
    frames_per_level: tuple = (PAPER_FRAMES_PER_LEVEL,) * len(MIXED_LEVELS)
    seed: int = 0
    val_fraction: float = 0.25
    channel: ChannelProfile = field(default_factory=ChannelProfile)
    profile: str = "paper"
    kind: str = "train"

    def __post_init__(self):
        if self.regime not in CORPUS_REGIMES + ("test",):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if self.kind not in _STREAMS:
            raise ValueError(f"kind must be 'train' or 'test', got {self.kind!r}")
        if not self.snr_levels_db:
            raise ValueError("at least one SNR level is required")
        if len(self.frames_per_level) != len(self.snr_levels_db):
            raise ValueError("frames_per_level needs one count per SNR level")
        if any(int(n) < 1 for n in self.frames_per_level):
            raise ValueError("every SNR level needs at least one frame")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @classmethod
    def default(cls, regime: str = "mixed", profile: str = "paper", seed: int = 0, **kw) -> "CorpusManifest":
        """Paper profile: 9 x 2000 mixed or 18,000 frames at 40 dB.  Desk
        profile: 200 frames per mixed level, and the same 1,800-frame total
        at 40 dB."""
        if regime not in CORPUS_REGIMES:
            raise ValueError(f"unknown regime {regime!r}; expected one of {CORPUS_REGIMES}")
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
        per = PAPER_FRAMES_PER_LEVEL if profile == "paper" else DESK_FRAMES_PER_LEVEL
        if regime == "mixed":
            levels, counts = MIXED_LEVELS, (per,) * len(MIXED_LEVELS)
        else:
            levels, counts = HIGH_LEVELS, (per * len(MIXED_LEVELS),)
        return cls(regime=regime, snr_levels_db=levels, frames_per_level=counts, seed=seed,
                   profile=profile, **kw)

    @property
    def n_frames(self) -> int:
        return int(sum(self.frames_per_level))

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "kind": self.kind,
            "regime": self.regime,
            "profile": self.profile,
            "snr_levels_db": [float(s) for s in self.snr_levels_db],
            "frames_per_level": [int(n) for n in self.frames_per_level],
            "seed": int(self.seed),
            "val_fraction": float(self.val_fraction),
            "channel": self.channel.to_config(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusManifest":
        levels = tuple(float(s) for s in d.get("snr_levels_db", MIXED_LEVELS))
        fpl = d.get("frames_per_level", PAPER_FRAMES_PER_LEVEL)
        counts = tuple(int(n) for n in fpl) if isinstance(fpl, (list, tuple)) else (int(fpl),) * len(levels)
        return cls(
            regime=d.get("regime", "mixed"),
            snr_levels_db=levels,
            frames_per_level=counts,
            seed=int(d.get("seed", 0)),
            val_fraction=float(d.get("val_fraction", 0.25)),
            channel=ChannelProfile.from_config(d.get("channel", {})),
            profile=d.get("profile", "paper"),
            kind=d.get("kind", "train"),
        )


@dataclass
class FrameRecord:
    tx_bits: np.ndarray
    tx_grid: np.ndarray
    rx_grid: np.ndarray
    true_channel: np.ndarray
    snr_db: float
    frame_seed: int


def synthesize_frame(seed: int, snr_db: float, profile: ChannelProfile) -> FrameRecord:
    root = np.random.SeedSequence(seed)
    g_bits, g_chan, g_noise = (np.random.default_rng(s) for s in root.spawn(3))
    bits = random_bits(g_bits)
    tx = build_frame(bits)
    h = generate_channel(profile, N_SYM, g_chan)
    rx = apply_channel_and_noise(tx, h, NoiseSpec(snr_db), g_noise)
    return FrameRecord(bits, tx, rx, h, float(snr_db), int(seed))


def noise_generator(seed: int) -> np.random.Generator:
    """The generator that drew a frame's noise (third child of its seed)."""
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])


def _to_pairs(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


class Corpus:
    """Frames in memory (or memory-mapped) with their manifest."""

    def __init__(self, manifest: CorpusManifest, records: np.ndarray, path: Optional[Path] = None):
        if records.dtype != RECORD_DTYPE:
            raise ValueError("records have the wrong dtype")
        self.manifest = manifest
        self.records = records
        self.path = path

    def __len__(self) -> int:
        return len(self.records)

    @property
    def rx(self) -> np.ndarray:
        r = self.records["rx"]
        return r[..., 0] + 1j * r[..., 1]

    @property
    def channel(self) -> np.ndarray:
        c = self.records["channel"]
        return c[..., 0] + 1j * c[..., 1]

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.records["bits"], axis=-1)

    @property
    def snr_db(self) -> np.ndarray:
        return np.asarray(self.records["snr_db"])

    @property
    def level_index(self) -> np.ndarray:
        return np.asarray(self.records["level_index"])

    @property
    def frame_seeds(self) -> np.ndarray:
        return np.asarray(self.records["frame_seed"])

    def tx(self) -> np.ndarray:
        return build_frame(self.bits)

    def record(self, i: int) -> FrameRecord:
        r = self.records[i]
        bits = np.unpackbits(r["bits"])
        return FrameRecord(bits, build_frame(bits), r["rx"][..., 0] + 1j * r["rx"][..., 1],
                           r["channel"][..., 0] + 1j * r["channel"][..., 1], float(r["snr_db"]),
                           int(r["frame_seed"]))

    def subset(self, indices) -> "Corpus":
        return Corpus(self.manifest, np.asarray(self.records[np.asarray(indices, dtype=int)]), self.path)

    def at_level(self, snr_db: float) -> "Corpus":
        return self.subset(np.flatnonzero(self.snr_db == snr_db))

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.records).tobytes()).hexdigest()


def build_records(manifest: CorpusManifest) -> np.ndarray:
    records = np.zeros(manifest.n_frames, dtype=RECORD_DTYPE)
    row = 0
    for li, (snr, count) in enumerate(zip(manifest.snr_levels_db, manifest.frames_per_level)):
        for fi in range(int(count)):
            seed = frame_seed(manifest.seed, li, fi, manifest.kind)
            fr = synthesize_frame(seed, snr, manifest.channel)
            rec = records[row]
            rec["level_index"], rec["frame_index"] = li, fi
            rec["snr_db"], rec["frame_seed"] = snr, seed
            rec["bits"] = np.packbits(fr.tx_bits)
            rec["rx"] = _to_pairs(fr.rx_grid)
            rec["channel"] = _to_pairs(fr.true_channel)
            row += 1
    return records


def generate_frames(manifest: CorpusManifest) -> Corpus:
    """Build a corpus in memory without touching disk."""
    return Corpus(manifest, build_records(manifest))


def generate_corpus(manifest: CorpusManifest, out_dir, overwrite: bool = False) -> Corpus:
    """Generate and persist a corpus.  Output is written to a sibling temporary
    directory and renamed into place, so a failure leaves nothing behind."""
    out_dir = Path(out_dir)
    if out_dir.exists():
        if not overwrite and any(out_dir.iterdir()):
            raise FileExistsError(f"{out_dir} exists and is not empty")
    tmp = out_dir.with_name(out_dir.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    try:
        tmp.mkdir(parents=True)
        records = build_records(manifest)
        with open(tmp / "records.bin", "wb") as fh:
            fh.write(records.tobytes())
        meta = manifest.to_dict()
        meta["n_records"] = int(len(records))
        meta["record_bytes"] = RECORD_DTYPE.itemsize
        meta["sha256"] = hashlib.sha256(records.tobytes()).hexdigest()
        (tmp / "manifest.txt").write_text(dump_kv(meta), encoding="utf-8")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    log.info("wrote %d frames to %s", len(records), out_dir)
    return Corpus(manifest, records, out_dir)


def load_corpus(path, verify: bool = False) -> Corpus:
    path = Path(path)
    man_path, rec_path = path / "manifest.txt", path / "records.bin"
    if not man_path.is_file() or not rec_path.is_file():
        raise FileNotFoundError(f"{path} is not a corpus directory (manifest.txt + records.bin)")
    meta = load_kv(man_path)
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported corpus format {meta.get('format')!r}")
    manifest = CorpusManifest.from_dict(meta)
    size = rec_path.stat().st_size
    if size != meta["n_records"] * RECORD_DTYPE.itemsize:
        raise ValueError(f"{path}: records.bin has {size} bytes, expected "
                         f"{meta['n_records']} x {RECORD_DTYPE.itemsize}")
    records = np.memmap(rec_path, dtype=RECORD_DTYPE, mode="r") if size else np.zeros(0, RECORD_DTYPE)
    corpus = Corpus(manifest, records, path)
    if verify and corpus.content_hash() != meta["sha256"]:
        raise ValueError(f"{path}: records do not match the manifest hash")
    return corpus


def split(corpus: Corpus, fraction: Optional[float] = None, seed: Optional[int] = None) -> tuple:
    """Stratified, seeded train/validation split.

    Each SNR level contributes ``floor(fraction * n_level)`` validation frames.
    Returns ``(train, validation)`` corpora.
    """
    fraction = corpus.manifest.val_fraction if fraction is None else fraction
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    seed = corpus.manifest.seed if seed is None else seed
    levels = corpus.level_index
    train_idx, val_idx = [], []
    for li in np.unique(levels):
        idx = np.flatnonzero(levels == li)
        perm = np.random.default_rng([seed, int(li), 0x5917]).permutation(idx)
        n_val = int(np.floor(fraction * idx.size))
        val_idx.append(np.sort(perm[:n_val]))
        train_idx.append(np.sort(perm[n_val:]))
    return (corpus.subset(np.concatenate(train_idx)),
            corpus.subset(np.concatenate(val_idx)))


def make_test_manifest(levels=MIXED_LEVELS, frames_per_level: int = PAPER_FRAMES_PER_LEVEL, seed: int = 1,
                  train_seed: Optional[int] = None, total_frames: Optional[int] = None,
                  channel: Optional[ChannelProfile] = None, profile: str = "paper") -> CorpusManifest:
    """Manifest for the shared test corpus.

    ``frames_per_level`` frames at every level, unless ``total_frames`` is
    given, in which case that total is spread over the levels (earlier
    levels take the remainder).
    """
    levels = tuple(float(s) for s in levels)
    if not levels:
        raise ValueError("a test set needs at least one SNR level")
    if train_seed is not None and seed == train_seed:
        raise ValueError(f"test seed {seed} collides with the training root seed")
    if total_frames is not None:
        if total_frames < len(levels):
            raise ValueError("total_frames must give every level at least one frame")
        base, extra = divmod(int(total_frames), len(levels))
        counts = tuple(base + (1 if i < extra else 0) for i in range(len(levels)))
    else:
        counts = (int(frames_per_level),) * len(levels)
    return CorpusManifest(regime="test", snr_levels_db=levels, frames_per_level=counts, seed=seed,
                          channel=channel or ChannelProfile(), profile=profile, kind="test")


def generate_test_set(levels=MIXED_LEVELS, frames_per_level: int = PAPER_FRAMES_PER_LEVEL, seed: int = 1,
                      out_dir=None, train_seed: Optional[int] = None, total_frames: Optional[int] = None,
                      channel: Optional[ChannelProfile] = None, profile: str = "paper",
                      overwrite: bool = False) -> Corpus:
    manifest = make_test_manifest(levels, frames_per_level, seed, train_seed, total_frames, channel, profile)
    if out_dir is None:
        return generate_frames(manifest)
    return generate_corpus(manifest, out_dir, overwrite=overwrite)

