"""Command-line entry point: ``v2xest <subcommand>``.

Subcommands::

    gen-data   generate a training corpus (mixed or high40) or the test corpus
    train      train one neural estimator on a corpus, write a checkpoint
    evaluate   BER/NMSE of checkpoints and classical methods on a test corpus
    delta      high - mixed BER differences from an evaluation CSV
    plot       render an evaluation CSV as SVG
    reproduce  the whole mixed-vs-high experiment from one config

Every subcommand takes ``--config FILE`` (key-value or JSON); its keys are
flag names with dashes as underscores, plus ``channel.*`` keys, and they
override values given on the command line.

Exit codes: 0 success, 1 usage error, 2 data error (missing/corrupt input,
mismatched checkpoint), 3 numeric failure (non-finite values in training).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelProfile
from .classical import METHODS
from .dataset import (CORPUS_REGIMES, DESK_FRAMES_PER_LEVEL, MIXED_LEVELS, PAPER_FRAMES_PER_LEVEL, PROFILES,
                      CorpusManifest, generate_corpus, generate_test_set, load_corpus, split)
from .estimators import NAMES, default_config, make_estimator, scale_epochs
from .estimators.pipelines import NeuralEstimator
from .experiment import (curves_from_csv, emit, emit_delta, evaluate, ideal_baseline,
                         render_ber_svg, score_estimator, write_text)
from .kvconfig import ConfigError, dump_kv, load_kv

log = logging.getLogger("v2xest")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CORPUS_TO_CONFIG_REGIME = {"mixed": "mixed-snr", "high40": "high-snr-40db"}
PAPER_CORPUS_FRAMES = PAPER_FRAMES_PER_LEVEL * len(MIXED_LEVELS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    try:
        cfg = load_kv(args.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except (ConfigError, ValueError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    channel = cfg.pop("channel", None)
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise UsageError(f"{args.config}: unknown key {key!r} for '{args.command}'")
        setattr(args, dest, value)
    if channel is not None:
        args.channel = channel
    return args


def _channel(args) -> ChannelProfile:
    cfg = getattr(args, "channel", None)
    return ChannelProfile.from_config(cfg) if cfg else ChannelProfile()


def _levels(value) -> tuple:
    if value is None:
        return MIXED_LEVELS
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(float(v) for v in value)


def _epoch_scale(value, n_frames: int) -> float:
    if value in (None, "auto"):
        return min(1.0, n_frames / PAPER_CORPUS_FRAMES)
    return float(value)


# subcommands --------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    channel = _channel(args)
    if args.regime == "test":
        per = args.frames_per_level or (DESK_FRAMES_PER_LEVEL if args.profile == "desk" else PAPER_FRAMES_PER_LEVEL)
        corpus = generate_test_set(_levels(args.levels), per, args.seed, out_dir=args.out,
                                   train_seed=args.train_seed, total_frames=args.total_frames,
                                   channel=channel, profile=args.profile)
    else:
        m = CorpusManifest.default(args.regime, args.profile, seed=args.seed, channel=channel,
                                   val_fraction=args.val_fraction)
        if args.frames_per_level is not None or args.levels is not None:
            levels = _levels(args.levels) if args.levels is not None else m.snr_levels_db
            per = args.frames_per_level or m.frames_per_level[0]
            m = CorpusManifest(regime=m.regime, snr_levels_db=levels, frames_per_level=(int(per),) * len(levels),
                               seed=args.seed, val_fraction=args.val_fraction, channel=channel,
                               profile=args.profile)
        corpus = generate_corpus(m, args.out, overwrite=args.overwrite)
    print(f"wrote {len(corpus)} frames to {args.out}")
    return EXIT_OK


def _train_one(name: str, corpus, seed: int, epoch_scale, out: Path) -> NeuralEstimator:
    regime = CORPUS_TO_CONFIG_REGIME.get(corpus.manifest.regime)
    if regime is None:
        raise ValueError(f"corpus regime {corpus.manifest.regime!r} is not a training corpus")
    scale = _epoch_scale(epoch_scale, len(corpus))
    cfg = scale_epochs(default_config(name, regime), scale) if scale != 1.0 else default_config(name, regime)
    train, val = split(corpus)
    est = make_estimator(cfg, seed=seed)
    t0 = time.time()
    hist = est.fit((train.rx, train.channel), (val.rx, val.channel))
    est.save(out, {"corpus_profile": corpus.manifest.profile, "epoch_scale": scale,
                   "epochs_run": hist.epochs_run, "best_epoch": hist.best_epoch})
    log.info("trained %s/%s in %.0fs (%d epochs)", name, regime, time.time() - t0, hist.epochs_run)
    return est


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    _train_one(args.estimator, corpus, args.seed, args.epoch_scale, Path(args.out))
    print(f"wrote checkpoint {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    test = load_corpus(args.test)
    if test.manifest.kind != "test":
        raise ValueError(f"{args.test} is a training corpus; evaluate needs the test corpus")
    curves = [ideal_baseline(test, args.seed)]
    seen = set()
    for method in ["LS-held"] + list(args.classical or []):
        if method not in METHODS:
            raise UsageError(f"unknown classical method {method!r}; choose from {METHODS}")
        if method not in seen:
            seen.add(method)
            curves.append(score_estimator(method, test, "-", args.seed)[0])
    for ckpt in args.checkpoint or []:
        est = NeuralEstimator.load(ckpt)
        result = evaluate(est, test, seed=args.seed, include_ls=False)
        curves.extend(result.curves)
    csv_path, svg_path = emit(curves, args.out, stem=args.stem)
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def _read_curves(path) -> list:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such CSV: {path}")
    return curves_from_csv(p.read_text(encoding="utf-8"))


def _delta_pairs(curves) -> list:
    by_key = {(c.estimator, c.regime): c for c in curves}
    pairs = []
    for name in NAMES:
        m, h = by_key.get((name, "mixed-snr")), by_key.get((name, "high-snr-40db"))
        if m is not None and h is not None:
            pairs.append((m, h))
    if not pairs:
        raise ValueError("no estimator has both a mixed-snr and a high-snr-40db curve")
    return pairs


def cmd_delta(args) -> int:
    curves = []
    for path in args.csv:
        curves.extend(_read_curves(path))
    csv_path, svg_path = emit_delta(_delta_pairs(curves), args.out, stem=args.stem)
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    curves = _read_curves(args.csv)
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(".svg")
    write_text(out, render_ber_svg(curves, args.title))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    if args.seed == args.test_seed:
        raise UsageError("seed and test_seed must differ")
    channel = _channel(args)
    estimators = list(args.estimators or NAMES)
    unknown = [e for e in estimators if e not in NAMES]
    if unknown:
        raise UsageError(f"unknown estimators {unknown}; choose from {NAMES}")
    per = int(args.frames_per_level or (DESK_FRAMES_PER_LEVEL if args.profile == "desk" else PAPER_FRAMES_PER_LEVEL))
    levels = _levels(args.levels)
    t0 = time.time()

    corpora = {}
    for regime in CORPUS_REGIMES:
        if regime == "mixed":
            lv, counts = levels, (per,) * len(levels)
        else:
            lv, counts = (40.0,), (per * len(levels),)
        m = CorpusManifest(regime=regime, snr_levels_db=lv, frames_per_level=counts, seed=args.seed,
                           val_fraction=args.val_fraction, channel=channel, profile=args.profile)
        corpora[regime] = generate_corpus(m, out / "data" / regime, overwrite=True)
    test_per = int(args.test_frames_per_level or per)
    test = generate_test_set(levels, test_per, args.test_seed, out_dir=out / "data" / "test",
                             train_seed=args.seed, channel=channel, profile=args.profile, overwrite=True)
    log.info("corpora ready in %.0fs", time.time() - t0)

    curves = [ideal_baseline(test, args.seed)]
    for method in METHODS:
        curves.append(score_estimator(method, test, "-", args.seed)[0])
    nmse_rows = []
    for name in estimators:
        for regime, corpus in corpora.items():
            ckpt = out / "models" / f"{name}-{regime}.ckpt"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            est = _train_one(name, corpus, args.seed, args.epoch_scale, ckpt)
            result = evaluate(est, test, checkpoint=ckpt, seed=args.seed, include_ls=False)
            curve = result.curves[0]
            curves.append(curve)
            per_frame = result.frame_nmse[curve.key]
            for s in curve.snr_db:
                nmse_rows.append((name, curve.regime, s, float(np.mean(per_frame[test.snr_db == s]))))
            log.info("%s/%s done at %.0fs", name, regime, time.time() - t0)

    emit(curves, out, stem="ber", title=f"BER vs SNR ({args.profile} profile)")
    neural = [c for c in curves if c.estimator in NAMES]
    if any(c.regime == "high-snr-40db" for c in neural) and any(c.regime == "mixed-snr" for c in neural):
        emit_delta(_delta_pairs(neural), out, stem="delta_ber")
    lines = ["estimator,regime,snr_db,mean_nmse"]
    lines += [f"{n},{r},{s!r},{v!r}" for n, r, s, v in nmse_rows]
    write_text(out / "nmse.csv", "\n".join(lines) + "\n")
    run = {"profile": args.profile, "seed": args.seed, "test_seed": args.test_seed,
           "frames_per_level": per, "test_frames_per_level": test_per,
           "snr_levels_db": [float(s) for s in levels], "estimators": estimators,
           "epoch_scale": _epoch_scale(args.epoch_scale, corpora["mixed"].manifest.n_frames),
           "delta_convention": "delta_ber = ber_high - ber_mixed", "version": __version__}
    write_text(out / "run.txt", dump_kv(run))
    print(f"reproduce finished in {time.time() - t0:.0f}s; results in {out}")
    return EXIT_OK


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="v2xest", description="802.11p V2V channel-estimation experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a training or test corpus")
    g.add_argument("--out", required=True, help="output corpus directory")
    g.add_argument("--regime", choices=CORPUS_REGIMES + ("test",), default="mixed")
    g.add_argument("--profile", choices=PROFILES, default="desk",
                   help="desk: 200 frames/level; paper: 2000 frames/level")
    g.add_argument("--seed", type=int, default=0, help="root seed")
    g.add_argument("--frames-per-level", type=int, default=None)
    g.add_argument("--levels", default=None, help="comma-separated SNR levels in dB")
    g.add_argument("--val-fraction", type=float, default=0.25)
    g.add_argument("--train-seed", type=int, default=None,
                   help="(test) training root seed, rejected if equal to --seed")
    g.add_argument("--total-frames", type=int, default=None,
                   help="(test) spread this many frames over the levels instead of --frames-per-level")
    g.add_argument("--overwrite", action="store_true")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one estimator on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--estimator", required=True, choices=NAMES)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epoch-scale", default="auto",
                   help="multiply configured epochs; auto = corpus frames / 18000")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score checkpoints and classical methods on the test corpus")
    e.add_argument("--test", required=True, help="test corpus directory")
    e.add_argument("--checkpoint", nargs="*", default=[])
    e.add_argument("--classical", nargs="*", default=list(METHODS), help=f"subset of {METHODS}")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--stem", default="ber")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("delta", help="high - mixed BER per estimator from evaluation CSVs")
    d.add_argument("--csv", nargs="+", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--stem", default="delta_ber")
    d.set_defaults(func=cmd_delta)

    pl = sub.add_parser("plot", help="render an evaluation CSV as a log-BER SVG")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", default=None)
    pl.add_argument("--title", default="BER vs SNR")
    pl.set_defaults(func=cmd_plot)

    r = sub.add_parser("reproduce", help="generate, train both regimes, evaluate, emit")
    r.add_argument("--out", required=True)
    r.add_argument("--profile", choices=PROFILES, default="desk")
    r.add_argument("--seed", type=int, default=2024)
    r.add_argument("--test-seed", type=int, default=7)
    r.add_argument("--frames-per-level", type=int, default=None)
    r.add_argument("--test-frames-per-level", type=int, default=None)
    r.add_argument("--levels", default=None)
    r.add_argument("--val-fraction", type=float, default=0.25)
    r.add_argument("--estimators", nargs="*", default=None)
    r.add_argument("--epoch-scale", default="auto")
    r.set_defaults(func=cmd_reproduce)

    for sp in (g, t, e, d, pl, r):
        sp.add_argument("--config", default=None, help="key-value config file; its values win over flags")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        _apply_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"v2xest: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"v2xest: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, ConfigError) as exc:
        print(f"v2xest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
