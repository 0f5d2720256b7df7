"""Train each neural estimator on a handful of 40 dB frames and report the
training NMSE before and after.  A sanity check that every pipeline can fit."""
import argparse
import time

import numpy as np

from v2xest import channel, phy
from v2xest.estimators import NAMES, default_config, make_estimator


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--snr", type=float, default=40.0)
    ap.add_argument("--regime", default="mixed-snr")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("estimators", nargs="*", default=list(NAMES))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    prof = channel.ChannelProfile()
    tx = phy.build_frame(phy.random_bits(rng, args.frames * phy.BITS_PER_FRAME).reshape(args.frames, -1))
    h = np.array([channel.generate_channel(prof, phy.N_SYM, rng) for _ in range(args.frames)])
    rx = phy.apply_channel_and_noise(tx, h, phy.NoiseSpec(args.snr), rng)
    for name in args.estimators:
        est = make_estimator(default_config(name, args.regime), seed=0)
        t0 = time.time()
        before = est.training_nmse(rx, h)
        hist = est.fit((rx, h), (rx, h))
        print(f"{name:16s} nmse {before:.2e} -> {est.training_nmse(rx, h):.2e}  "
              f"epochs {hist.epochs_run}  {time.time() - t0:.1f}s", flush=True)


if __name__ == "__main__":
    main()
