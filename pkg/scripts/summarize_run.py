"""Summarize a `v2xest reproduce` output directory: BER of every curve at each
SNR, trained models against LS-held, and the BER difference table."""
import argparse
from pathlib import Path

from v2xest.experiment import curves_from_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run_dir")
    args = ap.parse_args()
    run = Path(args.run_dir)
    curves = curves_from_csv((run / "ber.csv").read_text())
    levels = curves[0].snr_db
    print(f"{'estimator':28s}" + "".join(f"{s:>9g}" for s in levels))
    for c in curves:
        print(f"{c.estimator + '/' + c.regime:28s}" + "".join(f"{b:9.4f}" for b in c.ber))
    ls = next(c for c in curves if c.estimator == "LS-held")
    print("\nmodels not beating LS-held at 15-30 dB:")
    found = False
    for c in curves:
        if c.regime == "-":
            continue
        for s in (15.0, 20.0, 25.0, 30.0):
            if s in c.snr_db and not c.at(s) < ls.at(s):
                found = True
                print(f"  {c.estimator}/{c.regime} at {s:g} dB: {c.at(s):.4f} vs {ls.at(s):.4f}")
    if not found:
        print("  none")
    delta = run / "delta_ber.csv"
    if delta.is_file():
        print("\n" + delta.read_text())


if __name__ == "__main__":
    main()
