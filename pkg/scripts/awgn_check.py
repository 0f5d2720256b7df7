"""Print the ideal-equalizer BER over a unit channel next to the closed form."""
import argparse

from v2xest.experiment import awgn_ideal_curve, qam16_awgn_ber


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-snr", type=int, default=20)
    ap.add_argument("--min-errors", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    levels = list(range(0, args.max_snr + 1))
    curve = awgn_ideal_curve(levels, seed=args.seed, min_errors=args.min_errors)
    print("snr_db,ber_sim,ber_closed_form,rel_err,bits")
    for s, b, n, t in zip(levels, curve.ber, curve.bits, qam16_awgn_ber(levels)):
        print(f"{s},{b:.4e},{t:.4e},{abs(b - t) / t:.3f},{n}")


if __name__ == "__main__":
    main()
