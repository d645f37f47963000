"""Latency of every scheme against the energy budget, at full scale."""

import argparse
import sys

from mba.harness import ExperimentConfig, rows_to_csv, sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--grid", default="200,240,280,320")
    ap.add_argument("--noise-mode", default="power", choices=("power", "bandwidth"))
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig(
        seed=args.seed,
        trials=args.trials,
        axis="energy",
        grid=tuple(float(v) for v in args.grid.split(",")),
        noise_mode=args.noise_mode,
    )
    text = rows_to_csv(sweep(cfg))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
