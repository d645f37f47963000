"""Latency of every scheme against the number of devices.

Also prints the per-device saving of MBA over unicast for each K.
"""

import argparse
import sys

from mba.harness import ExperimentConfig, rows_to_csv, sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--max-devices", type=int, default=20)
    ap.add_argument("--E", type=float, default=250.0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig(
        seed=args.seed,
        trials=args.trials,
        E=args.E,
        axis="devices",
        grid=tuple(range(2, args.max_devices + 1)),
        noise_mode="power",
    )
    rows = sweep(cfg)
    text = rows_to_csv(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)

    by = {}
    for r in rows:
        by.setdefault(r.axis_value, {})[r.scheme] = r.mean_latency_s
    for K in sorted(by):
        saving = (by[K]["unicast"] - by[K]["mba"]) / K
        print(f"K={int(K):2d}  per-device saving {saving * 1e3:.3f} ms", file=sys.stderr)


if __name__ == "__main__":
    main()
