"""Greedy versus exact block counts as the number of devices grows.

Writes one CSV row per (K, trial) with both objectives and their ratio.
"""

import argparse
import csv
import sys

from mba.bnb import bnb_select
from mba.harness import ExperimentConfig, build_instance, trial_seeds
from mba.scores import GameConfig
from mba.selection import greedy_select


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--max-devices", type=int, default=8)
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["K", "trial", "greedy", "optimal", "ratio", "bnb_nodes"])
    for K in range(1, args.max_devices + 1):
        cfg = ExperimentConfig(M=K, N=args.N, K=K, noise_mode="power", game=GameConfig())
        for t, s in enumerate(trial_seeds(args.seed, args.trials)):
            inst = build_instance(cfg, s)
            g = greedy_select(inst.library, inst.table, inst.c)
            b = bnb_select(inst.library, inst.table, inst.c, incumbent=g.selection)
            w.writerow([K, t, g.objective, b.objective, repr(g.objective / b.objective), b.nodes])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
