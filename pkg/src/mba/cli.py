"""Command-line entry point.

Exit codes: 0 success, 2 infeasible instance, 3 solver failure, 4 bad config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .bnb import bnb_select
from .core import SelectionMatrix
from .errors import CapacityError, ConfigError, DomainError, InfeasibleError, MBAError, SolverError
from .harness import ExperimentConfig
from .power import constant_power_schedule, equivalent_channels, kkt_residuals, optimal_power_control
from .selection import brute_force_select, greedy_select

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4

# Flag name -> config field, for the common overrides.
OVERRIDES = {
    "M": int,
    "N": int,
    "K": int,
    "E": float,
    "rho": float,
    "trials": int,
    "selector": str,
    "power_scheme": str,
    "noise_mode": str,
    "axis": str,
}


def _load_config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
    for name in OVERRIDES:
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    if getattr(args, "grid", None):
        try:
            d["grid"] = [float(x) for x in args.grid.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad grid {args.grid!r}") from exc
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            d[key] = json.loads(raw)
        except json.JSONDecodeError:
            d[key] = raw
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    return ExperimentConfig.from_dict(d)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def cmd_gen_scores(args):
    cfg = _load_config(args)
    inst = harness.build_instance(cfg, cfg.seed)
    if args.scenario_out:
        Path(args.scenario_out).write_text(json.dumps(harness.instance_to_dict(inst)))
    _emit(inst.table.to_json(), args.out)


def cmd_select(args):
    inst = harness.instance_from_dict(_read_json(args.scenario))
    if args.selector == "bnb":
        sel = bnb_select(inst.library, inst.table, inst.c).selection
    elif args.selector == "brute":
        sel = brute_force_select(inst.library, inst.table, inst.c).selection
    else:
        sel = greedy_select(inst.library, inst.table, inst.c).selection
    _emit(sel.to_json(), args.out)


def cmd_power(args):
    inst = harness.instance_from_dict(_read_json(args.scenario))
    M, N, K = inst.table.shape
    sel = SelectionMatrix.from_dict(_read_json(args.selection), shape=(M, N, K))
    if args.scheme == "constant":
        ch = equivalent_channels(sel, inst.scenario)
        blocks = ch.blocks()
        sched = constant_power_schedule(blocks, [ch.H_eq[b] for b in blocks], inst.scenario)
    else:
        sched = optimal_power_control(sel, inst.scenario)
    _emit(sched.to_json(), args.out)


def cmd_simulate(args):
    cfg = _load_config(args)
    res = harness.run_trial(cfg, cfg.seed)
    payload = {"config": cfg.to_dict(), "results": harness.trial_to_dict(res)}
    _emit(json.dumps(payload, indent=2), args.out)
    main_scheme = "mba" if cfg.power_scheme == "optimal" else "constant_power"
    err = res[main_scheme]
    if isinstance(err, MBAError):
        raise err


def cmd_sweep(args):
    cfg = _load_config(args)
    rows = harness.sweep(cfg)
    text = harness.rows_to_json(rows) if args.format == "json" else harness.rows_to_csv(rows)
    _emit(text, args.out)


def cmd_verify(args):
    cfg = _load_config(args)
    seeds = harness.trial_seeds(cfg.seed, args.seeds)
    tiny = cfg.replace(M=2, N=2, K=2, selector="greedy")
    lemma = [harness.verify_lemma1(tiny, s) for s in seeds]
    small = cfg.replace(M=3, N=3, K=3, selector="greedy")
    oracle_ok = kkt_ok = 0
    kkt_worst = 0.0
    for s in seeds:
        inst = harness.build_instance(small, s)
        bf = brute_force_select(inst.library, inst.table, inst.c)
        bb = bnb_select(inst.library, inst.table, inst.c)
        oracle_ok += bf.objective == bb.objective
        sched = optimal_power_control(bb.selection, inst.scenario)
        rep = kkt_residuals(sched, bb.selection, inst.scenario)
        kkt_worst = max(kkt_worst, rep.max_residual)
        kkt_ok += rep.ok()
    lines = [
        f"lemma1: {sum(r.passed for r in lemma)}/{len(lemma)} seeds equal "
        f"(max relative gap {max(r.relative_gap for r in lemma):.3e})",
        f"bnb vs brute force: {oracle_ok}/{len(seeds)} equal",
        f"kkt: {kkt_ok}/{len(seeds)} within 1e-6 (worst {kkt_worst:.3e})",
    ]
    _emit("\n".join(lines), args.out)
    if not (all(r.passed for r in lemma) and oracle_ok == len(seeds) and kkt_ok == len(seeds)):
        raise SolverError("verification failed")


def _add_config_flags(p, seed_required=False):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, required=seed_required)
    for name, typ in OVERRIDES.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    p.add_argument("--grid", help="comma-separated sweep values")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field (JSON value)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # Usage mistakes are config errors, not the "infeasible" code argparse would use.
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mba", description="Model broadcasting and assembling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scores", help="draw an instance and print its score table as JSON")
    _add_config_flags(p)
    p.add_argument("--scenario-out", help="also write the full scenario (table, thresholds, channels)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_scores)

    p = sub.add_parser("select", help="choose blocks for a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--selector", choices=("greedy", "bnb", "brute"), default="greedy")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("power", help="allocate power for a selection file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--scheme", choices=("optimal", "constant"), default="optimal")
    p.add_argument("--out")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("simulate", help="run all schemes on one seeded trial")
    _add_config_flags(p, seed_required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="average schemes over a grid of one parameter")
    _add_config_flags(p, seed_required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="decoupling, KKT and exact-selection checks on small instances")
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, default=20, help="number of seeded instances per check")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, DomainError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
