"""End-to-end trials: scenario sampling, the MBA pipeline, baselines and sweeps.

A trial seed fixes everything random about an instance: which tasks the
devices run, the block-assembly game over all library tasks, and the channel
gains. Devices take a prefix of a seeded task permutation and a prefix of the
channel draw, so instances with fewer devices are nested inside larger ones
(common random numbers across a device sweep).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bnb import bnb_select
from .core import (
    ENERGY_RTOL,
    SCORE_TOL,
    Library,
    PowerSchedule,
    Scenario,
    ScoreTable,
    SelectionMatrix,
    evaluate_schedule,
)
from .errors import ConfigError, InfeasibleError, MBAError
from .power import constant_power_schedule, equivalent_channels, optimal_power_control, schedule_for_channels
from .scores import GameConfig, build_score_table, qos_thresholds, random_game
from .selection import brute_force_select, greedy_select

SCHEMES = ("mba", "constant_power", "unicast")
AXES = ("energy", "devices", "rho")
CSV_HEADER = (
    "axis_value",
    "scheme",
    "trials",
    "mean_latency_s",
    "std_latency_s",
    "mean_energy_j",
    "mean_blocks",
    "qos_ok_rate",
)


@dataclass
class ExperimentConfig:
    """Everything that defines an experiment; defaults are the full-scale setting.

    ``noise_mode`` says how ``noise_density`` becomes the noise power in the
    rate formula: ``"bandwidth"`` multiplies by ``B`` (a W/Hz density),
    ``"power"`` uses the number directly as watts.

    The default game draws every non-own block from the top tenth of the
    quality range, as for a library fine-tuned from one shared backbone.
    """

    seed: int = 0
    M: int = 21
    N: int = 24
    K: int = 21
    B: float = 1e8
    noise_density: float = 0.5e-9
    noise_mode: str = "bandwidth"
    path_loss: float = 1e-3
    Q: float = 5e6
    E: float = 250.0
    rho: float = 0.9
    game: GameConfig = field(default_factory=lambda: GameConfig(quality_low=0.9, own_bonus=0.0))
    shapley_method: str = "auto"
    permutations: int = 2000
    selector: str = "greedy"
    power_scheme: str = "optimal"
    replacement_order: str = "descending"
    bnb_var_cap: int = 64
    axis: str = "energy"
    grid: tuple = (200.0, 240.0, 280.0, 320.0)
    trials: int = 5

    def __post_init__(self):
        if isinstance(self.game, dict):
            self.game = GameConfig(**self.game)
        self.grid = tuple(self.grid)
        self.validate()

    def validate(self):
        for name in ("B", "noise_density", "path_loss", "Q", "E"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        for name in ("M", "N", "K", "trials", "permutations"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.K > self.M:
            raise ConfigError(f"K={self.K} devices need at least as many library models, M={self.M}")
        if not 0 < self.rho <= 1:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")
        if self.noise_mode not in ("bandwidth", "power"):
            raise ConfigError(f"noise_mode must be 'bandwidth' or 'power', got {self.noise_mode!r}")
        if self.selector not in ("greedy", "bnb"):
            raise ConfigError(f"selector must be 'greedy' or 'bnb', got {self.selector!r}")
        if self.power_scheme not in ("optimal", "constant"):
            raise ConfigError(f"power_scheme must be 'optimal' or 'constant', got {self.power_scheme!r}")
        if self.replacement_order not in ("descending", "ascending"):
            raise ConfigError(f"unknown replacement order {self.replacement_order!r}")
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.grid:
            raise ConfigError("sweep grid is empty")
        if self.selector == "bnb" and self.M * self.N * self.K > self.bnb_var_cap:
            raise ConfigError(
                f"branch and bound needs M*N*K <= {self.bnb_var_cap}, got {self.M * self.N * self.K}"
            )

    @property
    def noise_power(self) -> float:
        return self.noise_density * self.B if self.noise_mode == "bandwidth" else self.noise_density

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def at(self, axis_value) -> "ExperimentConfig":
        """This config with the sweep axis set to ``axis_value``."""
        if self.axis == "energy":
            return self.replace(E=float(axis_value))
        if self.axis == "devices":
            return self.replace(K=int(axis_value))
        return self.replace(rho=float(axis_value))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class TrialResult:
    """One scheme's outcome on one trial."""

    scheme: str
    latency: float
    energy: float
    blocks: int
    qos_ok: np.ndarray
    scores: np.ndarray
    selector: str = ""

    @property
    def all_qos_ok(self) -> bool:
        return bool(np.all(self.qos_ok))


@dataclass(frozen=True)
class Instance:
    library: Library
    table: ScoreTable
    c: np.ndarray
    scenario: Scenario


def trial_seeds(seed: int, trials: int) -> list[int]:
    """Independent per-trial seeds derived from the experiment seed."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def sample_channels(K: int, path_loss: float, seed) -> np.ndarray:
    """Rayleigh-fading power gains ``path_loss * Exp(1)``; prefixes agree across ``K``."""
    if K < 1:
        raise ConfigError(f"need at least one device, got K={K}")
    return path_loss * np.random.default_rng(seed).standard_exponential(K)


def build_instance(config: ExperimentConfig, trial_seed: int) -> Instance:
    """Draw tasks, scores and channels for one trial."""
    ss_tasks, ss_game, ss_chan, ss_mc = np.random.SeedSequence(trial_seed).spawn(4)
    M, N, K = config.M, config.N, config.K
    tasks = np.random.default_rng(ss_tasks).permutation(M)[:K]
    # One game over all M library tasks (task t's own model is t); devices pick rows.
    world = random_game(M, N, list(range(M)), np.random.default_rng(ss_game), config.game)
    world_table = build_score_table(world, list(range(M)), config.shapley_method, config.permutations, ss_mc)
    table = ScoreTable(world_table.scores[:, :, tasks])
    library = Library(M, N, tuple(int(t) for t in tasks))
    c = qos_thresholds(table, library.task_model, config.rho)
    H = sample_channels(K, config.path_loss, ss_chan)
    scenario = Scenario(H=H, c=c, B=config.B, N0=config.noise_power, Q=config.Q, E=config.E)
    return Instance(library, table, c, scenario)


def select(config: ExperimentConfig, inst: Instance) -> SelectionMatrix:
    if config.selector == "bnb":
        warm = greedy_select(inst.library, inst.table, inst.c).selection
        return bnb_select(inst.library, inst.table, inst.c, incumbent=warm).selection
    return greedy_select(inst.library, inst.table, inst.c, replacement_order=config.replacement_order).selection


def _result(scheme, selection, schedule: PowerSchedule, inst: Instance, selector) -> TrialResult:
    rep = evaluate_schedule(selection, schedule, inst.scenario, inst.table)
    if not rep.c3:
        raise InfeasibleError(f"{scheme}: energy {rep.total_energy} exceeds budget {inst.scenario.E}")
    return TrialResult(
        scheme=scheme,
        latency=rep.total_latency,
        energy=rep.total_energy,
        blocks=selection.objective,
        qos_ok=rep.c2_per_device.copy(),
        scores=rep.scores.copy(),
        selector=selector,
    )


def run_mba(config: ExperimentConfig, trial_seed: int, inst: Instance | None = None,
            selection: SelectionMatrix | None = None) -> TrialResult:
    """Select blocks, then allocate power with the closed-form optimum."""
    inst = inst or build_instance(config, trial_seed)
    sel = selection if selection is not None else select(config, inst)
    sched = optimal_power_control(sel, inst.scenario)
    return _result("mba", sel, sched, inst, config.selector)


def run_constant_power_mba(config: ExperimentConfig, trial_seed: int, inst: Instance | None = None,
                           selection: SelectionMatrix | None = None) -> TrialResult:
    """Same selection as :func:`run_mba`, one power level for every block."""
    inst = inst or build_instance(config, trial_seed)
    sel = selection if selection is not None else select(config, inst)
    ch = equivalent_channels(sel, inst.scenario)
    blocks = ch.blocks()
    sched = constant_power_schedule(blocks, [ch.H_eq[b] for b in blocks], inst.scenario)
    return _result("constant_power", sel, sched, inst, config.selector)


def run_unicast(config: ExperimentConfig, trial_seed: int, inst: Instance | None = None) -> TrialResult:
    """Every device gets its own task model over its own channel; budget shared by all K*N sends."""
    inst = inst or build_instance(config, trial_seed)
    lib, sc = inst.library, inst.scenario
    gains = np.repeat(sc.H, lib.N)
    sends = [(k, n) for k in range(lib.K) for n in range(lib.N)]
    sched = schedule_for_channels(sends, gains, sc)
    scores = np.array([inst.table.model_score(lib.task_model[k], k) for k in range(lib.K)])
    energy = sched.total_energy
    if energy > sc.E * (1 + ENERGY_RTOL):
        raise InfeasibleError(f"unicast: energy {energy} exceeds budget {sc.E}")
    return TrialResult(
        scheme="unicast",
        latency=sched.total_latency,
        energy=energy,
        blocks=lib.K * lib.N,
        qos_ok=scores >= inst.c - SCORE_TOL,
        scores=scores,
        selector="own",
    )


def run_trial(config: ExperimentConfig, trial_seed: int) -> dict[str, TrialResult | MBAError]:
    """All three schemes on one instance; a scheme that fails maps to its exception."""
    inst = build_instance(config, trial_seed)
    out: dict = {}
    try:
        sel = select(config, inst)
    except MBAError as exc:
        return {s: exc for s in SCHEMES}
    for scheme, fn in (
        ("mba", lambda: run_mba(config, trial_seed, inst, sel)),
        ("constant_power", lambda: run_constant_power_mba(config, trial_seed, inst, sel)),
        ("unicast", lambda: run_unicast(config, trial_seed, inst)),
    ):
        try:
            out[scheme] = fn()
        except MBAError as exc:
            out[scheme] = exc
    return out


@dataclass(frozen=True)
class Lemma1Report:
    joint_latency: float
    decoupled_latency: float
    joint_status: str
    decoupled_status: str

    @property
    def relative_gap(self) -> float:
        if not (math.isfinite(self.joint_latency) and math.isfinite(self.decoupled_latency)):
            return 0.0 if self.joint_status == self.decoupled_status else math.inf
        return abs(self.decoupled_latency - self.joint_latency) / self.joint_latency

    @property
    def passed(self) -> bool:
        return self.joint_status == self.decoupled_status and self.relative_gap <= 1e-6


def _pc_latency(selection: SelectionMatrix, scenario: Scenario) -> float:
    return optimal_power_control(selection, scenario).total_latency


def verify_lemma1(config: ExperimentConfig, trial_seed: int, inst: Instance | None = None) -> Lemma1Report:
    """Joint minimum latency over every feasible selection vs. fewest-blocks-then-power."""
    if max(config.M, config.N, config.K) > 2:
        raise ConfigError("joint enumeration is limited to M, N, K <= 2")
    inst = inst or build_instance(config, trial_seed)
    lib, table, c, sc = inst.library, inst.table, inst.c, inst.scenario

    joint, joint_status = math.inf, "optimal"
    models = list(itertools.product(range(lib.M), repeat=lib.N))
    feasible = [
        [m for m in models if math.fsum(table.scores[i, n, k] for n, i in enumerate(m)) >= c[k] - SCORE_TOL]
        for k in range(lib.K)
    ]
    seen_feasible = False
    for combo in itertools.product(*feasible):
        seen_feasible = True
        try:
            joint = min(joint, _pc_latency(SelectionMatrix.from_models(combo, lib.M), sc))
        except InfeasibleError:
            continue
    if not seen_feasible or not math.isfinite(joint):
        joint_status = "infeasible"

    try:
        bf = brute_force_select(lib, table, c)
        decoupled, dec_status = _pc_latency(bf.selection, sc), "optimal"
    except InfeasibleError:
        decoupled, dec_status = math.inf, "infeasible"
    return Lemma1Report(joint, decoupled, joint_status, dec_status)


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    scheme: str
    trials: int
    mean_latency_s: float
    std_latency_s: float
    mean_energy_j: float
    mean_blocks: float
    qos_ok_rate: float

    def as_tuple(self):
        return tuple(getattr(self, f) for f in CSV_HEADER)


def _aggregate(axis_value, scheme, results: Sequence[TrialResult]) -> SweepRow:
    if not results:
        nan = float("nan")
        return SweepRow(float(axis_value), scheme, 0, nan, nan, nan, nan, nan)
    lat = np.array([r.latency for r in results])
    return SweepRow(
        axis_value=float(axis_value),
        scheme=scheme,
        trials=len(results),
        mean_latency_s=float(np.mean(lat)),
        std_latency_s=float(np.std(lat)),
        mean_energy_j=float(np.mean([r.energy for r in results])),
        mean_blocks=float(np.mean([r.blocks for r in results])),
        qos_ok_rate=float(np.mean([r.all_qos_ok for r in results])),
    )


def sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Average every scheme over ``trials`` seeds at each grid point.

    The same trial seeds are reused at every grid point. Failed trials are
    left out of the averages (``trials`` counts the ones that ran).
    """
    seeds = trial_seeds(config.seed, config.trials)
    rows = []
    for value in config.grid:
        cfg = config.at(value)
        per_scheme: dict[str, list[TrialResult]] = {s: [] for s in SCHEMES}
        for s in seeds:
            for scheme, res in run_trial(cfg, s).items():
                if isinstance(res, TrialResult):
                    per_scheme[scheme].append(res)
        rows.extend(_aggregate(value, scheme, per_scheme[scheme]) for scheme in SCHEMES)
    rows.sort(key=lambda r: (r.axis_value, SCHEMES.index(r.scheme)))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(v) for v in r.as_tuple()])
    return buf.getvalue()


def rows_to_json(rows: Sequence[SweepRow]) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    return json.dumps([{k: clean(v) for k, v in dataclasses.asdict(r).items()} for r in rows], indent=2)


def instance_to_dict(inst: Instance) -> dict:
    sc = inst.scenario
    return {
        "M": inst.library.M,
        "N": inst.library.N,
        "task_model": list(inst.library.task_model),
        "table": inst.table.to_dict(),
        "c": [float(v) for v in inst.c],
        "H": [float(v) for v in sc.H],
        "B": sc.B,
        "N0": sc.N0,
        "Q": sc.Q,
        "E": sc.E,
    }


def instance_from_dict(d: dict) -> Instance:
    try:
        library = Library(int(d["M"]), int(d["N"]), tuple(int(t) for t in d["task_model"]))
        table = ScoreTable.from_dict(d["table"])
        c = np.asarray(d["c"], dtype=float)
        sc = Scenario(H=np.asarray(d["H"], dtype=float), c=c, B=d["B"], N0=d["N0"], Q=d["Q"], E=d["E"])
    except KeyError as exc:
        raise ConfigError(f"scenario file is missing {exc}") from exc
    return Instance(library, table, c, sc)


def trial_to_dict(results: dict) -> dict:
    out = {}
    for scheme, r in results.items():
        if isinstance(r, TrialResult):
            out[scheme] = {
                "latency_s": r.latency,
                "energy_j": r.energy,
                "blocks": r.blocks,
                "qos_ok": [bool(v) for v in r.qos_ok],
                "scores": [float(v) for v in r.scores],
                "selector": r.selector,
            }
        else:
            out[scheme] = {"error": type(r).__name__, "message": str(r)}
    return out
