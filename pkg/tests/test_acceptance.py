"""End-to-end acceptance checks, one per criterion.

Each test prints a single PASS/FAIL line with the measured numbers, then
asserts. Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest
from oracles import numerical_min_latency

from mba.bnb import bnb_select
from mba.cli import main as cli_main
from mba.harness import (
    ExperimentConfig,
    build_instance,
    run_constant_power_mba,
    run_mba,
    run_trial,
    sweep,
    trial_seeds,
    verify_lemma1,
)
from mba.lambertw import lambert_w
from mba.power import energy_floor, equivalent_channels, kkt_residuals, optimal_power_control
from mba.scores import GameConfig, UtilityGame, exact_shapley, mc_shapley, random_game
from mba.selection import brute_force_select, greedy_select

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return emit


def test_bnb_matches_brute_force(report):
    t0 = time.perf_counter()
    mismatches = []
    for s in trial_seeds(1, 100):
        r = np.random.default_rng(s)
        M = int(r.integers(1, 4))
        N = int(r.integers(1, 4))
        K = int(r.integers(1, M + 1))
        inst = build_instance(ExperimentConfig(M=M, N=N, K=K, noise_mode="power"), s)
        bf = brute_force_select(inst.library, inst.table, inst.c).objective
        bb = bnb_select(inst.library, inst.table, inst.c).objective
        if bf != bb:
            mismatches.append((M, N, K, bf, bb))
    elapsed = time.perf_counter() - t0
    report("selection oracle equivalence", not mismatches and elapsed < 60.0,
           f"{100 - len(mismatches)}/100 equal, {elapsed:.2f} s")


def test_greedy_quality(report):
    ratios = []
    for s in trial_seeds(2, 200):
        r = np.random.default_rng(s)
        K = int(r.integers(1, 9))
        N = int(r.integers(1, 4))
        cfg = ExperimentConfig(M=K, N=N, K=K, noise_mode="power", game=GameConfig())
        inst = build_instance(cfg, s)
        g = greedy_select(inst.library, inst.table, inst.c)
        opt = bnb_select(inst.library, inst.table, inst.c, incumbent=g.selection)
        ratios.append(g.objective / opt.objective)
    ratios = np.array(ratios)
    mean, equal = ratios.mean(), np.mean(ratios == 1.0)
    edges = [1.0, 1.1, 1.2, 1.3, 1.4, np.inf]
    counts, _ = np.histogram(ratios, bins=edges)
    hist = {f"[{a}, {b})": int(n) for a, b, n in zip(edges, edges[1:], counts)}
    report("greedy quality", mean <= 1.15 and equal >= 0.60,
           f"mean ratio {mean:.4f}, equal on {equal:.1%}, max {ratios.max():.3f}, histogram {hist}")


def test_power_control_optimality(report):
    worst_gap = worst_kkt = worst_energy = 0.0
    done = 0
    for s in trial_seeds(3, 50):
        r = np.random.default_rng(s)
        cfg = ExperimentConfig(M=2, N=3, K=int(r.integers(1, 3)), noise_mode="bandwidth")
        inst = build_instance(cfg, s)
        sel = greedy_select(inst.library, inst.table, inst.c).selection
        ch = equivalent_channels(sel, inst.scenario)
        gains = [ch.H_eq[b] for b in ch.blocks()]
        assert len(gains) <= 6
        sc = inst.scenario.with_budget(float(r.uniform(1.2, 20.0)) * energy_floor(gains, inst.scenario))
        sched = optimal_power_control(sel, sc)
        ref = numerical_min_latency(gains, sc)
        worst_gap = max(worst_gap, abs(sched.total_latency - ref) / ref)
        worst_kkt = max(worst_kkt, kkt_residuals(sched, sel, sc).max_residual)
        worst_energy = max(worst_energy, abs(sched.total_energy - sc.E) / sc.E)
        done += 1
    ok = done == 50 and worst_gap <= 1e-3 and worst_kkt <= 1e-6 and worst_energy <= 1e-6
    report("power control optimality", ok,
           f"{done} instances, worst latency gap {worst_gap:.2e}, worst KKT {worst_kkt:.2e}, "
           f"worst energy error {worst_energy:.2e}")


def test_lambert_w(report):
    lo = -1 / math.e + 1e-9
    neg = -np.logspace(math.log10(-lo), -12, 5000)
    pos = np.logspace(-12, 8, 5000)
    x = np.concatenate([neg, pos])
    w = lambert_w(x)
    # Relative: at x ~ 1e8 even the correctly rounded W leaves an absolute residual near 1e-8.
    resid = np.abs(w * np.exp(w) - x) / np.abs(x)
    worst = float(resid.max())
    w0, we = float(lambert_w(0.0)), float(lambert_w(math.e))
    ok = worst <= 1e-12 and abs(w0) <= 1e-14 and abs(we - 1.0) <= 1e-14
    report("lambert W", ok, f"{x.size} samples, worst relative identity residual {worst:.2e}, W(0)={w0!r}, W(e)={we!r}")


def test_selection_then_power_decoupling(report):
    cfg = ExperimentConfig(M=2, N=2, K=2, noise_mode="bandwidth", E=1e4)
    reps = [verify_lemma1(cfg, s) for s in trial_seeds(5, 50)]
    passed = sum(r.passed for r in reps)
    gap = max(r.relative_gap for r in reps)
    report("decoupling", passed == 50 and gap <= 1e-6, f"{passed}/50 equal, max relative gap {gap:.2e}")


def test_latency_gain(report):
    # The stated constants with noise_density read as watts (see README).
    cfg = ExperimentConfig(noise_mode="power", E=250.0)
    seeds = trial_seeds(6, 20)
    t0 = time.perf_counter()
    mba, uni, dominated = [], [], True
    gaps = []
    for s in seeds:
        res = run_trial(cfg, s)
        mba.append(res["mba"].latency)
        uni.append(res["unicast"].latency)
        dominated &= res["mba"].latency <= res["constant_power"].latency * (1 + 1e-12)
        lo = cfg.replace(E=200.0)
        inst = build_instance(lo, s)
        m200 = run_mba(lo, s, inst).latency
        c200 = run_constant_power_mba(lo, s, inst).latency
        dominated &= m200 <= c200 * (1 + 1e-12)
        gaps.append(c200 / m200 - 1.0)
    elapsed = time.perf_counter() - t0
    ratio = float(np.mean(mba) / np.mean(uni))
    gap = float(np.mean(gaps))
    ok = ratio <= 0.7 and dominated and gap >= 0.10 and elapsed <= 600
    report("latency gain", ok,
           f"MBA/unicast {ratio:.3f} (need <=0.7), MBA<=constant on every seed: {dominated}, "
           f"constant-power gap at 200 J {gap:.4%} (need >=10%), {elapsed:.1f} s")


def test_monotone_sweeps(report):
    base = ExperimentConfig(noise_mode="power", trials=5, seed=7)
    rows = sweep(base.replace(axis="energy", grid=(200.0, 240.0, 280.0, 320.0)))
    e_lat = [r.mean_latency_s for r in rows if r.scheme == "mba"]
    e_ok = all(a > b for a, b in zip(e_lat, e_lat[1:])) and all(r.trials == 5 for r in rows)

    rows = sweep(base.replace(axis="devices", grid=tuple(range(2, 21))))
    by = {}
    for r in rows:
        by.setdefault(r.axis_value, {})[r.scheme] = r
    per_dev = [(by[K]["unicast"].mean_latency_s - by[K]["mba"].mean_latency_s) / K for K in sorted(by)]
    d_ok = all(b >= a for a, b in zip(per_dev, per_dev[1:])) and all(r.trials == 5 for r in rows)
    report("monotone sweeps", e_ok and d_ok,
           f"energy latencies {[round(v, 5) for v in e_lat]}, per-device gap "
           f"{per_dev[0]:.5f} at K=2 to {per_dev[-1]:.5f} at K=20, non-decreasing: {d_ok}")


def _symmetric_game(rng):
    """Random game where blocks (0, 0) and (1, 0) are interchangeable and (M-1, N-1) is a dummy."""
    M, N = int(rng.integers(3, 5)), int(rng.integers(2, 4))
    g = random_game(M, N, [0], rng, GameConfig(interaction_density=0.5, interaction_scale=0.3))
    q = g.quality.copy()
    q[1, 0, 0] = q[0, 0, 0]
    q[M - 1, N - 1, 0] = 0.0
    inter = {}
    for (i, n, j, k), w in g.interactions.items():
        if (i, n) == (1, 0) or (j, n + 1) == (M - 1, N - 1):
            continue
        inter[(i, n, j, k)] = w
        if (i, n) == (0, 0):
            inter[(1, 0, j, k)] = w
    return UtilityGame(q, np.zeros_like(g.baseline), inter)


def test_shapley_suite(report):
    rng = np.random.default_rng(8)
    eff = sym = dummy = 0.0
    for _ in range(50):
        g = _symmetric_game(rng)
        phi = exact_shapley(g, 0)
        full = g.value_mask((1 << g.n_players) - 1, 0) - g.value_mask(0, 0)
        M, N = g.quality.shape[:2]
        eff = max(eff, abs(phi.sum() - full))
        sym = max(sym, abs(phi[g.player_index((0, 0))] - phi[g.player_index((1, 0))]))
        dummy = max(dummy, abs(phi[g.player_index((M - 1, N - 1))]))
    axioms_ok = eff <= 1e-12 and sym <= 1e-12 and dummy <= 1e-12

    mc_worst = 0.0
    for seed in range(5):
        r = np.random.default_rng(100 + seed)
        M, N = (2, 4) if seed % 2 == 0 else (4, 2)
        g = random_game(M, N, [0], r, GameConfig(interaction_density=0.6, interaction_scale=0.3))
        exact = exact_shapley(g, 0)
        est = mc_shapley(g, 0, 20_000, seed=seed)
        mc_worst = max(mc_worst, float(np.abs(est - exact).max() / (exact.max() - exact.min())))
    report("shapley suite", axioms_ok and mc_worst <= 0.05,
           f"50 games: efficiency {eff:.1e}, symmetry {sym:.1e}, dummy {dummy:.1e}; "
           f"MC error on 8 players {mc_worst:.4f} of range")


def test_sweep_determinism(report, tmp_path):
    args = ["sweep", "--seed", "9", "--noise-mode", "power", "--axis", "devices", "--grid", "2,6,10", "--trials", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    codes = (cli_main([*args, "--out", str(a)]), cli_main([*args, "--out", str(b)]))
    same = a.read_bytes() == b.read_bytes()
    report("determinism", codes == (0, 0) and same, f"exit codes {codes}, identical bytes: {same}, {a.stat().st_size} B")
