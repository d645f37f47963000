"""Energy-constrained broadcast power control.

Given which blocks are broadcast and who requests them, each block is sent at
the rate of its worst requester. Minimising total airtime under an energy
budget decouples per block once the energy multiplier ``beta`` is known; the
per-block optimum then has a closed form through the Lambert W function, and
``beta`` is pinned down by spending exactly the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Block, PowerSchedule, Scenario, SelectionMatrix, link_rate
from .errors import DomainError, InfeasibleBudgetError, SolverError
from .lambertw import lambert_w_offset

LN2 = math.log(2.0)


@dataclass(frozen=True)
class EquivalentChannels:
    """Per-block channel gain of the worst requester; zero for blocks not broadcast."""

    H_eq: np.ndarray

    def blocks(self) -> list[Block]:
        return [(int(i), int(n)) for i, n in zip(*np.nonzero(self.H_eq > 0))]

    def gains(self) -> np.ndarray:
        return self.H_eq[self.H_eq > 0]


@dataclass(frozen=True)
class Multiplier:
    beta: float
    residual: float
    iterations: int = 0


def equivalent_channels(selection: SelectionMatrix, scenario: Scenario) -> EquivalentChannels:
    M, N, K = selection.shape
    if K != scenario.K:
        raise DomainError(f"selection has {K} devices, scenario has {scenario.K}")
    H = np.where(selection.per_device, scenario.H[None, None, :], np.inf).min(axis=2)
    H[~np.isfinite(H)] = 0.0
    return EquivalentChannels(H)


def _offset(beta: float, H: float, N0: float) -> float:
    # W(.) + 1 for the argument (H - beta*N0) / (beta*N0*e); note 1 + e*arg = H/(beta*N0).
    return lambert_w_offset(H / (beta * N0))


def block_power(beta: float, H: float, scenario: Scenario) -> tuple[float, float]:
    """Optimal ``(power, airtime)`` for one block with equivalent gain ``H``."""
    if not beta > 0 or not H > 0:
        raise DomainError(f"need beta > 0 and H > 0, got beta={beta}, H={H}")
    u = _offset(beta, H, scenario.N0)
    p = scenario.N0 / H * math.expm1(u)
    T = scenario.Q * LN2 / (scenario.B * u)
    return p, T


def _block_energy(beta, H, scenario):
    u = _offset(beta, H, scenario.N0)
    if u == 0.0:
        return scenario.Q * LN2 * scenario.N0 / (scenario.B * H)
    return scenario.Q * LN2 * scenario.N0 * math.expm1(u) / (scenario.B * H * u)


def _gains(channels) -> np.ndarray:
    g = channels.gains() if isinstance(channels, EquivalentChannels) else np.asarray(channels, dtype=float)
    if np.any(g <= 0):
        raise DomainError("transmitted blocks need positive channel gains")
    return g


def energy_of_beta(beta: float, channels, scenario: Scenario) -> float:
    """Total energy spent by the closed-form schedule at multiplier ``beta``."""
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    return math.fsum(_block_energy(beta, float(h), scenario) for h in _gains(channels))


def energy_floor(channels, scenario: Scenario) -> float:
    """Energy needed as airtime grows without bound; budgets at or below it are infeasible."""
    g = _gains(channels)
    return math.fsum(scenario.Q * LN2 * scenario.N0 / (scenario.B * h) for h in g)


def solve_beta(channels, scenario: Scenario, tol: float = 1e-9, max_expand: int = 400) -> Multiplier:
    """Find the multiplier whose schedule spends the budget to relative ``tol``.

    The returned schedule never exceeds the budget: bisection keeps the
    bracket end whose energy is at most ``E``.
    """
    g = _gains(channels)
    if g.size == 0:
        raise DomainError("no blocks to transmit")
    E = scenario.E
    floor = energy_floor(g, scenario)
    if E <= floor:
        raise InfeasibleBudgetError(E, floor)

    f = lambda b: energy_of_beta(b, g, scenario)
    lo = hi = float(np.median(g)) / scenario.N0
    e_lo = e_hi = f(lo)
    steps = 0
    while e_lo < E:
        hi, e_hi = lo, e_lo
        lo /= 4.0
        e_lo = f(lo)
        steps += 1
        if steps > max_expand:
            raise SolverError("could not bracket beta from below")
    while e_hi > E:
        lo, e_lo = hi, e_hi
        hi *= 4.0
        e_hi = f(hi)
        steps += 1
        if steps > max_expand:
            raise SolverError("could not bracket beta from above")
    if not e_lo >= E >= e_hi:
        raise SolverError(f"energy not monotone on bracket [{lo}, {hi}]")

    it = 0
    while E - e_hi > tol * E:
        mid = math.sqrt(lo * hi)
        if mid in (lo, hi):
            break
        e_mid = f(mid)
        if e_mid > E:
            lo, e_lo = mid, e_mid
        else:
            hi, e_hi = mid, e_mid
        it += 1
        if it > 500:
            raise SolverError("beta bisection did not converge")
    return Multiplier(beta=hi, residual=abs(e_hi - E), iterations=it)


def schedule_for_channels(
    blocks: Sequence[Block], gains: Sequence[float], scenario: Scenario, tol: float = 1e-9
) -> PowerSchedule:
    """Closed-form optimal schedule for an explicit list of transmissions."""
    gains = np.asarray(gains, dtype=float)
    mult = solve_beta(gains, scenario, tol=tol)
    pt = [block_power(mult.beta, float(h), scenario) for h in gains]
    return PowerSchedule(
        blocks=tuple(blocks),
        H_eq=gains,
        power=np.array([p for p, _ in pt]),
        latency=np.array([t for _, t in pt]),
        beta=mult.beta,
    )


def optimal_power_control(selection: SelectionMatrix, scenario: Scenario, tol: float = 1e-9) -> PowerSchedule:
    """Minimum-latency schedule for the broadcast blocks of ``selection``."""
    ch = equivalent_channels(selection, scenario)
    blocks = ch.blocks()
    return schedule_for_channels(blocks, [ch.H_eq[b] for b in blocks], scenario, tol=tol)


def constant_power_schedule(
    blocks: Sequence[Block], gains: Sequence[float], scenario: Scenario, tol: float = 1e-9
) -> PowerSchedule:
    """Schedule with one power level for every block, chosen to spend the budget.

    Energy ``sum(Q p / R(p, H))`` increases with ``p`` from the same floor as
    the optimal schedule, so the level is found by bisection.
    """
    g = np.asarray(gains, dtype=float)
    E = scenario.E
    floor = energy_floor(g, scenario)
    if E <= floor:
        raise InfeasibleBudgetError(E, floor)

    def energy(p):
        return math.fsum(scenario.Q * p / link_rate(p, float(h), scenario.B, scenario.N0) for h in g)

    lo, hi = 1e-12, 1.0
    while energy(hi) < E:
        lo, hi = hi, hi * 4.0
        if hi > 1e300:
            raise SolverError("could not bracket constant power level")
    while energy(lo) > E:
        lo /= 4.0
        if lo < 1e-300:
            raise SolverError("could not bracket constant power level")
    it = 0
    while E - energy(lo) > tol * E:
        mid = math.sqrt(lo * hi)
        if mid in (lo, hi):
            break
        if energy(mid) > E:
            hi = mid
        else:
            lo = mid
        it += 1
        if it > 500:
            raise SolverError("constant power bisection did not converge")
    p = lo
    T = np.array([scenario.Q / link_rate(p, float(h), scenario.B, scenario.N0) for h in g])
    return PowerSchedule(blocks=tuple(blocks), H_eq=g, power=np.full(len(g), p), latency=T)


@dataclass(frozen=True)
class KKTReport:
    """Normalised KKT residuals of a schedule (all dimensionless)."""

    stationarity_T: float
    stationarity_p: float
    rate_slackness: float
    rate_feasibility: float
    energy_slackness: float
    dual_feasibility: float
    multipliers: dict

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity_T,
            self.stationarity_p,
            self.rate_slackness,
            self.rate_feasibility,
            self.energy_slackness,
            self.dual_feasibility,
        )

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_residual <= tol


def kkt_residuals(schedule: PowerSchedule, selection: SelectionMatrix, scenario: Scenario) -> KKTReport:
    """Check the Lagrangian optimality conditions of a broadcast schedule.

    The rate multiplier of each block's worst requester is rebuilt from the
    airtime stationarity condition; every other requester gets multiplier 0.
    The power stationarity condition is then an independent check.
    """
    beta = schedule.beta
    B, N0, Q = scenario.B, scenario.N0, scenario.Q
    st_T = st_p = cs_rate = feas = 0.0
    lambdas = {}
    for (i, n), p, T in zip(schedule.blocks, schedule.power, schedule.latency):
        ks = selection.requesters((i, n))
        if not ks:
            continue
        worst = min(ks, key=lambda k: scenario.H[k])
        Hw = float(scenario.H[worst])
        R = link_rate(p, Hw, B, N0)
        lam = (1.0 + beta * p) / R
        lambdas[(i, n, worst)] = lam
        st_T = max(st_T, abs(1.0 - lam * R + beta * p) / (1.0 + beta * p))
        dp = -(B / LN2) * T * lam * Hw / (N0 + p * Hw) + beta * T
        st_p = max(st_p, abs(dp) / (beta * T))
        cs_rate = max(cs_rate, abs(Q - T * R) / Q)
        for k in ks:
            feas = max(feas, max(Q - T * link_rate(p, float(scenario.H[k]), B, N0), 0.0) / Q)
    return KKTReport(
        stationarity_T=st_T,
        stationarity_p=st_p,
        rate_slackness=cs_rate,
        rate_feasibility=feas,
        energy_slackness=abs(schedule.total_energy - scenario.E) / scenario.E,
        dual_feasibility=max(-beta, 0.0) + sum(max(-v, 0.0) for v in lambdas.values()),
        multipliers={"beta": beta, "lambda": lambdas},
    )
