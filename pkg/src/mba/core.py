"""Domain types and the communication / score metrics of the broadcast system.

Blocks are identified by ``(i, n)``: source library model ``i`` and position
``n``, both zero-based. Devices and tasks are indexed by ``k`` (zero-based),
and device ``k`` runs task ``k`` whose task-specific model is
``library.task_model[k]``. All physical quantities are SI (bits, Hz, W, s, J).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ArchitectureError,
    DomainError,
    InfiniteLatencyError,
    UndefinedRateError,
)

Block = tuple[int, int]

# Slack allowed when checking QoS thresholds; every selector uses the same value
# so that heuristic, exact and brute-force answers are comparable.
SCORE_TOL = 1e-9
# Relative slack on the energy budget.
ENERGY_RTOL = 1e-6


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Library:
    """A library of ``M`` models with ``N`` blocks each.

    ``task_model[k]`` is the library model trained for task ``k``.
    """

    M: int
    N: int
    task_model: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "task_model", tuple(int(t) for t in self.task_model))
        if self.M < 1 or self.N < 1:
            raise DomainError(f"need M >= 1 and N >= 1, got M={self.M}, N={self.N}")
        if len(set(self.task_model)) != len(self.task_model):
            raise DomainError(f"task_model must be injective, got {self.task_model}")
        if any(t < 0 or t >= self.M for t in self.task_model):
            raise DomainError(f"task_model entries must lie in 0..{self.M - 1}")

    @property
    def K(self) -> int:
        return len(self.task_model)

    def model_blocks(self, i: int) -> list[Block]:
        return [(i, n) for n in range(self.N)]


@dataclass(frozen=True)
class ScoreTable:
    """Reusability scores ``scores[i, n, k]`` of block ``(i, n)`` for task ``k``.

    ``raw`` optionally keeps the values the scores were derived from (e.g.
    unclamped Shapley values); it is not serialised.
    """

    scores: np.ndarray
    raw: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.raw is not None:
            object.__setattr__(self, "raw", _readonly(self.raw))
        s = _readonly(self.scores)
        if s.ndim != 3:
            raise DomainError(f"scores must be 3-D (M, N, K), got shape {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise DomainError("scores must be finite and nonnegative")
        object.__setattr__(self, "scores", s)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.scores.shape

    def model_score(self, i: int, k: int) -> float:
        """Score of library model ``i`` used unchanged for task ``k``."""
        return float(self.scores[i, :, k].sum())

    def to_dict(self) -> dict:
        M, N, K = self.shape
        return {"M": M, "N": N, "K": K, "scores": self.scores.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreTable":
        s = np.asarray(d["scores"], dtype=float)
        if s.shape != (d["M"], d["N"], d["K"]):
            raise DomainError(f"scores shape {s.shape} disagrees with header {(d['M'], d['N'], d['K'])}")
        return cls(s)

    @classmethod
    def from_json(cls, text: str) -> "ScoreTable":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Scenario:
    """Devices' channels and thresholds together with the radio parameters.

    ``N0`` is the total noise power (W) entering the link-rate formula.
    """

    H: np.ndarray
    c: np.ndarray
    B: float
    N0: float
    Q: float
    E: float

    def __post_init__(self):
        H = _readonly(np.atleast_1d(self.H))
        c = _readonly(np.atleast_1d(self.c))
        if H.shape != c.shape or H.ndim != 1:
            raise DomainError("H and c must be 1-D arrays of equal length")
        if np.any(H <= 0):
            raise DomainError("channel gains must be positive")
        if np.any(c < 0):
            raise DomainError("QoS thresholds must be nonnegative")
        for name in ("B", "N0", "Q", "E"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)

    @property
    def K(self) -> int:
        return len(self.H)

    def with_budget(self, E: float) -> "Scenario":
        return Scenario(self.H, self.c, self.B, self.N0, self.Q, E)

    def with_thresholds(self, c) -> "Scenario":
        return Scenario(self.H, c, self.B, self.N0, self.Q, self.E)


@dataclass(frozen=True)
class SelectionMatrix:
    """Per-device delivery indicators; the broadcast set is their union."""

    per_device: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.per_device)
        if a.ndim != 3:
            raise DomainError(f"per_device must be 3-D (M, N, K), got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise DomainError("per_device entries must be binary")
        object.__setattr__(self, "per_device", _readonly(a, dtype=bool))

    @classmethod
    def empty(cls, M: int, N: int, K: int) -> "SelectionMatrix":
        return cls(np.zeros((M, N, K), dtype=bool))

    @classmethod
    def from_models(cls, models: Sequence[Sequence[int]], M: int) -> "SelectionMatrix":
        """One assembled model per device: ``models[k][n]`` is the source model at ``n``."""
        K = len(models)
        N = len(models[0]) if K else 0
        a = np.zeros((M, N, K), dtype=bool)
        for k, blocks in enumerate(models):
            if len(blocks) != N:
                raise DomainError("all models must have N positions")
            for n, i in enumerate(blocks):
                a[i, n, k] = True
        return cls(a)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.per_device.shape

    @property
    def broadcast(self) -> np.ndarray:
        return self.per_device.any(axis=2)

    @property
    def objective(self) -> int:
        """Number of broadcast blocks."""
        return int(self.broadcast.sum())

    def broadcast_blocks(self) -> list[Block]:
        return [(int(i), int(n)) for i, n in zip(*np.nonzero(self.broadcast))]

    def requesters(self, block: Block) -> list[int]:
        i, n = block
        return [int(k) for k in np.nonzero(self.per_device[i, n])[0]]

    def received(self, k: int) -> set[Block]:
        return {(int(i), int(n)) for i, n in zip(*np.nonzero(self.per_device[:, :, k]))}

    def is_one_hot(self) -> bool:
        return bool(np.all(self.per_device.sum(axis=0) == 1))

    def models(self) -> list[list[int]]:
        """Source model per position for each device; requires one-hot selection."""
        if not self.is_one_hot():
            raise DomainError("selection is not one block per position per device")
        return [list(np.argmax(self.per_device[:, :, k], axis=0).astype(int)) for k in range(self.shape[2])]

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "alpha_broadcast": [list(b) for b in self.broadcast_blocks()],
            "alpha_device": {
                str(k): sorted([list(b) for b in self.received(k)]) for k in range(self.shape[2])
            },
            "shape": list(self.shape),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, shape: Sequence[int] | None = None) -> "SelectionMatrix":
        M, N, K = shape if shape is not None else d["shape"]
        a = np.zeros((M, N, K), dtype=bool)
        for k, blocks in d["alpha_device"].items():
            for i, n in blocks:
                a[i, n, int(k)] = True
        sel = cls(a)
        bc = {tuple(b) for b in d.get("alpha_broadcast", sel.broadcast_blocks())}
        if bc != set(sel.broadcast_blocks()):
            raise DomainError("alpha_broadcast is not the union of alpha_device")
        return sel


@dataclass(frozen=True)
class PowerSchedule:
    """Transmit power and airtime for each transmitted block."""

    blocks: tuple[Block, ...]
    H_eq: np.ndarray
    power: np.ndarray
    latency: np.ndarray
    beta: float = float("nan")
    total_latency: float = field(init=False)
    total_energy: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((int(i), int(n)) for i, n in self.blocks))
        for name in ("H_eq", "power", "latency"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        if not (len(self.blocks) == len(self.H_eq) == len(self.power) == len(self.latency)):
            raise DomainError("schedule arrays must match the block list")
        object.__setattr__(self, "total_latency", math.fsum(self.latency))
        object.__setattr__(self, "total_energy", math.fsum(self.latency * self.power))

    def power_matrix(self, M: int, N: int) -> np.ndarray:
        p = np.zeros((M, N))
        for (i, n), v in zip(self.blocks, self.power):
            p[i, n] = v
        return p

    def latency_matrix(self, M: int, N: int) -> np.ndarray:
        t = np.zeros((M, N))
        for (i, n), v in zip(self.blocks, self.latency):
            t[i, n] = v
        return t

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "blocks": [
                {"i": i, "n": n, "H_eq": float(h), "p_watts": float(p), "T_seconds": float(t)}
                for (i, n), h, p, t in zip(self.blocks, self.H_eq, self.power, self.latency)
            ],
            "total_latency_s": self.total_latency,
            "total_energy_j": self.total_energy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PowerSchedule":
        rows = d["blocks"]
        return cls(
            blocks=tuple((r["i"], r["n"]) for r in rows),
            H_eq=[r["H_eq"] for r in rows],
            power=[r["p_watts"] for r in rows],
            latency=[r["T_seconds"] for r in rows],
            beta=d.get("beta", float("nan")),
        )


def link_rate(p, H, B, N0):
    """Shannon rate ``B log2(1 + p H / N0)`` in bits/s."""
    if not B > 0 or not N0 > 0:
        raise DomainError(f"bandwidth and noise power must be positive (B={B}, N0={N0})")
    if np.ndim(p) == 0 and np.ndim(H) == 0:
        return B * math.log1p(p * H / N0) / math.log(2)
    return B * np.log1p(np.asarray(p) * np.asarray(H) / N0) / math.log(2)


def broadcast_rate(block: Block, selection: SelectionMatrix, p: float, scenario: Scenario) -> float:
    """Rate at which ``block`` can be broadcast: the worst requester's link rate."""
    ks = selection.requesters(block)
    if not ks:
        raise UndefinedRateError(f"block {block} has no requesting device")
    return min(link_rate(p, float(scenario.H[k]), scenario.B, scenario.N0) for k in ks)


def block_latency(block: Block, selection: SelectionMatrix, p: float, scenario: Scenario) -> float:
    """Airtime needed to deliver ``block`` to all its requesters at power ``p``.

    Blocks nobody requests are not sent and take zero time.
    """
    if not selection.requesters(block):
        return 0.0
    rate = broadcast_rate(block, selection, p, scenario)
    if rate <= 0:
        raise InfiniteLatencyError(f"block {block} requested but rate is zero (p={p})")
    return scenario.Q / rate


def assembled_score(received: Iterable[Block], table: ScoreTable, k: int) -> tuple[float, list[int]]:
    """Score of the best model device ``k`` can assemble from ``received``.

    Returns the score and, per position, the chosen source model (ties go to
    the lowest model index).
    """
    _, N, _ = table.shape
    best = [-1] * N
    for i, n in sorted(received):
        if best[n] < 0 or table.scores[i, n, k] > table.scores[best[n], n, k]:
            best[n] = i
    for n in range(N):
        if best[n] < 0:
            raise ArchitectureError(n)
    return math.fsum(table.scores[best[n], n, k] for n in range(N)), best


@dataclass(frozen=True)
class ScheduleReport:
    total_latency: float
    total_energy: float
    scores: np.ndarray
    c1_per_device: np.ndarray
    c2_per_device: np.ndarray
    c3: bool

    @property
    def c1(self) -> bool:
        return bool(self.c1_per_device.all())

    @property
    def c2(self) -> bool:
        return bool(self.c2_per_device.all())

    @property
    def feasible(self) -> bool:
        return self.c1 and self.c2 and self.c3


def evaluate_schedule(
    selection: SelectionMatrix, schedule: PowerSchedule, scenario: Scenario, table: ScoreTable
) -> ScheduleReport:
    """Recompute latency/energy from the schedule's powers and check (C1)-(C3).

    Violations are reported, never raised.
    """
    M, N, K = selection.shape
    power = dict(zip(schedule.blocks, schedule.power))
    latencies, energies = [], []
    for b in selection.broadcast_blocks():
        if b not in power:
            raise DomainError(f"schedule has no power for broadcast block {b}")
        t = block_latency(b, selection, float(power[b]), scenario)
        latencies.append(t)
        energies.append(t * float(power[b]))
    total_energy = math.fsum(energies)

    scores = np.zeros(K)
    c1 = np.zeros(K, dtype=bool)
    for k in range(K):
        recv = selection.received(k)
        try:
            scores[k], _ = assembled_score(recv, table, k)
            c1[k] = True
        except ArchitectureError:
            per_pos = table.scores[:, :, k] * selection.per_device[:, :, k]
            scores[k] = math.fsum(per_pos.max(axis=0))
    c2 = c1 & (scores >= scenario.c - SCORE_TOL)
    return ScheduleReport(
        total_latency=math.fsum(latencies),
        total_energy=total_energy,
        scores=scores,
        c1_per_device=c1,
        c2_per_device=c2,
        c3=total_energy <= scenario.E * (1 + ENERGY_RTOL),
    )


def selection_violations(selection: SelectionMatrix, table: ScoreTable, c, one_hot: bool = True) -> list[str]:
    """Human-readable list of violated selection constraints (empty if none).

    With ``one_hot`` each device must hold exactly one block per position and
    its score is the plain sum; otherwise at least one block per position and
    the assembled (max) score is used.
    """
    M, N, K = selection.shape
    counts = selection.per_device.sum(axis=0)
    out = []
    for k in range(K):
        for n in range(N):
            if counts[n, k] == 0 or (one_hot and counts[n, k] > 1):
                out.append(f"C1: device {k} holds {counts[n, k]} blocks at position {n}")
        if one_hot:
            score = math.fsum((table.scores[:, :, k] * selection.per_device[:, :, k]).ravel())
        else:
            per_pos = table.scores[:, :, k] * selection.per_device[:, :, k]
            score = math.fsum(per_pos.max(axis=0))
        if score < c[k] - SCORE_TOL:
            out.append(f"C2: device {k} scores {score:.6g} < {c[k]:.6g}")
    return out
