"""Parameter selection: which blocks each device receives.

Every device needs one block per position and a summed score of at least its
threshold; the goal is to broadcast as few distinct blocks as possible. This
module holds the greedy candidate-set heuristic and the exhaustive oracles;
the exact branch-and-bound solver lives in :mod:`mba.bnb`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import SCORE_TOL, Block, Library, ScoreTable, SelectionMatrix
from .errors import CapacityError, DomainError, InfeasibleError, InfeasibleTaskError

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class CandidateModel:
    """A model for one task: ``blocks[n]`` is the source library model at position ``n``."""

    blocks: tuple[int, ...]
    score: float

    def block_set(self) -> frozenset[Block]:
        return frozenset((i, n) for n, i in enumerate(self.blocks))


def _model_score(blocks: Sequence[int], table: ScoreTable, k: int) -> float:
    return math.fsum(table.scores[i, n, k] for n, i in enumerate(blocks))


def build_candidate_set(
    k: int, library: Library, table: ScoreTable, c_k: float, replacement_order: str = "descending"
) -> list[CandidateModel]:
    """Progressively block-swapped variants of task ``k``'s own model.

    Starting from the own model, positions are visited in order of the own
    block's score (``"descending"``: most valuable first, or ``"ascending"``),
    and each step swaps that position's block for the best same-position block
    of any other library model. Construction stops at the first variant that
    misses ``c_k``.
    """
    M, N = library.M, library.N
    own = library.task_model[k]
    seed = [own] * N
    seed_score = _model_score(seed, table, k)
    if seed_score < c_k - SCORE_TOL:
        raise InfeasibleTaskError(k, seed_score, c_k)
    own_scores = table.scores[own, :, k]
    if replacement_order == "descending":
        order = sorted(range(N), key=lambda n: (-own_scores[n], n))
    elif replacement_order == "ascending":
        order = sorted(range(N), key=lambda n: (own_scores[n], n))
    else:
        raise DomainError(f"unknown replacement order {replacement_order!r}")

    cands = [CandidateModel(tuple(seed), seed_score)]
    current = list(seed)
    for n in order:
        others = [i for i in range(M) if i != own]
        if not others:
            break
        # Highest score for task k; ties go to the lower model index.
        best = max(others, key=lambda i: (table.scores[i, n, k], -i))
        current = list(current)
        current[n] = best
        score = _model_score(current, table, k)
        if score < c_k - SCORE_TOL:
            break
        cands.append(CandidateModel(tuple(current), score))
    return cands


def distance(candidate: CandidateModel | frozenset, union: frozenset | set) -> int:
    """Number of blocks ``candidate`` would add to ``union``."""
    blocks = candidate.block_set() if isinstance(candidate, CandidateModel) else candidate
    return len(blocks | union) - len(union)


def reappearance(candidate: CandidateModel | frozenset, remaining_sets: Sequence[Sequence[CandidateModel]]) -> int:
    """Total block overlap between ``candidate`` and every candidate still to be processed."""
    blocks = candidate.block_set() if isinstance(candidate, CandidateModel) else candidate
    return sum(len(blocks & other.block_set()) for cset in remaining_sets for other in cset)


@dataclass(frozen=True)
class GreedyResult:
    selection: SelectionMatrix
    chosen: tuple[int, ...]
    candidate_sets: tuple[tuple[CandidateModel, ...], ...]

    @property
    def objective(self) -> int:
        return self.selection.objective


def greedy_select(
    library: Library,
    table: ScoreTable,
    c: Sequence[float],
    device_order: Sequence[int] | None = None,
    replacement_order: str = "descending",
) -> GreedyResult:
    """Pick one candidate per device, minimising new blocks per unit of future overlap.

    Devices are processed in ``device_order`` (default ascending). For each,
    the candidate minimising ``distance / reappearance`` is taken, with a zero
    reappearance counted as one; ties prefer the smaller distance, then the
    earlier candidate.
    """
    K = library.K
    order = list(range(K)) if device_order is None else [int(k) for k in device_order]
    if sorted(order) != list(range(K)):
        raise DomainError(f"device_order must be a permutation of 0..{K - 1}")
    sets = {k: build_candidate_set(k, library, table, c[k], replacement_order) for k in range(K)}

    union: frozenset[Block] = frozenset()
    chosen = [0] * K
    models: list[Sequence[int]] = [()] * K
    for step, k in enumerate(order):
        remaining = [sets[j] for j in order[step + 1:]]

        def key(idx):
            cand = sets[k][idx]
            d = distance(cand, union)
            u = reappearance(cand, remaining)
            return (Fraction(d, max(u, 1)), d, idx)

        best = min(range(len(sets[k])), key=key)
        chosen[k] = best
        models[k] = sets[k][best].blocks
        union = union | sets[k][best].block_set()
    sel = SelectionMatrix.from_models(models, library.M)
    return GreedyResult(sel, tuple(chosen), tuple(tuple(sets[k]) for k in range(K)))


def _feasible_models(k: int, library: Library, table: ScoreTable, c_k: float) -> list[tuple[int, ...]]:
    M, N = library.M, library.N
    s = table.scores[:, :, k]
    return [
        blocks
        for blocks in itertools.product(range(M), repeat=N)
        if math.fsum(s[i, n] for n, i in enumerate(blocks)) >= c_k - SCORE_TOL
    ]


def _check_capacity(library: Library, limit: int):
    size = library.M ** (library.N * library.K)
    if size > limit:
        raise CapacityError(f"{size} assignments exceed the brute-force limit {limit}")


def _mask(blocks: Sequence[int], N: int) -> int:
    m = 0
    for n, i in enumerate(blocks):
        m |= 1 << (i * N + n)
    return m


@dataclass(frozen=True)
class BruteForceResult:
    objective: int
    selection: SelectionMatrix


def brute_force_select(
    library: Library, table: ScoreTable, c: Sequence[float], limit: int = BRUTE_FORCE_LIMIT
) -> BruteForceResult:
    """Exhaustive minimum over one-block-per-position assignments meeting every threshold."""
    _check_capacity(library, limit)
    K, N = library.K, library.N
    feas = [_feasible_models(k, library, table, c[k]) for k in range(K)]
    for k, f in enumerate(feas):
        if not f:
            raise InfeasibleError(f"device {k}: no assembled model reaches threshold {c[k]:.6g}")
    masks = [[_mask(b, N) for b in f] for f in feas]
    best = [math.inf, None]
    picks = [0] * K

    def dfs(k, union):
        if k == K:
            z = union.bit_count()
            if z < best[0]:
                best[0], best[1] = z, list(picks)
            return
        for idx, m in enumerate(masks[k]):
            u = union | m
            # Only prunes branches that cannot beat the incumbent.
            if u.bit_count() >= best[0]:
                continue
            picks[k] = idx
            dfs(k + 1, u)

    dfs(0, 0)
    models = [feas[k][best[1][k]] for k in range(K)]
    return BruteForceResult(int(best[0]), SelectionMatrix.from_models(models, library.M))


@dataclass(frozen=True)
class MinZResult:
    z_star: int
    worst_margin: dict[int, float]


def min_z_search(
    library: Library, table: ScoreTable, c: Sequence[float], limit: int = BRUTE_FORCE_LIMIT
) -> MinZResult:
    """Optimal block count via a sequence of budgeted max-min problems.

    For ``Z = N, N+1, ...`` compute the best achievable worst-device margin
    ``min_k(score_k - c_k)`` over assignments broadcasting at most ``Z``
    blocks; the first ``Z`` with a nonnegative margin is the optimum.
    """
    _check_capacity(library, limit)
    M, N, K = library.M, library.N, library.K
    models = list(itertools.product(range(M), repeat=N))
    mmasks = [_mask(b, N) for b in models]
    margin = np.array([[_model_score(b, table, k) - c[k] for k in range(K)] for b in models])
    best_by_size: dict[int, float] = {}
    for combo in itertools.product(range(len(models)), repeat=K):
        union = 0
        for idx in combo:
            union |= mmasks[idx]
        z = union.bit_count()
        w = min(margin[idx, k] for k, idx in enumerate(combo))
        if w > best_by_size.get(z, -math.inf):
            best_by_size[z] = w
    curve = {}
    running = -math.inf
    for z in range(N, M * N + 1):
        running = max(running, best_by_size.get(z, -math.inf))
        curve[z] = running
    for z in range(N, M * N + 1):
        if curve[z] >= -SCORE_TOL:
            return MinZResult(z, curve)
    raise InfeasibleError("no block budget satisfies every threshold")
