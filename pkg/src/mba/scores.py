"""Synthetic reusability scores from Shapley values of block-assembly games.

A :class:`UtilityGame` gives, for every task, the value of any coalition of
library blocks: the best model that can be assembled from the coalition (one
block per position, falling back to a per-position filler when the coalition
has nothing there). Interaction terms reward or penalise particular pairs of
blocks stacked at consecutive positions, so the best assembly is found by a
dynamic program over positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Block, ScoreTable
from .errors import CapacityError, DegenerateGameError, DomainError

MAX_EXACT_PLAYERS = 20


@dataclass(frozen=True)
class UtilityGame:
    """Block-coalition game for every task.

    quality[i, n, k]: value of block (i, n) for task k.
    baseline[n, k]: value of the filler used when position n is uncovered.
    interactions: {(i, n, j, k): w}, added when block (i, n) sits directly
    below block (j, n + 1) in task k's assembly.
    """

    quality: np.ndarray
    baseline: np.ndarray
    interactions: Mapping[tuple[int, int, int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        q = np.asarray(self.quality, dtype=float)
        b = np.asarray(self.baseline, dtype=float)
        if q.ndim != 3 or b.shape != q.shape[1:]:
            raise DomainError(f"quality must be (M, N, K) and baseline (N, K); got {q.shape}, {b.shape}")
        if np.any(q < 0) or np.any(b < 0):
            raise DomainError("qualities and baselines must be nonnegative")
        M, N, K = q.shape
        for (i, n, j, k) in self.interactions:
            if not (0 <= i < M and 0 <= j < M and 0 <= n < N - 1 and 0 <= k < K):
                raise DomainError(f"interaction key {(i, n, j, k)} out of range")
        object.__setattr__(self, "quality", q)
        object.__setattr__(self, "baseline", b)
        object.__setattr__(self, "interactions", dict(self.interactions))
        by_task: dict[int, dict] = {}
        for (i, n, j, k), w in self.interactions.items():
            by_task.setdefault(k, {})[(i, n, j)] = float(w)
        object.__setattr__(self, "_by_task", by_task)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.quality.shape

    @property
    def n_players(self) -> int:
        M, N, _ = self.shape
        return M * N

    def player(self, p: int) -> Block:
        N = self.shape[1]
        return divmod(p, N)

    def player_index(self, block: Block) -> int:
        return block[0] * self.shape[1] + block[1]

    def has_interactions(self, k: int) -> bool:
        return bool(self._by_task.get(k))

    def value_mask(self, mask: int, k: int) -> float:
        """Coalition value for a coalition given as a bitmask over player indices."""
        M, N, _ = self.shape
        per_pos: list[list[int]] = [[] for _ in range(N)]
        p = 0
        m = mask
        while m:
            if m & 1:
                i, n = divmod(p, N)
                per_pos[n].append(i)
            m >>= 1
            p += 1
        return self._best_assembly(per_pos, k)

    def _best_assembly(self, per_pos: Sequence[Sequence[int]], k: int) -> float:
        q = self.quality
        base = self.baseline
        inter = self._by_task.get(k)
        if not inter:
            return math.fsum(
                max([base[n, k]] + [q[i, n, k] for i in per_pos[n]]) for n in range(len(per_pos))
            )
        # Viterbi over positions; option -1 is the filler, which has no interactions.
        prev: dict[int, float] = {}
        for n, avail in enumerate(per_pos):
            cur: dict[int, float] = {}
            for opt in [-1, *avail]:
                own = base[n, k] if opt < 0 else q[opt, n, k]
                if n == 0:
                    cur[opt] = own
                    continue
                best = -math.inf
                for po, pv in prev.items():
                    w = inter.get((po, n - 1, opt), 0.0) if po >= 0 and opt >= 0 else 0.0
                    best = max(best, pv + w)
                cur[opt] = own + best
            prev = cur
        return max(prev.values())


def coalition_value(coalition: Iterable[Block], k: int, game: UtilityGame) -> float:
    """Value for task ``k`` of the best model assembled from ``coalition``."""
    M, N, _ = game.shape
    per_pos: list[list[int]] = [[] for _ in range(N)]
    for i, n in set(coalition):
        if not (0 <= i < M and 0 <= n < N):
            raise DomainError(f"block {(i, n)} is not a player")
        per_pos[n].append(i)
    return game._best_assembly(per_pos, k)


def _all_values(game: UtilityGame, k: int) -> np.ndarray:
    n = game.n_players
    size = 1 << n
    if not game.has_interactions(k):
        masks = np.arange(size, dtype=np.int64)
        M, N, _ = game.shape
        total = np.zeros(size)
        for pos in range(N):
            best = np.full(size, game.baseline[pos, k])
            for i in range(M):
                p = i * N + pos
                has = ((masks >> p) & 1).astype(bool)
                best = np.where(has, np.maximum(best, game.quality[i, pos, k]), best)
            total += best
        return total
    return np.array([game.value_mask(m, k) for m in range(size)])


def exact_shapley(game: UtilityGame, k: int) -> np.ndarray:
    """Shapley value of every player for task ``k`` by full coalition enumeration.

    Returns a vector indexed by player (``i * N + n``).
    """
    n = game.n_players
    if n > MAX_EXACT_PLAYERS:
        raise CapacityError(
            f"{n} players exceed the exact limit of {MAX_EXACT_PLAYERS}; use mc_shapley or separable_shapley"
        )
    v = _all_values(game, k)
    masks = np.arange(1 << n, dtype=np.int64)
    size = np.zeros(1 << n, dtype=np.int64)
    for p in range(n):
        size += (masks >> p) & 1
    weight = np.array([math.factorial(s) * math.factorial(n - 1 - s) / math.factorial(n) for s in range(n)])
    phi = np.zeros(n)
    for p in range(n):
        without = masks[((masks >> p) & 1) == 0]
        phi[p] = math.fsum(weight[size[without]] * (v[without | (1 << p)] - v[without]))
    return phi


def mc_shapley(
    game: UtilityGame, k: int, permutations: int, seed=None, truncation: float = 0.0
) -> np.ndarray:
    """Permutation-sampling Shapley estimate for task ``k``.

    With ``truncation > 0`` a permutation stops being scanned once the running
    coalition is within ``truncation * |v(all)|`` of the grand-coalition value
    (later marginals are taken as zero).
    """
    if permutations < 1:
        raise DomainError("need at least one permutation")
    n = game.n_players
    rng = np.random.default_rng(seed)
    cache: dict[int, float] = {}

    def v(mask):
        val = cache.get(mask)
        if val is None:
            val = cache[mask] = game.value_mask(mask, k)
        return val

    v_full = v((1 << n) - 1)
    phi = np.zeros(n)
    for _ in range(permutations):
        mask = 0
        prev = v(0)
        for p in rng.permutation(n):
            if truncation > 0 and abs(v_full - prev) <= truncation * abs(v_full):
                break
            mask |= 1 << int(p)
            cur = v(mask)
            phi[p] += cur - prev
            prev = cur
    return phi / permutations


def separable_shapley(game: UtilityGame, k: int) -> np.ndarray:
    """Exact Shapley values for a game without interactions, in closed form.

    Such a game is a sum over positions of ``max(filler, best block present)``;
    for each position that is a max-game whose Shapley values follow from the
    sorted block values.
    """
    if game.has_interactions(k):
        raise DomainError("closed form applies only to games without interactions")
    M, N, _ = game.shape
    phi = np.zeros((M, N))
    for n in range(N):
        y = np.maximum(game.quality[:, n, k] - game.baseline[n, k], 0.0)
        order = np.argsort(y, kind="stable")
        ys = y[order]
        inc = np.diff(np.concatenate([[0.0], ys]))
        share = inc / (M - np.arange(M))
        phi[order, n] = np.cumsum(share)
    return phi.reshape(-1)


def task_shapley(game: UtilityGame, k: int, method: str = "auto", permutations: int = 2000, seed=None) -> np.ndarray:
    if method == "auto":
        if not game.has_interactions(k):
            method = "separable"
        elif game.n_players <= MAX_EXACT_PLAYERS:
            method = "exact"
        else:
            method = "mc"
    if method == "separable":
        return separable_shapley(game, k)
    if method == "exact":
        return exact_shapley(game, k)
    if method == "mc":
        return mc_shapley(game, k, permutations, seed)
    raise DomainError(f"unknown Shapley method {method!r}")


def build_score_table(
    game: UtilityGame,
    task_model: Sequence[int],
    method: str = "auto",
    permutations: int = 2000,
    seed=None,
) -> ScoreTable:
    """Clamp Shapley values at zero and scale each task so its own model scores 1.

    The unclamped, unscaled values are kept on ``table.raw``.
    """
    M, N, K = game.shape
    if len(task_model) != K:
        raise DomainError(f"need one task model per task ({K}), got {len(task_model)}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(K) if method in ("mc", "auto") else [None] * K
    raw = np.zeros((M, N, K))
    scores = np.zeros((M, N, K))
    for k in range(K):
        phi = task_shapley(game, k, method, permutations, seeds[k]).reshape(M, N)
        raw[:, :, k] = phi
        clamped = np.maximum(phi, 0.0)
        own = clamped[task_model[k]].sum()
        if not own > 0:
            raise DegenerateGameError(f"task {k}: own model {task_model[k]} has total score {own}")
        scores[:, :, k] = clamped / own
    return ScoreTable(scores, raw=raw)


def qos_thresholds(table: ScoreTable, task_model: Sequence[int], rho: float) -> np.ndarray:
    """Thresholds ``c_k = rho * (score of task k's own model)``."""
    if not 0 < rho <= 1:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    return np.array([rho * table.model_score(i, k) for k, i in enumerate(task_model)])


@dataclass
class GameConfig:
    """Distribution of synthetic games.

    Non-own block qualities are ``affinity[i, k] * U(quality_low, quality_high)``
    where the model-task affinity is drawn per pair; own-model blocks get
    ``own_bonus`` on top of the upper end. Adjacent-position interactions are
    drawn with probability ``interaction_density`` and magnitude
    ``interaction_scale``.
    """

    quality_low: float = 0.0
    quality_high: float = 1.0
    own_bonus: float = 0.2
    affinity_low: float = 1.0
    affinity_high: float = 1.0
    baseline: float = 0.0
    interaction_density: float = 0.0
    interaction_scale: float = 0.1


def random_game(M: int, N: int, task_model: Sequence[int], rng, config: GameConfig | None = None) -> UtilityGame:
    """Draw a game over the ``K = len(task_model)`` requested tasks."""
    cfg = config or GameConfig()
    rng = np.random.default_rng(rng)
    K = len(task_model)
    affinity = rng.uniform(cfg.affinity_low, cfg.affinity_high, size=(M, 1, K))
    q = affinity * rng.uniform(cfg.quality_low, cfg.quality_high, size=(M, N, K))
    for k, i in enumerate(task_model):
        q[i, :, k] = cfg.quality_high + cfg.own_bonus * rng.uniform(0.5, 1.0, size=N)
    interactions = {}
    if cfg.interaction_density > 0 and N > 1:
        for k in range(K):
            for n in range(N - 1):
                for i in range(M):
                    for j in range(M):
                        if rng.random() < cfg.interaction_density:
                            interactions[(i, n, j, k)] = cfg.interaction_scale * rng.uniform(-1.0, 1.0)
    return UtilityGame(q, np.full((N, K), cfg.baseline), interactions)
