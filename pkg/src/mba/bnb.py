"""Exact parameter selection by branch and bound over the per-device indicators.

Variables are the per-device indicators ``x[k, n, i]`` (tiers ordered by
``k``, then ``n``, then ``i``) followed by the broadcast indicators
``y[i, n]``. A node fixes a prefix of the tiers; the one-block-per-position
rule is propagated at every fixing, so tree nodes that would break it are
never created. Each node is bounded by the LP relaxation of the remaining
problem.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SCORE_TOL, Library, ScoreTable, SelectionMatrix, selection_violations
from .errors import DomainError, InfeasibleError, SolverError
from .lp import LinearProgram, LPResult, solve_lp

INTEGRAL_TOL = 1e-6


@dataclass(frozen=True)
class Layout:
    """Index arithmetic for the relaxation's variables."""

    M: int
    N: int
    K: int

    @property
    def n_device(self) -> int:
        return self.M * self.N * self.K

    @property
    def n_vars(self) -> int:
        return self.n_device + self.M * self.N

    def x(self, k: int, n: int, i: int) -> int:
        return (k * self.N + n) * self.M + i

    def y(self, i: int, n: int) -> int:
        return self.n_device + i * self.N + n

    def tier(self, t: int) -> tuple[int, int, int]:
        """``(k, n, i)`` of tier ``t``."""
        kn, i = divmod(t, self.M)
        k, n = divmod(kn, self.N)
        return k, n, i

    def group(self, t: int) -> range:
        start = (t // self.M) * self.M
        return range(start, start + self.M)

    def to_selection(self, x: np.ndarray) -> SelectionMatrix:
        a = np.rint(x[: self.n_device]).reshape(self.K, self.N, self.M).transpose(2, 1, 0)
        return SelectionMatrix(a.astype(bool))


def _template(library: Library, table: ScoreTable, c: Sequence[float]) -> LinearProgram:
    M, N, K = library.M, library.N, library.K
    if table.shape != (M, N, K):
        raise DomainError(f"score table shape {table.shape} does not match library {(M, N, K)}")
    L = Layout(M, N, K)
    rows, senses, rhs = [], [], []
    for k in range(K):
        for n in range(N):
            r = np.zeros(L.n_vars)
            r[[L.x(k, n, i) for i in range(M)]] = 1.0
            rows.append(r)
            senses.append("=")
            rhs.append(1.0)
    for k in range(K):
        r = np.zeros(L.n_vars)
        for n in range(N):
            for i in range(M):
                r[L.x(k, n, i)] = table.scores[i, n, k]
        rows.append(r)
        senses.append(">=")
        rhs.append(c[k] - SCORE_TOL)
    for k in range(K):
        for n in range(N):
            for i in range(M):
                r = np.zeros(L.n_vars)
                r[L.x(k, n, i)] = 1.0
                r[L.y(i, n)] = -1.0
                rows.append(r)
                senses.append("<=")
                rhs.append(0.0)
    cost = np.zeros(L.n_vars)
    cost[L.n_device:] = 1.0
    return LinearProgram(cost, np.array(rows), senses, np.array(rhs), np.zeros(L.n_vars), np.ones(L.n_vars))


@dataclass(order=True)
class BnBNode:
    """A tree node: tiers before ``depth`` are fixed (-1 marks a free variable)."""

    sort_key: tuple = field(init=False, repr=False)
    depth: int = field(compare=False)
    fixed: np.ndarray = field(compare=False, repr=False)
    bound: float = field(compare=False, default=-math.inf)
    parent_x: np.ndarray | None = field(compare=False, default=None, repr=False)
    serial: int = field(compare=False, default=0)

    def __post_init__(self):
        # Best bound first; deeper first on ties; then creation order.
        self.sort_key = (self.bound, -self.depth, self.serial)


def relaxed_lp(
    node: BnBNode, library: Library, table: ScoreTable, c: Sequence[float], template: LinearProgram | None = None
) -> LinearProgram:
    """The node's LP: fixed indicators pinned, the rest relaxed to [0, 1]."""
    base = template if template is not None else _template(library, table, c)
    lo = base.lo.copy()
    hi = base.hi.copy()
    f = node.fixed
    set_ = f >= 0
    lo[: f.size][set_] = f[set_]
    hi[: f.size][set_] = f[set_]
    return LinearProgram(base.c, base.A, base.senses, base.b, lo, hi, base.offset)


def _propagate(fixed: np.ndarray, L: Layout, t: int) -> bool:
    """Apply one-block-per-position to tier ``t``'s group; False if the group is dead."""
    g = L.group(t)
    vals = fixed[g.start: g.stop]
    ones = int((vals == 1).sum())
    if ones > 1:
        return False
    if ones == 1:
        vals[vals == -1] = 0
        return True
    free = np.nonzero(vals == -1)[0]
    if free.size == 0:
        return False
    if free.size == 1:
        vals[free[0]] = 1
    return True


def _is_integral(x: np.ndarray) -> bool:
    return bool(np.all(np.abs(x - np.rint(x)) <= INTEGRAL_TOL))


@dataclass
class BnBResult:
    selection: SelectionMatrix
    objective: int
    root_bound: float
    nodes: int
    lp_solves: int
    pruned: dict = field(default_factory=dict)


def bnb_select(
    library: Library,
    table: ScoreTable,
    c: Sequence[float],
    node_order: str = "best_first",
    incumbent: SelectionMatrix | None = None,
    integer_bound: bool = True,
    max_nodes: int = 2_000_000,
) -> BnBResult:
    """Minimum number of broadcast blocks, by LP-bounded tree search.

    ``node_order`` is ``"best_first"`` (lowest bound, deeper on ties) or
    ``"depth_first"``. A feasible ``incumbent`` (e.g. the greedy answer) only
    seeds the pruning threshold. With ``integer_bound`` node bounds are
    rounded up, since the objective is a block count.
    """
    if node_order not in ("best_first", "depth_first"):
        raise DomainError(f"unknown node order {node_order!r}")
    L = Layout(library.M, library.N, library.K)
    tpl = _template(library, table, c)

    best_obj = math.inf
    best_sel = None
    if incumbent is not None:
        if selection_violations(incumbent, table, c):
            raise DomainError("warm-start incumbent violates the selection constraints")
        best_obj, best_sel = incumbent.objective, incumbent

    counter = itertools.count()
    root = BnBNode(depth=0, fixed=np.full(L.n_device, -1, dtype=np.int8), serial=next(counter))
    heap = [root]
    stack = [root]
    nodes = lp_solves = 0
    root_bound = math.nan
    pruned = {"infeasible": 0, "bound": 0, "integral": 0, "architecture": 0}

    def effective(b):
        return math.ceil(b - INTEGRAL_TOL) if integer_bound and math.isfinite(b) else b

    while heap if node_order == "best_first" else stack:
        node = heapq.heappop(heap) if node_order == "best_first" else stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise SolverError(f"node limit {max_nodes} reached (incumbent {best_obj})")
        if effective(node.bound) >= best_obj:
            pruned["bound"] += 1
            continue
        px = node.parent_x
        fixed = node.fixed
        if px is not None and np.all((fixed < 0) | (np.abs(px[: L.n_device] - fixed) <= 1e-9)):
            # Parent optimum still satisfies the new fixing, so it stays optimal.
            res = LPResult("optimal", value=node.bound, x=px)
        else:
            lp = relaxed_lp(node, library, table, c, tpl)
            try:
                res = solve_lp(lp)
            except SolverError as exc:
                raise SolverError(f"LP failed at depth {node.depth}: {exc}") from exc
            lp_solves += 1
        if nodes == 1:
            root_bound = res.value if res.optimal else math.inf
            if not res.optimal:
                raise InfeasibleError(f"root relaxation is {res.status}: {res.info}")
        if not res.optimal:
            pruned["infeasible"] += 1
            continue
        bound = res.value
        if effective(bound) >= best_obj:
            pruned["bound"] += 1
            continue
        if _is_integral(res.x):
            sel = L.to_selection(res.x)
            if not selection_violations(sel, table, c) and sel.objective < best_obj:
                best_obj, best_sel = sel.objective, sel
                pruned["integral"] += 1
                continue

        t = node.depth
        while t < L.n_device and fixed[t] >= 0:
            t += 1
        if t == L.n_device:
            # Everything fixed yet not accepted: numerically integral-only failure.
            pruned["infeasible"] += 1
            continue
        children = []
        for v in (1, 0):
            f = fixed.copy()
            f[t] = v
            if not _propagate(f, L, t):
                pruned["architecture"] += 1
                continue
            children.append(BnBNode(depth=t + 1, fixed=f, bound=bound, parent_x=res.x, serial=next(counter)))
        if node_order == "best_first":
            for ch in children:
                heapq.heappush(heap, ch)
        else:
            # Explore the child that agrees with the LP solution first.
            prefer = int(round(res.x[t]))
            stack.extend(sorted(children, key=lambda ch: ch.fixed[t] == prefer))

    if best_sel is None:
        raise InfeasibleError("search exhausted without a feasible selection")
    return BnBResult(best_sel, int(best_obj), root_bound, nodes, lp_solves, pruned)
