"""Dense two-phase simplex for small linear programs.

Used for relaxation bounds in the branch-and-bound selector. The solver runs a
light presolve (fixed columns, singleton rows, implied upper bounds) and then a
tableau simplex with Dantzig pricing that falls back to Bland's rule after a
run of degenerate pivots, which rules out cycling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SolverError

SENSES = ("<=", "=", ">=")
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9


@dataclass
class LinearProgram:
    """``min c @ x + offset`` s.t. ``A[r] @ x (senses[r]) b[r]`` and ``lo <= x <= hi``."""

    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise DomainError(f"A has shape {A.shape}, expected (m, {n})")
        self.A = A
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        m = self.A.shape[0]
        if self.b.shape[0] != m or len(self.senses) != m:
            raise DomainError(f"constraint dimensions disagree: A {self.A.shape}, b {self.b.shape}, senses {len(self.senses)}")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise DomainError(f"unknown constraint senses {bad}")
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).copy()
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise DomainError("bounds must have one entry per variable")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Constraint and bound violations at ``x`` (zero where satisfied)."""
        ax = self.A @ x - self.b
        v = np.zeros_like(ax)
        for r, s in enumerate(self.senses):
            if s == "<=":
                v[r] = max(ax[r], 0.0)
            elif s == ">=":
                v[r] = max(-ax[r], 0.0)
            else:
                v[r] = abs(ax[r])
        vb = np.maximum(self.lo - x, 0) + np.maximum(x - self.hi, 0)
        return np.concatenate([v, vb])

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset


@dataclass
class LPResult:
    status: str
    value: float = math.nan
    x: np.ndarray | None = None
    dual_value: float = math.nan
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Infeasible(Exception):
    pass


def _presolve(lp: LinearProgram):
    """Remove fixed columns and singleton/empty rows; tighten bounds."""
    A = lp.A.copy()
    b = lp.b.copy()
    senses = list(lp.senses)
    lo, hi = lp.lo.copy(), lp.hi.copy()
    n = lp.n_vars
    active_cols = np.ones(n, dtype=bool)
    active_rows = np.ones(A.shape[0], dtype=bool)
    changed = True
    while changed:
        changed = False
        if np.any(lo > hi + FEAS_TOL):
            raise _Infeasible("crossed bounds")
        fixed = active_cols & (hi - lo <= FEAS_TOL)
        if fixed.any():
            val = np.where(fixed, lo, 0.0)
            hi[fixed] = lo[fixed]
            b -= A @ val
            A[:, fixed] = 0.0
            active_cols &= ~fixed
            changed = True
        nnz = (np.abs(A) > 0).sum(axis=1)
        for r in np.nonzero(active_rows & (nnz <= 1))[0]:
            s = senses[r]
            if nnz[r] == 0:
                ok = (s == "<=" and b[r] >= -FEAS_TOL) or (s == ">=" and b[r] <= FEAS_TOL) or (
                    s == "=" and abs(b[r]) <= FEAS_TOL
                )
                if not ok:
                    raise _Infeasible(f"row {r} is empty but unsatisfied")
            else:
                j = int(np.nonzero(A[r])[0][0])
                a = A[r, j]
                v = b[r] / a
                if s == "=":
                    lo[j], hi[j] = max(lo[j], v), min(hi[j], v)
                    if lo[j] > hi[j] + FEAS_TOL:
                        raise _Infeasible(f"row {r} fixes x{j} outside its bounds")
                    lo[j] = hi[j] = min(max(v, lo[j]), hi[j])
                elif (s == "<=") == (a > 0):
                    hi[j] = min(hi[j], v)
                else:
                    lo[j] = max(lo[j], v)
                A[r, j] = 0.0
            active_rows[r] = False
            changed = True
    return A, b, senses, lo, hi, active_cols, active_rows


def _standard_form(A, b, senses, lo, hi, cols, rows, c):
    """Map active variables to nonnegative ones and collect explicit upper-bound rows.

    Returns rows ``(A_s, b_s, senses_s)``, cost ``c_s``, the objective constant,
    and a list of column recipes to map back: ``(orig_j, sign, shift)`` means
    ``x[orig_j] += sign * x_s + shift`` (shift applied once per orig column).
    """
    recipes = []
    cols_idx = np.nonzero(cols)[0]
    new_cols = []
    const = 0.0
    b = b.copy()
    ub = []
    for j in cols_idx:
        if np.isfinite(lo[j]):
            recipes.append((j, 1.0, lo[j]))
            new_cols.append(A[:, j])
            b -= A[:, j] * lo[j]
            const += c[j] * lo[j]
            ub.append(hi[j] - lo[j])
        elif np.isfinite(hi[j]):
            recipes.append((j, -1.0, hi[j]))
            new_cols.append(-A[:, j])
            b -= A[:, j] * hi[j]
            const += c[j] * hi[j]
            ub.append(np.inf)
        else:
            recipes.append((j, 1.0, 0.0))
            new_cols.append(A[:, j])
            recipes.append((j, -1.0, 0.0))
            new_cols.append(-A[:, j])
            ub.extend([np.inf, np.inf])
    ncols = len(new_cols)
    As = np.column_stack(new_cols) if ncols else np.zeros((A.shape[0], 0))
    As = As[rows]
    bs = b[rows]
    ss = [s for s, keep in zip(senses, rows) if keep]
    cs = np.array([sign * c[j] for j, sign, _ in recipes])
    ub = np.array(ub)

    # Upper bounds implied by a row with nonnegative coefficients need no explicit row.
    implied = np.zeros(ncols, dtype=bool)
    for r in range(As.shape[0]):
        if ss[r] == ">=" or np.any(As[r] < 0):
            continue
        pos = As[r] > 0
        with np.errstate(divide="ignore"):
            cap = np.where(pos, bs[r] / np.where(pos, As[r], 1.0), np.inf)
        implied |= pos & (cap <= ub + FEAS_TOL)
    extra = [j for j in range(ncols) if np.isfinite(ub[j]) and not implied[j]]
    if extra:
        U = np.zeros((len(extra), ncols))
        U[np.arange(len(extra)), extra] = 1.0
        As = np.vstack([As, U])
        bs = np.concatenate([bs, ub[extra]])
        ss = ss + ["<="] * len(extra)
    return As, bs, ss, cs, const, recipes


class _Tableau:
    def __init__(self, A, b, senses):
        m, n = A.shape
        sign = np.where(b < 0, -1.0, 1.0)
        A = A * sign[:, None]
        b = b * sign
        senses = [
            {"<=": ">=", ">=": "<=", "=": "="}[s] if g < 0 else s for s, g in zip(senses, sign)
        ]
        n_slack = sum(s != "=" for s in senses)
        n_art = sum(s != "<=" for s in senses)
        self.n_struct = n
        self.n_slack = n_slack
        width = n + n_slack + n_art
        T = np.zeros((m, width + 1))
        T[:, :n] = A
        T[:, -1] = b
        basis = np.empty(m, dtype=int)
        js, ja = n, n + n_slack
        for r, s in enumerate(senses):
            if s != "=":
                T[r, js] = 1.0 if s == "<=" else -1.0
                if s == "<=":
                    basis[r] = js
                js += 1
            if s != "<=":
                T[r, ja] = 1.0
                basis[r] = ja
                ja += 1
        self.T = T
        self.basis = basis
        self.art_start = n + n_slack
        self.iterations = 0

    def pivot(self, r, e):
        T = self.T
        T[r] /= T[r, e]
        col = T[:, e].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = e

    def run(self, cost, allowed, max_iter, bland_after=50):
        """Minimise ``cost`` over columns flagged ``allowed``; returns 'optimal' or 'unbounded'."""
        T = self.T
        z = cost[: T.shape[1] - 1] - cost[self.basis] @ T[:, :-1]
        degenerate = 0
        while True:
            cand = allowed & (z < -PIVOT_TOL)
            if not cand.any():
                return "optimal", z
            if self.iterations >= max_iter:
                raise SolverError(f"simplex iteration cap {max_iter} exceeded")
            if degenerate >= bland_after:
                e = int(np.nonzero(cand)[0][0])
            else:
                e = int(np.argmin(np.where(cand, z, np.inf)))
            col = T[:, e]
            pos = col > PIVOT_TOL
            if not pos.any():
                return "unbounded", z
            ratios = np.full(col.shape, np.inf)
            ratios[pos] = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + 1e-12)[0]
            r = int(ties[np.argmin(self.basis[ties])])
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(r, e)
            z = z - z[e] * T[r, :-1]
            self.iterations += 1


def solve_lp(lp: LinearProgram, max_iter: int = 100_000) -> LPResult:
    """Solve ``lp`` to optimality, or report it infeasible/unbounded."""
    try:
        A, b, senses, lo, hi, cols, rows = _presolve(lp)
    except _Infeasible as exc:
        return LPResult("infeasible", info={"presolve": str(exc)})

    As, bs, ss, cs, const, recipes = _standard_form(A, b, senses, lo, hi, cols, rows, lp.c)
    m, n = As.shape
    iterations = 0
    if m == 0:
        if np.any(cs < -PIVOT_TOL):
            return LPResult("unbounded")
        xs = np.zeros(n)
        dual = 0.0
    else:
        tab = _Tableau(As, bs, ss)
        A0, b0 = tab.T[:, :-1].copy(), tab.T[:, -1].copy()
        width = A0.shape[1]
        if tab.art_start < width:
            phase1 = np.zeros(width)
            phase1[tab.art_start:] = 1.0
            tab.run(phase1, np.ones(width, dtype=bool), max_iter)
            infeas = float(tab.T[tab.basis >= tab.art_start, -1].sum())
            if infeas > FEAS_TOL * max(1.0, float(np.abs(bs).max())):
                return LPResult("infeasible", iterations=tab.iterations, info={"phase1": infeas})
            # Drive artificials out of the basis; rows where that is impossible are redundant.
            keep = np.ones(m, dtype=bool)
            for r in range(m):
                if tab.basis[r] >= tab.art_start:
                    row = np.abs(tab.T[r, : tab.art_start])
                    j = int(np.argmax(row))
                    if row[j] > PIVOT_TOL:
                        tab.pivot(r, j)
                    else:
                        keep[r] = False
            width = tab.art_start
            tab.T = np.delete(tab.T[keep], np.s_[width:-1], axis=1)
            tab.basis = tab.basis[keep]
            A0, b0 = A0[keep, :width], b0[keep]
        cost = np.zeros(width)
        cost[:n] = cs
        status, _ = tab.run(cost, np.ones(width, dtype=bool), max_iter)
        iterations = tab.iterations
        if status == "unbounded":
            return LPResult("unbounded", iterations=iterations)
        xfull = np.zeros(width)
        xfull[tab.basis] = tab.T[:, -1]
        xs = xfull[:n]
        # Phase-2 certificate: basis duals of the standard-form system.
        y = np.linalg.solve(A0[:, tab.basis].T, cost[tab.basis])
        dual = float(b0 @ y)

    x = np.where(cols, 0.0, lo)
    shifts = {}
    for (j, sign, shift), v in zip(recipes, xs):
        x[j] += sign * v
        shifts[j] = shift
    for j, shift in shifts.items():
        x[j] += shift
    return LPResult(
        "optimal",
        value=lp.objective(x),
        x=x,
        dual_value=dual + const + float(lp.c[~cols] @ lo[~cols]) + lp.offset,
        iterations=iterations,
    )


@dataclass(frozen=True)
class RoundingReport:
    """Outcome of rounding a relaxed selection: a selection, or what it breaks."""

    selection: object
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def round_and_check(primal, library, table, c) -> RoundingReport:
    """Round a relaxed selection vector to the nearest 0/1 point and check it.

    ``primal`` is laid out like the branch-and-bound relaxation (per-device
    indicators first); any trailing broadcast indicators are ignored, since
    the broadcast set is implied by the per-device ones.
    """
    from .bnb import Layout
    from .core import SelectionMatrix, selection_violations

    L = Layout(library.M, library.N, library.K)
    x = np.asarray(primal, dtype=float)
    if x.size not in (L.n_device, L.n_vars):
        raise DomainError(f"primal has {x.size} entries, expected {L.n_device} or {L.n_vars}")
    # Exact halves round up so a 0.5/0.5 split keeps both blocks.
    r = np.floor(x[: L.n_device] + 0.5).clip(0, 1)
    sel = SelectionMatrix(r.reshape(L.K, L.N, L.M).transpose(2, 1, 0).astype(bool))
    return RoundingReport(sel, tuple(selection_violations(sel, table, c)))
