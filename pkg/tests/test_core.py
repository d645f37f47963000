import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mba.core import (
    Library,
    PowerSchedule,
    Scenario,
    ScoreTable,
    SelectionMatrix,
    assembled_score,
    block_latency,
    broadcast_rate,
    evaluate_schedule,
    link_rate,
    selection_violations,
)
from mba.errors import ArchitectureError, DomainError, InfiniteLatencyError, UndefinedRateError

# 1e8*log2(1.02), 1e8*log2(1.01) and 5e6/(1e8*log2(1.02)) at 30 digits (mpmath).
RATE_1_02 = 2856915.2196770894
RATE_1_01 = 1435529.2977070041
LATENCY_1_02 = 1.7501394390573265


def scenario(H, c=None, B=1e8, N0=0.05, Q=5e6, E=100.0):
    H = np.asarray(H, dtype=float)
    return Scenario(H=H, c=np.zeros_like(H) if c is None else c, B=B, N0=N0, Q=Q, E=E)


def test_library_rejects_shared_task_models():
    with pytest.raises(DomainError):
        Library(3, 2, (0, 0))
    with pytest.raises(DomainError):
        Library(2, 2, (2,))
    assert Library(3, 2, (2, 0)).K == 2


def test_score_table_rejects_negative_and_roundtrips():
    with pytest.raises(DomainError):
        ScoreTable(-np.ones((1, 1, 1)))
    t = ScoreTable(np.random.default_rng(0).random((2, 3, 4)))
    back = ScoreTable.from_json(t.to_json())
    assert np.array_equal(back.scores, t.scores)


def test_scenario_validation():
    with pytest.raises(DomainError):
        scenario([1e-3, 0.0])
    with pytest.raises(DomainError):
        scenario([1e-3], E=0.0)


class TestLinkRate:
    def test_zero_power(self):
        assert link_rate(0.0, 1e-3, 1e8, 0.05) == 0.0

    def test_unit_snr(self):
        assert link_rate(0.05, 1.0, 1e8, 0.05) == pytest.approx(1e8, rel=1e-15)

    def test_derived_value(self):
        assert link_rate(1.0, 1e-3, 1e8, 0.05) == pytest.approx(RATE_1_02, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            link_rate(1.0, 1e-3, 0.0, 0.05)
        with pytest.raises(DomainError):
            link_rate(1.0, 1e-3, 1e8, -1.0)

    def test_vectorised(self):
        p = np.array([0.0, 1.0])
        assert np.allclose(link_rate(p, 1e-3, 1e8, 0.05), [0.0, RATE_1_02])

    @given(
        st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-9, 1.0), st.floats(1e-9, 1.0)
    )
    def test_monotone(self, p1, p2, h1, h2):
        lo_p, hi_p = sorted((p1, p2))
        lo_h, hi_h = sorted((h1, h2))
        assert link_rate(lo_p, lo_h, 1e8, 0.05) <= link_rate(hi_p, lo_h, 1e8, 0.05)
        assert link_rate(lo_p, lo_h, 1e8, 0.05) <= link_rate(lo_p, hi_h, 1e8, 0.05)


class TestBroadcast:
    def sel(self, requesters, K):
        a = np.zeros((1, 1, K), dtype=bool)
        a[0, 0, list(requesters)] = True
        return SelectionMatrix(a)

    def test_single_requester(self):
        sc = scenario([1e-3])
        assert broadcast_rate((0, 0), self.sel([0], 1), 1.0, sc) == link_rate(1.0, 1e-3, 1e8, 0.05)

    def test_worst_requester(self):
        sc = scenario([1e-3, 2e-3])
        assert broadcast_rate((0, 0), self.sel([0, 1], 2), 1.0, sc) == link_rate(1.0, 1e-3, 1e8, 0.05)

    def test_three_requesters_derived(self):
        sc = scenario([0.5e-3, 1e-3, 2e-3])
        assert broadcast_rate((0, 0), self.sel([0, 1, 2], 3), 1.0, sc) == pytest.approx(RATE_1_01, rel=1e-12)

    def test_no_requester(self):
        sc = scenario([1e-3])
        with pytest.raises(UndefinedRateError):
            broadcast_rate((0, 0), self.sel([], 1), 1.0, sc)
        assert block_latency((0, 0), self.sel([], 1), 1.0, sc) == 0.0

    def test_latency_derived(self):
        sc = scenario([1e-3])
        assert block_latency((0, 0), self.sel([0], 1), 1.0, sc) == pytest.approx(LATENCY_1_02, rel=1e-12)

    def test_latency_unit_ratio(self):
        sc = scenario([1.0], N0=1.0, Q=1e8)
        assert block_latency((0, 0), self.sel([0], 1), 1.0, sc) == pytest.approx(1.0, rel=1e-15)

    def test_zero_power_is_infinite(self):
        with pytest.raises(InfiniteLatencyError):
            block_latency((0, 0), self.sel([0], 1), 0.0, scenario([1e-3]))

    @given(st.lists(st.floats(1e-6, 1e-1), min_size=2, max_size=6), st.floats(1e-3, 1e3))
    def test_adding_requester_never_helps(self, H, p):
        sc = scenario(H)
        K = len(H)
        fewer = self.sel(range(K - 1), K)
        more = self.sel(range(K), K)
        assert broadcast_rate((0, 0), more, p, sc) <= broadcast_rate((0, 0), fewer, p, sc)
        assert block_latency((0, 0), more, p, sc) >= block_latency((0, 0), fewer, p, sc)


class TestAssembledScore:
    def test_max_sum_by_hand(self):
        s = np.zeros((2, 2, 1))
        s[0, 0, 0], s[1, 0, 0], s[0, 1, 0] = 0.5, 0.3, 0.2
        score, best = assembled_score({(0, 0), (1, 0), (0, 1)}, ScoreTable(s), 0)
        assert score == pytest.approx(0.7)
        assert best == [0, 0]

    def test_own_model(self):
        t = ScoreTable(np.random.default_rng(1).random((3, 4, 2)))
        score, _ = assembled_score(set(Library(3, 4, (2, 0)).model_blocks(2)), t, 0)
        assert score == pytest.approx(t.model_score(2, 0))

    def test_full_library_matches_scan(self):
        rng = np.random.default_rng(2)
        t = ScoreTable(rng.random((3, 3, 1)))
        everything = set(itertools.product(range(3), range(3)))
        score, best = assembled_score(everything, t, 0)
        scan = sum(max(t.scores[i, n, 0] for i in range(3)) for n in range(3))
        assert score == pytest.approx(scan, rel=1e-15)
        assert best == [int(np.argmax(t.scores[:, n, 0])) for n in range(3)]

    def test_tie_goes_to_lowest_index(self):
        t = ScoreTable(np.full((3, 1, 1), 0.4))
        assert assembled_score({(2, 0), (1, 0)}, t, 0)[1] == [1]

    def test_missing_position(self):
        t = ScoreTable(np.ones((2, 3, 1)))
        with pytest.raises(ArchitectureError) as exc:
            assembled_score({(0, 0), (1, 2)}, t, 0)
        assert exc.value.position == 1

    @given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 4))
    def test_superset_never_scores_less_and_argmax_suffices(self, seed, M, N):
        rng = np.random.default_rng(seed)
        t = ScoreTable(rng.random((M, N, 1)))
        base = {(int(rng.integers(M)), n) for n in range(N)}
        extra = {(int(rng.integers(M)), int(rng.integers(N))) for _ in range(3)}
        s_base, _ = assembled_score(base, t, 0)
        s_more, best = assembled_score(base | extra, t, 0)
        assert s_more >= s_base
        # Keeping only the argmax block per position changes nothing.
        s_argmax, _ = assembled_score({(i, n) for n, i in enumerate(best)}, t, 0)
        assert s_argmax == s_more


class TestSelectionMatrix:
    def test_broadcast_is_union(self):
        sel = SelectionMatrix.from_models([[0, 1], [0, 0]], M=2)
        assert sel.broadcast_blocks() == [(0, 0), (0, 1), (1, 1)]
        assert sel.objective == 3
        assert sel.requesters((0, 0)) == [0, 1]

    def test_json_roundtrip(self):
        sel = SelectionMatrix.from_models([[0, 1, 2], [2, 1, 0]], M=3)
        back = SelectionMatrix.from_dict(sel.to_dict())
        assert np.array_equal(back.per_device, sel.per_device)

    def test_inconsistent_broadcast_rejected(self):
        d = SelectionMatrix.from_models([[0]], M=2).to_dict()
        d["alpha_broadcast"] = [[1, 0]]
        with pytest.raises(DomainError):
            SelectionMatrix.from_dict(d)

    def test_violations(self):
        t = ScoreTable(np.full((2, 2, 1), 0.5))
        assert selection_violations(SelectionMatrix.from_models([[0, 1]], 2), t, [1.0]) == []
        v = selection_violations(SelectionMatrix.empty(2, 2, 1), t, [0.0])
        assert any(x.startswith("C1") for x in v)
        v = selection_violations(SelectionMatrix.from_models([[0, 1]], 2), t, [1.5])
        assert any(x.startswith("C2") for x in v)


class TestEvaluateSchedule:
    def test_empty_selection(self):
        sel = SelectionMatrix.empty(1, 2, 1)
        sched = PowerSchedule((), [], [], [])
        rep = evaluate_schedule(sel, sched, scenario([1e-3]), ScoreTable(np.ones((1, 2, 1))))
        assert not rep.c1
        assert rep.total_latency == 0.0

    def test_single_block(self):
        sel = SelectionMatrix.from_models([[0]], 1)
        sc = scenario([1e-3])
        T = 5e6 / link_rate(2.0, 1e-3, 1e8, 0.05)
        sched = PowerSchedule(((0, 0),), [1e-3], [2.0], [T])
        rep = evaluate_schedule(sel, sched, sc, ScoreTable(np.ones((1, 1, 1))))
        assert rep.total_latency == pytest.approx(T, rel=1e-15)
        assert rep.total_energy == pytest.approx(2.0 * T, rel=1e-15)
        assert rep.feasible

    def test_scripted_two_device_instance(self):
        # Devices share block (0, 0); device 1 alone wants (1, 1), device 0 alone wants (0, 1).
        sel = SelectionMatrix.from_models([[0, 0], [0, 1]], 2)
        H = [1e-3, 3e-3]
        sc = scenario(H, c=[0.0, 0.0], E=1e3)
        powers = {(0, 0): 3.0, (0, 1): 1.5, (1, 1): 0.5}
        blocks = tuple(sorted(powers))
        # Hand accumulation, block by block, using each block's worst requester.
        worst = {(0, 0): 1e-3, (0, 1): 1e-3, (1, 1): 3e-3}
        T = {b: 5e6 / (1e8 * math.log2(1 + powers[b] * worst[b] / 0.05)) for b in blocks}
        sched = PowerSchedule(blocks, [worst[b] for b in blocks], [powers[b] for b in blocks],
                              [T[b] for b in blocks])
        rep = evaluate_schedule(sel, sched, sc, ScoreTable(np.ones((2, 2, 2))))
        assert rep.total_latency == pytest.approx(T[(0, 0)] + T[(0, 1)] + T[(1, 1)], rel=1e-12)
        assert rep.total_energy == pytest.approx(sum(T[b] * powers[b] for b in blocks), rel=1e-12)

    @given(st.integers(0, 2**31 - 1))
    def test_totals_match_per_block_recomputation(self, seed):
        rng = np.random.default_rng(seed)
        M, N, K = 3, 3, 3
        sel = SelectionMatrix.from_models(rng.integers(0, M, size=(K, N)).tolist(), M)
        H = 1e-3 * rng.exponential(size=K)
        sc = scenario(H, E=1e6)
        blocks = sel.broadcast_blocks()
        p = rng.uniform(0.1, 10.0, size=len(blocks))
        lat = [block_latency(b, sel, float(pp), sc) for b, pp in zip(blocks, p)]
        sched = PowerSchedule(tuple(blocks), np.ones(len(blocks)), p, lat)
        rep = evaluate_schedule(sel, sched, sc, ScoreTable(np.ones((M, N, K))))
        assert rep.total_latency == pytest.approx(math.fsum(lat), rel=1e-12)
        assert rep.total_energy == pytest.approx(math.fsum(np.array(lat) * p), rel=1e-12)
