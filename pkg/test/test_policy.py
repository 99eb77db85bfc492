import math

import numpy as np
import pytest

from pyzerowait.policy import (
    Destination,
    PolicySpec,
    a1_prob,
    dest_distribution,
    lbzero_check,
    Router,
    route,
)
from pyzerowait.state import SystemState
from pyzerowait.tools import UniformStream


ALL_POLICIES = [PolicySpec("jsq"), PolicySpec("jiq"), PolicySpec("i1f"),
        PolicySpec("pod", d=2)]


def table_state():
    return SystemState.from_counts(10, 5, 3, {
        (1, 1): 2, (2, 1): 1, (3, 1): 1,
        (1, 2): 1, (2, 2): 2, (3, 2): 1,
        (4, 3): 1, (5, 3): 1,
        })


def random_state(rng, N=None, b=None, M=None):
    N = N or int(rng.integers(1, 13))
    b = b or int(rng.integers(1, 5))
    M = M or int(rng.integers(1, 4))

    # each server lands in the idle pool (cell 0) or one of the b*M cells
    cells = np.bincount(rng.integers(0, b*M+1, size=N), minlength=b*M+1)
    return SystemState.from_counts(N, b, M, cells[1:].reshape(b, M))


class TestPolicySpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            PolicySpec("random")
        with pytest.raises(ValueError):
            PolicySpec("pod")
        with pytest.raises(ValueError):
            PolicySpec("pod", d=0)

    def test_resolve_d(self):
        spec = PolicySpec("pod", d_alpha=0.3)
        N = 10**6
        assert spec.resolve_d(N) == math.ceil(N**0.3*math.log(N)**2)
        assert PolicySpec("pod", d=50).resolve_d(10) == 10
        assert str(PolicySpec("pod", d=2)) == "pod2"

        with pytest.raises(ValueError):
            PolicySpec("jsq").resolve_d(10)


class TestDestDistribution:
    def test_jsq_idle(self):
        state = SystemState.from_counts(4, 2, 2, {(1, 1): 2, (2, 2): 1})
        assert dest_distribution(PolicySpec("jsq"), state) == {
                Destination.IDLE: 1.}

    def test_jsq_min_level(self):
        state = SystemState.from_counts(4, 3, 2, {(2, 1): 3, (2, 2): 1})
        dist = dest_distribution(PolicySpec("jsq"), state)
        assert dist == pytest.approx({
            Destination.busy(2, 1): 0.75,
            Destination.busy(2, 2): 0.25})

    def test_jiq_uniform(self):
        dist = dest_distribution(PolicySpec("jiq"), table_state())
        assert dist[Destination.busy(1, 1)] == pytest.approx(0.2)
        assert dist[Destination.busy(2, 2)] == pytest.approx(0.2)
        # the server holding five jobs is full
        assert dist[Destination.DROP] == pytest.approx(0.1)

    def test_i1f_level_one(self):
        state = SystemState.from_counts(10, 3, 2,
                {(1, 1): 3, (1, 2): 1, (2, 1): 6})
        dist = dest_distribution(PolicySpec("i1f"), state)
        assert dist == pytest.approx({
            Destination.busy(1, 1): 0.75,
            Destination.busy(1, 2): 0.25})

    def test_full_buffers_drop(self):
        state = SystemState.from_counts(3, 1, 2, {(1, 1): 2, (1, 2): 1})
        for spec in ALL_POLICIES:
            assert dest_distribution(spec, state) == pytest.approx(
                    {Destination.DROP: 1.})

    def test_sums_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(10000):
            state = random_state(rng)
            for spec in ALL_POLICIES:
                dist = dest_distribution(spec, state)
                assert abs(sum(dist.values()) - 1) < 1e-12
                for dest, prob in dist.items():
                    assert prob > 0
                    if dest.kind == "busy":
                        assert state.n(dest.j, dest.m) >= 1
                        assert dest.j < state.b

    def test_pod_full_sample_is_jsq(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            state = random_state(rng, N=10)
            pod = dest_distribution(PolicySpec("pod", d=10), state)
            jsq = dest_distribution(PolicySpec("jsq"), state)
            assert pod.keys() == jsq.keys()
            for dest in jsq:
                assert pod[dest] == pytest.approx(jsq[dest], abs=1e-14)


class TestA1:
    def test_pod_hypergeometric(self):
        state = SystemState.from_counts(10, 2, 1, {(1, 1): 5})
        assert a1_prob(PolicySpec("pod", d=2), state) == pytest.approx(2/9)

        state = SystemState.from_counts(10, 2, 1, {(1, 1): 1})
        assert a1_prob(PolicySpec("pod", d=2), state) == 0

    @pytest.mark.parametrize("spec", ALL_POLICIES)
    def test_fully_busy(self, spec):
        state = SystemState.from_counts(4, 2, 2, {(1, 1): 3, (2, 2): 1})
        assert a1_prob(spec, state) == 1

    @pytest.mark.parametrize("spec", ALL_POLICIES[:3])
    def test_idle_available(self, spec):
        state = SystemState.from_counts(4, 2, 2, {(1, 1): 3})
        assert a1_prob(spec, state) == 0

    def test_matches_distribution(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            state = random_state(rng)
            for spec in ALL_POLICIES:
                dist = dest_distribution(spec, state)
                waiting = sum(p for dest, p in dist.items()
                        if dest.is_waiting)
                assert a1_prob(spec, state) == pytest.approx(waiting,
                        abs=1e-12)


@pytest.mark.parametrize("spec", ALL_POLICIES + [PolicySpec("pod", d=3)])
def test_route_matches_distribution(spec):
    rng = np.random.default_rng(42)
    stream = UniformStream(np.random.default_rng(7))
    n_draws = 10000

    for _ in range(5):
        state = random_state(rng, N=8, b=3, M=2)
        dist = dest_distribution(spec, state)

        freq = {}
        for _ in range(n_draws):
            dest = route(spec, state, stream)
            freq[dest] = freq.get(dest, 0) + 1

        assert set(freq) <= set(dist)
        for dest, prob in dist.items():
            sigma = math.sqrt(prob*(1-prob)/n_draws)
            assert abs(freq.get(dest, 0)/n_draws - prob) <= 4*sigma + 1e-3


def test_router_reused_across_states():
    spec = PolicySpec("pod", d=3)
    state = table_state()
    router = Router(spec, state.N, state.b, state.M)
    stream = UniformStream(np.random.default_rng(11))
    n_draws = 20000

    for round_ in range(3):
        dist = dest_distribution(spec, state)
        freq = {}
        for _ in range(n_draws):
            dest = router(state, stream)
            freq[dest] = freq.get(dest, 0) + 1

        assert set(freq) <= set(dist)
        for dest, prob in dist.items():
            sigma = math.sqrt(prob*(1-prob)/n_draws)
            assert abs(freq.get(dest, 0)/n_draws - prob) <= 4*sigma + 1e-3

        # free a server so the next round sees new level counts
        state.apply_departure(1, 1 + round_ % 2)


def test_route_accepts_generator():
    state = SystemState.from_counts(4, 2, 2, {(1, 1): 4})
    dest = route(PolicySpec("pod", d=2), state, np.random.default_rng(0))
    assert dest == Destination.busy(1, 1)


def test_destination_apply():
    state = SystemState.from_counts(3, 2, 2, {(1, 2): 1})
    Destination.IDLE.apply(state)
    Destination.busy(1, 2).apply(state)
    Destination.DROP.apply(state)
    assert state.n(1, 1) == 1
    assert state.n(2, 2) == 1
    assert state.n_idle == 1
    assert str(Destination.busy(1, 2)) == "busy(1,2)"


class TestLBZero:
    @pytest.mark.parametrize("kind", ["jsq", "jiq", "i1f"])
    def test_idle_first_policies(self, kind):
        report = lbzero_check(PolicySpec(kind), 10**4, 0.3)
        assert report.passed
        assert report.a1_worst == 0
        assert report.min_passing_N == 2

    def test_pod_growing_d(self):
        spec = PolicySpec("pod", d_alpha=0.3)
        report = lbzero_check(spec, 10**6, 0.3)
        assert report.passed
        assert report.d == spec.resolve_d(10**6)
        assert report.margin > 0

    def test_pod_single_sample(self):
        report = lbzero_check(PolicySpec("pod", d=1), 10**6, 0.3)
        assert not report.passed
        assert report.a1_worst == pytest.approx(
                report.worst_busy/10**6)

    @pytest.mark.parametrize("log2_N", [53, 60])
    def test_huge_N(self, log2_N):
        N = 2**log2_N
        report = lbzero_check(PolicySpec("jsq"), N, 0.3)
        assert report.worst_busy < N
        assert N - report.worst_busy == math.ceil(N**0.7/math.log(N) - 1e-9)
        assert report.passed

    def test_invalid(self):
        with pytest.raises(ValueError):
            lbzero_check(PolicySpec("jsq"), 1, 0.3)
        with pytest.raises(ValueError):
            lbzero_check(PolicySpec("jsq"), 100, 1.5)


if __name__ == "__main__":
    import sys

    if len(sys.argv) > 1:
        exec(sys.argv[1])
    else:
        from pytest import main

        main([__file__])
