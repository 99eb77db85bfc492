from fractions import Fraction

import numpy as np
import pytest

from pyzerowait import StateError
from pyzerowait.state import SystemState


def table_state():
    """Ten servers, up to five jobs each, three phases."""
    return SystemState.from_counts(10, 5, 3, {
        (1, 1): 2, (2, 1): 1, (3, 1): 1,
        (1, 2): 1, (2, 2): 2, (3, 2): 1,
        (4, 3): 1, (5, 3): 1,
        })


class TestConstruction:
    def test_s_view(self):
        state = table_state()
        assert state.n_idle == 0

        expected = np.zeros((5, 3))
        expected[:3, 0] = [0.4, 0.2, 0.1]
        expected[:3, 1] = [0.4, 0.3, 0.1]
        expected[:, 2] = [0.2, 0.2, 0.2, 0.2, 0.1]
        np.testing.assert_allclose(state.s_view(), expected)

        exact = state.s_view(exact=True)
        assert exact[1, 1] == Fraction(3, 10)

        np.testing.assert_allclose(state.s1(), [0.4, 0.4, 0.2])
        # levels 1..5 hold 3, 3, 2, 1, 1 servers
        assert state.total_jobs() == 3 + 6 + 6 + 4 + 5
        state.check_invariants()

    def test_all_idle(self):
        state = SystemState.from_counts(4, 2, 2, np.zeros((2, 2), dtype=int))
        assert state == SystemState.empty(4, 2, 2)
        assert not state.s_view().any()
        assert state.busy == 0

    @pytest.mark.parametrize("counts", [
        {(1, 1): 3, (2, 2): 2},
        {(1, 1): -1},
        {(3, 1): 1},
        {(1, 1): 0.5},
        ])
    def test_invalid(self, counts):
        with pytest.raises(StateError):
            SystemState.from_counts(4, 2, 2, counts)

    def test_wrong_shape(self):
        with pytest.raises(StateError):
            SystemState.from_counts(4, 2, 2, np.zeros((3, 2), dtype=int))

    def test_key_round_trip(self):
        state = table_state()
        assert SystemState.from_key(10, 5, 3, state.key()) == state
        assert hash(SystemState.from_key(10, 5, 3, state.key())) == hash(state)

    def test_q_s_round_trip(self):
        state = table_state()
        assert SystemState.from_s_view(10, state.s_view()) == state
        np.testing.assert_allclose(state.q_view().sum(), 1)

    def test_encode(self):
        state = SystemState.from_counts(3, 2, 2, {(1, 2): 1, (2, 1): 1})
        assert state.encode() == "idle:1 1:2:1 2:1:1"
        assert state.snapshot() == ([(1, 2, 1), (2, 1, 1)], 1)

    def test_at_equilibrium(self):
        from pyzerowait.coxian import make_dist
        dist = make_dist(4, [0.5, 0.5, 0.5], [1, 1, 1, 1])
        state = SystemState.at_equilibrium(100, 3, dist, 0.99)
        assert [state.n(1, m) for m in range(1, 5)] == [53, 26, 13, 7]
        state.check_invariants()

        # each phase rounds 0.66 up to 1, three servers for N=2
        from pyzerowait.coxian import CoxianDist
        uniform = CoxianDist.identical_rate(3, 1-1e-9)
        state = SystemState.at_equilibrium(2, 1, uniform, 0.99)
        assert state.busy <= 2
        state.check_invariants()


class TestTransitions:
    def test_departure(self):
        state = table_state()
        before = state.s_view()
        state.apply_departure(3, 2)
        after = state.s_view()

        assert state.n(3, 2) == 0
        assert state.n(2, 1) == 2

        delta = np.zeros((5, 3))
        delta[:3, 1] = -0.1
        delta[:2, 0] = 0.1
        np.testing.assert_allclose(after - before, delta, atol=1e-15)
        state.check_invariants()

    def test_departure_frees_server(self):
        state = SystemState.from_counts(2, 2, 1, {(1, 1): 1})
        state.apply_departure(1, 1)
        assert state.n_idle == 2

    def test_arrival_to_idle(self):
        state = SystemState.empty(5, 2, 3)
        state.apply_arrival(1, 1)
        assert state.n_idle == 4
        assert state.n(1, 1) == 1

        with pytest.raises(StateError):
            state.apply_arrival(1, 2)

    def test_arrival_to_busy(self):
        state = table_state()
        state.apply_arrival(4, 2)
        assert state.n(3, 2) == 0
        assert state.n(4, 2) == 1
        state.check_invariants()

        with pytest.raises(StateError):
            state.apply_arrival(4, 2)
        with pytest.raises(StateError):
            state.apply_arrival(6, 3)

    def test_no_idle_server(self):
        with pytest.raises(StateError):
            table_state().apply_arrival(1, 1)

    def test_phase_advance(self):
        state = table_state()
        state.apply_phase_advance(2, 2)
        assert state.n(2, 2) == 1
        assert state.n(2, 3) == 1
        state.check_invariants()

        with pytest.raises(StateError):
            state.apply_phase_advance(4, 3)
        with pytest.raises(StateError):
            state.apply_phase_advance(4, 1)

    def test_copy_is_independent(self):
        state = table_state()
        other = state.copy()
        other.apply_departure(1, 1)
        assert state == table_state()
        assert other != state


def _random_transition(state, rng):
    b, M = state.b, state.M
    while True:
        kind = rng.integers(3)
        j = int(rng.integers(1, b+1))
        m = int(rng.integers(1, M+1))
        if kind == 0:
            if j == 1:
                if state.n_idle:
                    state.apply_arrival(1, 1)
                    return
            elif state.n(j-1, m):
                state.apply_arrival(j, m)
                return
        elif kind == 1:
            if state.n(j, m):
                state.apply_departure(j, m)
                return
        elif m < M and state.n(j, m):
            state.apply_phase_advance(j, m)
            return


@pytest.mark.parametrize(("N", "b", "M"), [(1, 1, 1), (5, 3, 2), (20, 4, 4)])
def test_transition_fuzz(N, b, M):
    rng = np.random.default_rng(N*100 + b*10 + M)
    state = SystemState.empty(N, b, M)

    for step in range(20000):
        _random_transition(state, rng)
        assert state.n_idle + sum(map(sum, state.counts)) == N
        if step % 500 == 0:
            state.check_invariants()
    state.check_invariants()


if __name__ == "__main__":
    import sys

    if len(sys.argv) > 1:
        exec(sys.argv[1])
    else:
        from pytest import main

        main([__file__])
