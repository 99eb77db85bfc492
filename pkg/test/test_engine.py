import math
from dataclasses import replace

import numpy as np
import pytest

from pyzerowait import NotApplicableError, RateBookkeepingError
from pyzerowait.coxian import CoxianDist, derived_constants, make_dist
from pyzerowait.engine import (
    SimConfig,
    SteadyMetrics,
    check_theorem1_interval,
    combine_replicas,
    run,
    run_grid,
    run_replicas,
)
from pyzerowait.policy import PolicySpec


def coxian4():
    return make_dist(4, [0.5, 0.5, 0.5], [1, 1, 1, 1])


def two_phase():
    return make_dist(2, [0.4], [1., 2.])


def erlang_b(offered, N):
    terms = [offered**k/math.factorial(k) for k in range(N+1)]
    return terms[-1]/sum(terms)


class TestSimConfig:
    def test_arrival_rate(self):
        config = SimConfig(N=100, b=2, dist=coxian4(), policy=PolicySpec("jsq"),
                alpha=0.5, events=10)
        assert config.arrival_rate() == pytest.approx(0.9)
        assert config.M == 4

        config = SimConfig(N=100, b=2, dist=coxian4(), policy=PolicySpec("jsq"),
                alpha=0.5, beta=2, events=10)
        assert config.arrival_rate() == pytest.approx(0.8)

    @pytest.mark.parametrize("kwargs", [
        {"lam": 0.5},
        {"lam": 0.5, "events": 10, "t_end": 1.},
        {"lam": 1., "events": 10},
        {"alpha": 0.5, "events": 10, "N": 1},
        {"events": 10},
        {"lam": 0.5, "events": 10, "warmup_fraction": 1.},
        {"lam": 0.5, "events": 10, "init": "full"},
        ])
    def test_invalid(self, kwargs):
        args = dict(N=4, b=2, dist=coxian4(), policy=PolicySpec("jsq"))
        args.update(kwargs)
        with pytest.raises(ValueError):
            SimConfig(**args)


class TestRun:
    def test_deterministic(self):
        config = SimConfig(N=20, b=3, dist=coxian4(), policy=PolicySpec("jiq"),
                lam=0.8, events=20000, seed=123)
        first = run(config)
        second = run(config)
        assert first.waiting_prob == second.waiting_prob
        np.testing.assert_array_equal(first.s1m_avg, second.s1m_avg)

        third = run(replace(config, seed=124))
        assert not np.array_equal(first.s1m_avg, third.s1m_avg)

    def test_light_traffic(self):
        config = SimConfig(N=10, b=2, dist=coxian4(), policy=PolicySpec("jsq"),
                lam=0.05, events=20000, seed=1)
        metrics = run(config)
        assert metrics.waiting_prob < 1e-3
        assert metrics.arrivals > 0
        np.testing.assert_allclose(metrics.s1m_avg.sum(), 0.05, rtol=0.2)

    def test_erlang_loss(self):
        N = 4
        lam = 0.7
        config = SimConfig(N=N, b=1, dist=CoxianDist.exponential(),
                policy=PolicySpec("jiq"), lam=lam, events=100000)
        summary = combine_replicas(run_replicas(config, 5, seed_base=9))
        expected = erlang_b(lam*N, N)
        assert abs(summary.mean["waiting_prob"] - expected) <= (
                3*summary.std["waiting_prob"] + 0.005)
        assert summary.mean["drop_prob"] == summary.mean["waiting_prob"]

    def test_pasta(self):
        config = SimConfig(N=8, b=3, dist=two_phase(), policy=PolicySpec("jsq"),
                lam=0.9, events=200000, seed=5)
        metrics = run(config)
        assert metrics.waiting_prob > 0.05
        assert abs(metrics.waiting_prob - metrics.a1_time_avg) < 0.02

    def test_time_horizon_and_trajectory(self):
        config = SimConfig(N=10, b=2, dist=coxian4(), policy=PolicySpec("jsq"),
                lam=0.7, t_end=10., warmup_fraction=0., sample_interval=0.5,
                init="empty")
        metrics = run(config)
        assert metrics.observed_time == pytest.approx(10.)

        traj = metrics.trajectory
        assert traj.shape == (21, 4+2)
        np.testing.assert_allclose(traj[:, 0], np.arange(21)*0.5)
        assert not traj[0, 1:].any()
        assert len(metrics.snapshots) == 21
        assert metrics.snapshots[0] == "idle:10"

    def test_occupancy(self):
        config = SimConfig(N=5, b=2, dist=two_phase(), policy=PolicySpec("i1f"),
                lam=0.6, events=20000, seed=2)
        metrics = run(config)
        assert metrics.s1m_occupancy.shape == (2, 6)
        np.testing.assert_allclose(metrics.s1m_occupancy.sum(axis=1), 1)
        np.testing.assert_allclose(
                metrics.s1m_occupancy @ (np.arange(6)/5), metrics.s1m_avg)


class TestRateCheck:
    def test_tolerance(self):
        from pyzerowait.engine import _check_rate

        mu = [1., 3.]
        busy = [2, 1]
        assert _check_rate(5. + 1e-12, 1., mu, busy, 10) == 5.
        with pytest.raises(RateBookkeepingError):
            _check_rate(5. + 1e-6, 1., mu, busy, 10)

    def test_drift_detected(self, monkeypatch):
        import pyzerowait.engine
        from pyzerowait.state import SystemState

        # phase advances leave the state alone, so the tracked rate gains
        # mu_2 - mu_1 per advance without a matching busy count
        monkeypatch.setattr(pyzerowait.engine, "RATE_CHECK_INTERVAL", 500)
        monkeypatch.setattr(SystemState, "apply_phase_advance",
                lambda self, j, m: None)

        config = SimConfig(N=50, b=3, dist=two_phase(),
                policy=PolicySpec("jsq"), lam=0.9, events=5000, seed=3)
        with pytest.raises(RateBookkeepingError):
            run(config)


class TestReplicas:
    def test_seeds_and_workers(self):
        config = SimConfig(N=6, b=2, dist=two_phase(), policy=PolicySpec("jsq"),
                lam=0.7, events=5000)
        serial = run_replicas(config, 3, seed_base=4, run_index=1)
        parallel = run_replicas(config, 3, seed_base=4, run_index=1, workers=2)

        assert len({m.seed for m in serial}) == 3
        assert [m.seed for m in serial] == [m.seed for m in parallel]
        for a, b in zip(serial, parallel):
            assert a.waiting_prob == b.waiting_prob

    def test_combine(self):
        def fake(wait):
            return SteadyMetrics(N=1, M=1, lam=0.5, waiting_prob=wait,
                    drop_prob=0., avg_total_queue=1., s1m_avg=np.array([wait]),
                    a1_time_avg=wait, s1m_occupancy=np.zeros((1, 2)))

        summary = combine_replicas([fake(0.1), fake(0.3)])
        assert summary.n == 2
        assert summary.mean["waiting_prob"] == pytest.approx(0.2)
        assert summary.std["waiting_prob"] == pytest.approx(math.sqrt(0.02))
        assert summary.stderr("waiting_prob") == pytest.approx(0.1)
        np.testing.assert_allclose(summary.mean["s1m_avg"], [0.2])

        with pytest.raises(ValueError):
            combine_replicas([])


# {{{ agreement with the exact solver

ORACLE_LAM = 0.7


def _oracle_config(N, b, M, policy, events):
    dist = two_phase() if M == 2 else CoxianDist.exponential()
    return SimConfig(N=N, b=b, dist=dist, policy=policy, lam=ORACLE_LAM,
            events=events)


def _compare_with_exact(config, trials):
    from pyzerowait.exact import exact_metrics, solve_chain

    chain = solve_chain(config.N, config.b, config.dist, config.policy,
            ORACLE_LAM, cache_dir=False)
    assert chain.residual <= 1e-10
    exact = exact_metrics(chain)

    summary = combine_replicas(trials)
    for name, value in [("waiting_prob", exact.waiting_prob),
            ("avg_total_queue", exact.avg_total_queue)]:
        assert abs(summary.mean[name] - value) <= (
                3*summary.std[name] + 1e-3), (
                        config.N, config.b, config.M, str(config.policy),
                        name, summary.mean[name], value)


@pytest.mark.parametrize(("N", "b", "M", "policy"), [
    (2, 2, 1, PolicySpec("jsq")),
    (3, 2, 2, PolicySpec("pod", d=2)),
    (2, 1, 2, PolicySpec("jiq")),
    (3, 2, 1, PolicySpec("i1f")),
    ])
def test_oracle_agreement(N, b, M, policy):
    config = _oracle_config(N, b, M, policy, events=40000)
    _compare_with_exact(config,
            run_replicas(config, 5, seed_base=N*1000+b*10+M))


@pytest.mark.slow
def test_oracle_agreement_full():
    import os
    from pyzerowait.tools import get_worker_count

    workers = get_worker_count(None if "PYZEROWAIT_WORKERS" in os.environ
            else os.cpu_count() or 1)

    configs = [_oracle_config(N, b, M, policy, events=10**6)
            for N in [1, 2, 3, 4]
            for b in [1, 2]
            for M in [1, 2]
            for policy in [PolicySpec("jsq"), PolicySpec("jiq"),
                PolicySpec("i1f"), PolicySpec("pod", d=2)]]
    assert len(configs) == 64

    results = run_grid(configs, 10, seed_base=4096, workers=workers)
    for config, trials in zip(configs, results):
        _compare_with_exact(config, trials)


def test_grid_matches_replicas():
    configs = [_oracle_config(2, 2, M, PolicySpec("jsq"), events=3000)
            for M in [1, 2]]
    grid = run_grid(configs, 2, seed_base=5, workers=2)

    for j, config in enumerate(configs):
        single = run_replicas(config, 2, seed_base=5, run_index=j)
        assert [m.seed for m in grid[j]] == [m.seed for m in single]
        assert ([m.waiting_prob for m in grid[j]]
                == [m.waiting_prob for m in single])

# }}}


# {{{ trends at moderate scale

@pytest.mark.slow
def test_waiting_vanishes_with_N():
    dist = coxian4()
    means = {}
    for kind in ["jsq", "jiq"]:
        for N in [100, 400, 1600]:
            config = SimConfig(N=N, b=10, dist=dist, policy=PolicySpec(kind),
                    alpha=0.5, events=10**6)
            summary = combine_replicas(run_replicas(config, 5, seed_base=N))
            means[kind, N] = summary.mean["waiting_prob"]

    for kind in ["jsq", "jiq"]:
        assert means[kind, 100] > means[kind, 400] > means[kind, 1600]
    assert abs(means["jiq", 1600] - means["jsq", 1600]) <= (
            0.25*means["jsq", 1600])


@pytest.mark.slow
def test_insensitive_to_phase_count():
    means = []
    for M in [1, 2, 4, 8]:
        config = SimConfig(N=1000, b=10,
                dist=CoxianDist.identical_rate(M, 0.5),
                policy=PolicySpec("jsq"), alpha=0.5, events=10**6)
        summary = combine_replicas(run_replicas(config, 5, seed_base=M))
        means.append(summary.mean["waiting_prob"])

    assert max(means) <= 1.3*min(means)

# }}}


# {{{ concentration interval

class TestInterval:
    def test_containment_at_equilibrium(self):
        N = 2500
        alpha = 0.3
        dist = coxian4()
        consts = derived_constants(dist)
        lam = 1 - N**(-alpha)

        occupancy = np.zeros((4, N+1))
        for m, v in enumerate(dist.v):
            occupancy[m, int(round(N*lam*v))] = 1
        metrics = SteadyMetrics(N=N, M=4, lam=lam, waiting_prob=0.,
                drop_prob=0., avg_total_queue=lam,
                s1m_avg=occupancy @ (np.arange(N+1)/N), a1_time_avg=0.,
                s1m_occupancy=occupancy)

        check = check_theorem1_interval(metrics, consts, N, alpha)
        np.testing.assert_allclose(check.freq, 1)
        assert np.all(check.lower < lam*np.array(dist.v))
        assert np.all(check.upper > lam*np.array(dist.v))
        np.testing.assert_array_equal(metrics.interval_freq, check.freq)
        assert not check.condition_holds

    def test_single_phase(self):
        consts = derived_constants(CoxianDist.exponential())
        metrics = SteadyMetrics(N=10, M=1, lam=0.5, waiting_prob=0.,
                drop_prob=0., avg_total_queue=0.5, s1m_avg=np.array([0.5]),
                a1_time_avg=0., s1m_occupancy=np.zeros((1, 11)))
        with pytest.raises(NotApplicableError):
            check_theorem1_interval(metrics, consts, 10, 0.3)

    @pytest.mark.slow
    def test_concentration(self):
        N = 2500
        alpha = 0.3
        dist = coxian4()
        config = SimConfig(N=N, b=10, dist=dist, policy=PolicySpec("jsq"),
                alpha=alpha, events=2*10**6, seed=2500)
        metrics = run(config)
        check = check_theorem1_interval(metrics, derived_constants(dist), N,
                alpha)
        assert np.all(check.freq >= 0.95)
        assert not check.condition_holds

# }}}


if __name__ == "__main__":
    import sys

    if len(sys.argv) > 1:
        exec(sys.argv[1])
    else:
        from pytest import main

        main([__file__])
