"""Event-by-event simulation of the aggregate Markov chain."""

__copyright__ = "Copyright (C) 2022 The pyzerowait developers"

__license__ = """
Permission is hereby granted, free of charge, to any person
obtaining a copy of this software and associated documentation
files (the "Software"), to deal in the Software without
restriction, including without limitation the rights to use,
copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the
Software is furnished to do so, subject to the following
conditions:

The above copyright notice and this permission notice shall be
included in all copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND,
EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES
OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND
NONINFRINGEMENT. IN NO EVENT SHALL THE AUTHORS OR COPYRIGHT
HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY,
WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING
FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR
OTHER DEALINGS IN THE SOFTWARE.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pyzerowait import NotApplicableError, RateBookkeepingError
from pyzerowait.coxian import CoxianDist
from pyzerowait.policy import BUSY, DROP, IDLE, PolicySpec, Router, a1_prob
from pyzerowait.state import SystemState
from pyzerowait.tools import UniformStream

logger = logging.getLogger(__name__)

RATE_CHECK_INTERVAL = 100000
RATE_CHECK_TOL = 1e-9


# {{{ configuration

@dataclass(frozen=True)
class SimConfig:
    """
    .. attribute:: lam

        Arrival rate per server. If *None*, ``1 - beta * N**(-alpha)``.

    .. attribute:: events
    .. attribute:: t_end

        Exactly one of these bounds the run: a number of events or a
        virtual time.

    .. attribute:: sample_interval

        Virtual time between trajectory samples, or *None* for no
        trajectory.

    .. attribute:: init

        ``"equilibrium"`` (rounded zero-waiting equilibrium) or
        ``"empty"``.
    """

    N: int
    b: int
    dist: CoxianDist
    policy: PolicySpec
    lam: Optional[float] = None
    alpha: Optional[float] = None
    beta: float = 1.
    events: Optional[int] = None
    t_end: Optional[float] = None
    warmup_fraction: float = 0.2
    seed: int = 0
    sample_interval: Optional[float] = None
    init: str = "equilibrium"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive, got %d" % self.N)
        if self.b < 1:
            raise ValueError("b must be positive, got %d" % self.b)
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup fraction must lie in [0, 1), got %g"
                    % self.warmup_fraction)
        if (self.events is None) == (self.t_end is None):
            raise ValueError("exactly one of 'events' and 't_end' "
                    "must be given")
        if self.events is not None and self.events < 1:
            raise ValueError("event count must be positive, got %d"
                    % self.events)
        if self.t_end is not None and not self.t_end > 0:
            raise ValueError("t_end must be positive, got %g" % self.t_end)
        if self.sample_interval is not None and not self.sample_interval > 0:
            raise ValueError("sample interval must be positive, got %g"
                    % self.sample_interval)
        if self.init not in ("equilibrium", "empty"):
            raise ValueError("unknown initialization '%s'" % self.init)

        lam = self.arrival_rate()
        if not 0 < lam < 1:
            raise ValueError("arrival rate per server must lie in (0, 1), "
                    "got %g" % lam)

    def arrival_rate(self):
        if self.lam is not None:
            return self.lam
        if self.alpha is None:
            raise ValueError("either 'lam' or 'alpha' must be given")
        return 1 - self.beta*self.N**(-self.alpha)

    @property
    def M(self):
        return self.dist.M

# }}}


# {{{ metrics

@dataclass
class SteadyMetrics:
    """Time averages over the post-warmup part of one run.

    .. attribute:: s1m_occupancy

        Array of shape ``(M, N+1)``. Entry ``[m-1, k]`` is the fraction of
        observed time during which ``S_{1,m} = k/N``.

    .. attribute:: trajectory

        Array of rows ``(t, S_{1,1}, ..., S_{1,M}, sum_i S_i)``, or *None*.

    .. attribute:: snapshots

        Encoded states (see :meth:`~pyzerowait.state.SystemState.encode`)
        at the trajectory sample times.
    """

    N: int
    M: int
    lam: float
    waiting_prob: float
    drop_prob: float
    avg_total_queue: float
    s1m_avg: np.ndarray
    a1_time_avg: float
    s1m_occupancy: np.ndarray
    arrivals: int = 0
    events: int = 0
    observed_time: float = 0.
    seed: Optional[int] = None
    trajectory: Optional[np.ndarray] = None
    snapshots: Optional[list] = None
    interval_freq: Optional[np.ndarray] = None


@dataclass
class ReplicaSummary:
    """Mean and sample standard deviation of each metric over replicas."""

    n: int
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)

    def stderr(self, name):
        return self.std[name]/math.sqrt(self.n)


def combine_replicas(metrics):
    metrics = list(metrics)
    if not metrics:
        raise ValueError("no replicas to combine")

    result = ReplicaSummary(n=len(metrics))
    names = ["waiting_prob", "drop_prob", "avg_total_queue", "a1_time_avg"]
    for name in names:
        values = np.array([getattr(m, name) for m in metrics])
        result.mean[name] = float(values.mean())
        result.std[name] = float(values.std(ddof=1)) if len(values) > 1 else 0.

    s1m = np.array([m.s1m_avg for m in metrics])
    result.mean["s1m_avg"] = s1m.mean(axis=0)
    result.std["s1m_avg"] = (s1m.std(axis=0, ddof=1) if len(metrics) > 1
            else np.zeros(s1m.shape[1]))
    return result

# }}}


# {{{ simulation

def initial_state(config):
    if config.init == "empty":
        return SystemState.empty(config.N, config.b, config.M)
    return SystemState.at_equilibrium(
            config.N, config.b, config.dist, config.arrival_rate())


def run(config, state=None):
    """Simulate one trial of *config* and return its
    :class:`SteadyMetrics`.

    Each step races the arrival stream (rate ``lam*N``) against phase
    completions (rate ``mu_m`` per busy server in phase *m*). A completion
    ends the job with probability ``1 - p_m`` and advances it otherwise.
    """
    N = config.N
    b = config.b
    M = config.M
    dist = config.dist
    policy = config.policy
    lam = config.arrival_rate()

    if state is None:
        state = initial_state(config)
    else:
        state = state.copy()

    rng = UniformStream(config.seed)
    router = Router(policy, N, b, M)
    arrival_rate = lam*N
    check_every = RATE_CHECK_INTERVAL

    # {{{ phase-transition tables

    mu = list(dist.mu)
    advance_prob = list(dist.p) + [0.]
    advance_delta = [mu[m+1] - mu[m] for m in range(M-1)] + [0.]
    # a departure from level > 1 starts the next job in phase 1
    departure_delta = [mu[0] - mu[m] for m in range(M)]

    # }}}

    counts = state.counts
    busy = state.busy_by_phase
    jobs = state.total_jobs()

    completion_rate = math.fsum(mu[m]*busy[m] for m in range(M))

    if config.events is not None:
        warmup_events = int(config.events*config.warmup_fraction)
        max_events = config.events
        warmup_time = None
        t_end = math.inf
    else:
        warmup_events = None
        max_events = None
        warmup_time = config.t_end*config.warmup_fraction
        t_end = config.t_end

    a1_cache = {}

    def a1_of(n_busy):
        try:
            return a1_cache[n_busy]
        except KeyError:
            result = a1_cache[n_busy] = a1_prob(policy, state)
            return result

    occupancy = np.zeros((M, N+1))
    occ_rows = [[0.]*(N+1) for _ in range(M)]
    time_in_jobs = 0.
    time_in_a1 = 0.
    observed = 0.

    arrivals = 0
    waiting = 0
    dropped = 0

    sample_interval = config.sample_interval
    trajectory = [] if sample_interval is not None else None
    snapshots = [] if sample_interval is not None else None
    next_sample = 0.

    t = 0.
    n_events = 0
    measuring = False

    while True:
        if not measuring:
            if warmup_events is not None:
                measuring = n_events >= warmup_events
            else:
                measuring = t >= warmup_time

        total_rate = arrival_rate + completion_rate
        dt = rng.exponential(total_rate)

        last = t + dt >= t_end
        if last:
            dt = t_end - t

        if trajectory is not None:
            while next_sample <= t + dt:
                trajectory.append(
                        [next_sample] + [x/N for x in busy] + [jobs/N])
                snapshots.append(state.encode())
                next_sample += sample_interval

        if measuring:
            observed += dt
            for m in range(M):
                occ_rows[m][busy[m]] += dt
            time_in_jobs += dt*jobs
            time_in_a1 += dt*a1_of(N - state.n_idle)

        t += dt
        if last:
            break

        # {{{ pick and apply the next event

        u = rng.random()*total_rate
        if u < arrival_rate:
            dest = router(state, rng)
            if measuring:
                arrivals += 1
                if dest.kind != IDLE:
                    waiting += 1
                    if dest.kind == DROP:
                        dropped += 1

            if dest.kind == IDLE:
                state.apply_arrival(1, 1)
                completion_rate += mu[0]
                jobs += 1
            elif dest.kind == BUSY:
                state.apply_arrival(dest.j+1, dest.m)
                jobs += 1
        else:
            m = rng.choice_weighted(
                    [mu[i]*busy[i] for i in range(M)], completion_rate)
            j = rng.choice_weighted([counts[jj][m] for jj in range(b)],
                    busy[m]) + 1

            if rng.random() < advance_prob[m]:
                state.apply_phase_advance(j, m+1)
                completion_rate += advance_delta[m]
            else:
                state.apply_departure(j, m+1)
                jobs -= 1
                if j > 1:
                    completion_rate += departure_delta[m]
                elif state.n_idle == N:
                    completion_rate = 0.
                else:
                    completion_rate -= mu[m]

        # }}}

        n_events += 1

        if n_events % check_every == 0:
            completion_rate = _check_rate(
                    completion_rate, arrival_rate, mu, busy, n_events)

        if max_events is not None and n_events >= max_events:
            break

    if not observed > 0:
        raise ValueError("no time observed after warmup; "
                "increase the horizon")

    occupancy[:] = occ_rows
    occupancy /= observed
    s1m_avg = occupancy @ (np.arange(N+1)/N)

    return SteadyMetrics(
            N=N, M=M, lam=lam,
            waiting_prob=waiting/arrivals if arrivals else 0.,
            drop_prob=dropped/arrivals if arrivals else 0.,
            avg_total_queue=time_in_jobs/observed/N,
            s1m_avg=s1m_avg,
            a1_time_avg=time_in_a1/observed,
            s1m_occupancy=occupancy,
            arrivals=arrivals, events=n_events, observed_time=observed,
            seed=config.seed,
            trajectory=(np.array(trajectory) if trajectory is not None
                else None),
            snapshots=snapshots)


def _check_rate(completion_rate, arrival_rate, mu, busy, n_events):
    exact = math.fsum(m_rate*count for m_rate, count in zip(mu, busy))
    total_inc = arrival_rate + completion_rate
    total_exact = arrival_rate + exact
    if abs(total_inc - total_exact) > RATE_CHECK_TOL*total_exact:
        raise RateBookkeepingError(
                "event rate drifted after %d events: tracked %r, actual %r"
                % (n_events, total_inc, total_exact))
    return exact

# }}}


# {{{ replicas

def _run_trial(config):
    return run(config)


def _seeded(config, trials, seed_base, run_index):
    from dataclasses import replace
    from pyzerowait.tools import derive_seed

    return [replace(config, seed=derive_seed(seed_base, run_index, i))
            for i in range(trials)]


def run_replicas(config, trials, seed_base=0, run_index=0, workers=1):
    """Run *trials* independent copies of *config*, seeded by
    :func:`~pyzerowait.tools.derive_seed`."""
    from pytools import ProcessLogger
    from pyzerowait.tools import parallel_map

    configs = _seeded(config, trials, seed_base, run_index)

    with ProcessLogger(logger, "%d trials, N=%d, %s"
            % (trials, config.N, config.policy)):
        return parallel_map(_run_trial, configs, workers)


def run_grid(configs, trials, seed_base=0, workers=1):
    """Run *trials* copies of each entry of *configs* as one pool of jobs.
    Entry *j* gets run index *j*, so each result list matches what
    :func:`run_replicas` gives for it. Returns one list of
    :class:`SteadyMetrics` per entry.
    """
    from pytools import ProcessLogger
    from pyzerowait.tools import parallel_map

    configs = list(configs)
    flat = [seeded
            for j, config in enumerate(configs)
            for seeded in _seeded(config, trials, seed_base, j)]

    with ProcessLogger(logger, "%d grid points x %d trials"
            % (len(configs), trials)):
        results = parallel_map(_run_trial, flat, workers)

    return [results[j*trials:(j+1)*trials] for j in range(len(configs))]

# }}}


# {{{ concentration check

@dataclass
class IntervalCheck:
    lower: np.ndarray
    upper: np.ndarray
    freq: np.ndarray
    printed_lower: np.ndarray
    printed_upper: np.ndarray
    printed_freq: np.ndarray
    condition_holds: bool


def _containment(occupancy, N, lower, upper):
    ks = np.arange(N+1)/N
    result = np.empty(len(lower))
    for m in range(len(lower)):
        inside = (ks >= lower[m] - 1e-12) & (ks <= upper[m] + 1e-12)
        result[m] = occupancy[m, inside].sum()
    return result


def check_theorem1_interval(metrics, consts, N, alpha):
    """Time-weighted fraction of the run during which each ``S_{1,m}``
    lies within the high-probability interval around the zero-waiting
    equilibrium.

    The main interval is ``[s* - theta_m Delta, s* + N**(-alpha) +
    sum_{r != m} theta_r Delta]`` with ``Delta = log(N)/sqrt(N)``. The
    variant with the opposite signs on the *theta* terms is reported as
    ``printed_*``. Also records whether the sufficient condition on *N*
    holds.
    """
    from pyzerowait.issp import theorem1_condition, theorem1_interval

    if consts.M == 1:
        raise NotApplicableError("the concentration interval needs M >= 2")
    if metrics.N != N:
        raise ValueError("metrics are for N=%d, not N=%d" % (metrics.N, N))

    interval = theorem1_interval(consts, N, alpha, lam=metrics.lam)
    cond = theorem1_condition(consts, N, alpha)

    freq = _containment(metrics.s1m_occupancy, N,
            interval.lower, interval.upper)
    printed_freq = _containment(metrics.s1m_occupancy, N,
            interval.printed_lower, interval.printed_upper)

    metrics.interval_freq = freq

    return IntervalCheck(
            lower=interval.lower, upper=interval.upper, freq=freq,
            printed_lower=interval.printed_lower,
            printed_upper=interval.printed_upper,
            printed_freq=printed_freq,
            condition_holds=cond.holds)

# }}}

# vim: foldmethod=marker
