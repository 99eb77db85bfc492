"""Routing policies: sampled routing, exact routing distributions and the
LB-zero check."""

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
from dataclasses import dataclass
from typing import Optional

from pyzerowait.tools import comb_ratio, UniformStream

logger = logging.getLogger(__name__)


# {{{ destinations

IDLE = "idle"
BUSY = "busy"
DROP = "drop"


@dataclass(frozen=True)
class Destination:
    """Where an arrival goes. For *kind* == ``"busy"``, *j* is the current
    number of jobs at the chosen server and *m* the phase of its job in
    service."""

    kind: str
    j: int = 0
    m: int = 0

    @classmethod
    def busy(cls, j, m):
        return cls(BUSY, j, m)

    @property
    def is_waiting(self):
        return self.kind != IDLE

    def apply(self, state):
        """Apply the arrival to *state*. Drops leave it unchanged."""
        if self.kind == IDLE:
            state.apply_arrival(1, 1)
        elif self.kind == BUSY:
            state.apply_arrival(self.j+1, self.m)

    def __str__(self):
        if self.kind == BUSY:
            return "busy(%d,%d)" % (self.j, self.m)
        return self.kind


Destination.IDLE = Destination(IDLE)
Destination.DROP = Destination(DROP)

# }}}


# {{{ policy specification

POLICY_KINDS = ("jsq", "jiq", "i1f", "pod")


@dataclass(frozen=True)
class PolicySpec:
    """
    .. attribute:: kind

        One of ``"jsq"`` (join the shortest queue), ``"jiq"`` (join an
        idle queue), ``"i1f"`` (idle one first) or ``"pod"`` (power of *d*
        choices).

    .. attribute:: d

        Explicit sample size for ``"pod"``.

    .. attribute:: d_alpha

        If *d* is not given, ``d = ceil(N**d_alpha * log(N)**2)`` with the
        logarithm taken to base :attr:`log_base`.
    """

    kind: str
    d: Optional[int] = None
    d_alpha: Optional[float] = None
    log_base: float = math.e

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError("unknown policy '%s', expected one of %s"
                    % (self.kind, ", ".join(POLICY_KINDS)))
        if self.kind == "pod":
            if self.d is None and self.d_alpha is None:
                raise ValueError("power-of-d policy needs d or d_alpha")
            if self.d is not None and self.d < 1:
                raise ValueError("d must be at least 1, got %d" % self.d)
            if self.log_base <= 1:
                raise ValueError("log base must exceed 1, got %g"
                        % self.log_base)

    def resolve_d(self, N):
        """Sample size for *N* servers, clamped to ``[1, N]``."""
        if self.kind != "pod":
            raise ValueError("only the power-of-d policy samples")

        if self.d is not None:
            d = self.d
        else:
            log_n = math.log(N)/math.log(self.log_base)
            d = math.ceil(N**self.d_alpha * log_n**2)

        return max(1, min(N, d))

    def __str__(self):
        if self.kind != "pod":
            return self.kind
        if self.d is not None:
            return "pod%d" % self.d
        return "pod[alpha=%g]" % self.d_alpha

# }}}


# {{{ exact routing distribution

def _level_distribution(state, level, weight, result):
    """Spread *weight* over the servers at *level*, phases proportional to
    their counts."""
    if weight == 0:
        return
    if level == 0:
        dest = Destination.IDLE
        result[dest] = result.get(dest, 0) + weight
    elif level == state.b:
        dest = Destination.DROP
        result[dest] = result.get(dest, 0) + weight
    else:
        row = state.counts[level-1]
        total = state.level_count[level]
        for m, count in enumerate(row):
            if count:
                dest = Destination.busy(level, m+1)
                result[dest] = result.get(dest, 0) + weight*count/total


def _min_level(state):
    for level, count in enumerate(state.level_count):
        if count:
            return level
    raise AssertionError("state without servers")


def _uniform_distribution(state, result, min_level=0):
    # a uniformly random server among those at min_level or above
    eligible = sum(state.level_count[min_level:])
    for level in range(min_level, state.b+1):
        _level_distribution(state, level,
                state.level_count[level]/eligible, result)


def dest_distribution(spec, state):
    """Return a :class:`dict` mapping each :class:`Destination` reachable
    from *state* to its probability."""
    result = {}

    if spec.kind == "jsq":
        _level_distribution(state, _min_level(state), 1., result)

    elif spec.kind == "jiq":
        if state.n_idle:
            _level_distribution(state, 0, 1., result)
        else:
            _uniform_distribution(state, result, min_level=1)

    elif spec.kind == "i1f":
        if state.n_idle:
            _level_distribution(state, 0, 1., result)
        elif state.b > 1 and state.level_count[1]:
            _level_distribution(state, 1, 1., result)
        else:
            _uniform_distribution(state, result, min_level=1)

    elif spec.kind == "pod":
        N = state.N
        d = spec.resolve_d(N)

        # at_least[j]: servers with at least j jobs
        at_least = [0]*(state.b+2)
        for level in range(state.b, -1, -1):
            at_least[level] = at_least[level+1] + state.level_count[level]

        for level in range(state.b+1):
            if not state.level_count[level]:
                continue
            weight = (comb_ratio(at_least[level], N, d)
                    - comb_ratio(at_least[level+1], N, d))
            _level_distribution(state, level, weight, result)

    else:
        raise AssertionError()

    return result


def a1_prob(spec, state):
    """Probability that an arrival is routed to a busy server (including
    a full one, which drops it)."""
    if spec.kind in ("jsq", "jiq", "i1f"):
        return 0. if state.n_idle else 1.
    elif spec.kind == "pod":
        N = state.N
        return comb_ratio(N - state.n_idle, N, spec.resolve_d(N))
    else:
        raise AssertionError()

# }}}


# {{{ sampled routing

class Router:
    """Samples a :class:`Destination` per arrival for one policy and a
    fixed system size.

    Power-of-*d* draws the least loaded level of the sample by inverting
    ``P(min level >= l) = C(n_l, d)/C(N, d)``, where ``n_l`` counts the
    servers with at least *l* jobs. Those ratios depend only on ``n_l`` and
    are cached.
    """

    def __init__(self, spec, N, b, M):
        self.spec = spec
        self.N = N
        self.b = b
        self.d = spec.resolve_d(N) if spec.kind == "pod" else None

        self._busy = [[Destination.busy(j, m+1) for m in range(M)]
                for j in range(b+1)]
        self._tail = {}

    def tail_prob(self, n_at_least):
        try:
            return self._tail[n_at_least]
        except KeyError:
            result = self._tail[n_at_least] = comb_ratio(
                    n_at_least, self.N, self.d)
            return result

    def pick_phase(self, state, level, rng):
        if level == 0:
            return Destination.IDLE
        if level == self.b:
            return Destination.DROP

        m = rng.choice_weighted(state.counts[level-1], state.level_count[level])
        return self._busy[level][m]

    def __call__(self, state, rng):
        kind = self.spec.kind
        lc = state.level_count

        if kind == "jsq":
            return self.pick_phase(state, _min_level(state), rng)

        if kind == "i1f" and not state.n_idle and self.b > 1 and lc[1]:
            return self.pick_phase(state, 1, rng)

        if kind in ("jiq", "i1f"):
            if state.n_idle:
                return Destination.IDLE
            level = rng.choice_weighted(lc, self.N)
            return self.pick_phase(state, level, rng)

        if kind == "pod":
            u = rng.random()
            level = 0
            above = self.N - lc[0]
            while level < self.b and self.tail_prob(above) > u:
                level += 1
                above -= lc[level]
            return self.pick_phase(state, level, rng)

        raise AssertionError()


def route(spec, state, rng):
    """Sample a :class:`Destination` for one arrival.

    :arg rng: a :class:`~pyzerowait.tools.UniformStream` or a
        :class:`numpy.random.Generator`.
    """
    if not isinstance(rng, UniformStream):
        rng = UniformStream(rng)

    return Router(spec, state.N, state.b, state.M)(state, rng)

# }}}


# {{{ LB-zero check

@dataclass(frozen=True)
class LBZeroReport:
    policy: str
    N: int
    alpha: float
    d: Optional[int]
    worst_busy: int
    a1_worst: float
    threshold: float
    passed: bool
    min_passing_N: Optional[int]

    @property
    def margin(self):
        return self.threshold - self.a1_worst


def _lbzero_at(spec, N, alpha):
    # worst admissible state: as many busy servers as
    # s_1 <= 1 - 1/(N^alpha log N) allows, i.e. N minus the ceiling of the
    # idle margin, in integers so that N beyond 2**53 stays exact
    idle_margin = N**(1 - alpha)/math.log(N)
    worst_busy = N - math.ceil(idle_margin - 1e-9)
    worst_busy = max(0, min(N, worst_busy))

    if spec.kind == "pod":
        d = spec.resolve_d(N)
        a1 = comb_ratio(worst_busy, N, d)
    else:
        d = None
        a1 = 0. if worst_busy < N else 1.

    threshold = 1/math.sqrt(N)
    return worst_busy, d, a1, threshold, a1 <= threshold


def lbzero_check(spec, N, alpha, max_log2_N=64):
    """Check ``A_1(s) <= 1/sqrt(N)`` over all states with
    ``s_1 <= 1 - 1/(N^alpha log N)``.

    Since *A_1* depends only on the number of busy servers and grows with
    it, checking the largest admissible busy count suffices. Also scans
    ``N = 2, 4, ..., 2**max_log2_N`` for the smallest passing *N*.
    """
    if N < 2:
        raise ValueError("LB-zero check needs N >= 2, got %d" % N)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1), got %g" % alpha)

    worst_busy, d, a1, threshold, passed = _lbzero_at(spec, N, alpha)

    min_passing_N = None
    for log2_n in range(1, max_log2_N+1):
        n_scan = 2**log2_n
        if _lbzero_at(spec, n_scan, alpha)[-1]:
            min_passing_N = n_scan
            break

    logger.debug("lb-zero %s at N=%d: A_1=%g vs %g", spec, N, a1, threshold)

    return LBZeroReport(
            policy=str(spec), N=N, alpha=alpha, d=d,
            worst_busy=worst_busy, a1_worst=a1, threshold=threshold,
            passed=passed, min_passing_N=min_passing_N)

# }}}

# vim: foldmethod=marker
