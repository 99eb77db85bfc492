"""Mean-field (fluid) model and a fixed-step Runge-Kutta integrator for it.

The fluid state is an array ``s`` of shape ``(b, M)`` where ``s[i-1, m-1]``
approximates the fraction of servers holding at least *i* jobs whose job
in service is in phase *m*.
"""

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
from functools import partial

import numpy as np

from pyzerowait import IntegrationError

logger = logging.getLogger(__name__)


@dataclass
class FluidState:
    s: np.ndarray
    t: float = 0.

    @classmethod
    def zeros(cls, b, M):
        return cls(np.zeros((b, M)))

    @classmethod
    def from_s1(cls, s1, b=1):
        """All mass in the first row: no server holds more than one job."""
        s1 = np.asarray(s1, dtype=np.float64)
        s = np.zeros((b, len(s1)))
        s[0] = s1
        return cls(s)

    @property
    def b(self):
        return self.s.shape[0]

    @property
    def M(self):
        return self.s.shape[1]


# {{{ right-hand sides

def rhs_jsq_truncated(s, dist, lam):
    """Fluid dynamics under join-the-shortest-queue, with all queues of
    length at most one::

        ds_{1,1}/dt = lam 1{s_1 < 1} - mu_1 s_{1,1}
        ds_{1,m}/dt = p_{m-1} mu_{m-1} s_{1,m-1} - mu_m s_{1,m}

    Rows past the first are held at zero.
    """
    s = np.asarray(s)
    mu = dist.mu
    result = np.zeros_like(s, dtype=np.float64)

    s1 = s[0].sum()
    result[0, 0] = lam*(1. if s1 < 1 else 0.) - mu[0]*s[0, 0]
    for m in range(1, dist.M):
        result[0, m] = dist.p[m-1]*mu[m-1]*s[0, m-1] - mu[m]*s[0, m]
    return result


def rhs_general(s, dist, lam, routing):
    """General fluid dynamics.

    :arg routing: a function of *s* returning an array *A* of shape
        ``(b+1, M)``, where ``A[i, m-1]`` is the probability that an
        arrival joins a server with at least *i* jobs in phase *m*. Row 0
        counts idle servers as phase 1.
    """
    s = np.asarray(s, dtype=np.float64)
    b, M = s.shape
    mu = np.array(dist.mu)
    cont = np.array(dist.p + (0.,))
    exit_rate = (1 - cont)*mu

    A = np.asarray(routing(s))
    if A.shape != (b+1, M):
        raise ValueError("routing must return shape (%d, %d), got %s"
                % (b+1, M, A.shape))

    result = lam*(A[:-1] - A[1:]) - mu*s
    result[:, 1:] += cont[:-1]*mu[:-1]*s[:, :-1]

    # a departure from a server with at least i+1 jobs leaves it with at
    # least i jobs, the next of which starts in phase 1
    s_below = np.vstack([s[1:], np.zeros((1, M))])
    result[:, 0] += s_below @ exit_rate
    return result


def _routing_from_levels(level_probs):
    """Turn per-(exact level, phase) arrival probabilities of shape
    ``(b+1, M)`` into the cumulative ``A`` used by :func:`rhs_general`."""
    return np.cumsum(level_probs[::-1], axis=0)[::-1]


def _exact_levels(s):
    b, M = s.shape
    padded = np.vstack([s, np.zeros((1, M))])
    # fraction of servers with exactly i jobs in phase m, i = 1..b
    busy = np.clip(padded[:-1] - padded[1:], 0, None)
    idle = max(0., 1 - s[0].sum())
    return idle, busy


def jsq_fluid_routing(s):
    """Fluid join-the-shortest-queue: everything goes to the lowest
    nonempty level."""
    s = np.asarray(s)
    b, M = s.shape
    idle, busy = _exact_levels(s)

    probs = np.zeros((b+1, M))
    if idle > 0:
        probs[0, 0] = 1
    else:
        for i in range(b):
            total = busy[i].sum()
            if total > 0:
                # row b holds arrivals lost at full servers
                probs[i+1] = busy[i]/total
                break
    return _routing_from_levels(probs)


def jiq_fluid_routing(s):
    """Fluid join-the-idle-queue: idle if any, else uniform."""
    s = np.asarray(s)
    b, M = s.shape
    idle, busy = _exact_levels(s)

    probs = np.zeros((b+1, M))
    if idle > 0:
        probs[0, 0] = 1
    else:
        total = busy.sum()
        if total > 0:
            probs[1:] = busy/total
    return _routing_from_levels(probs)


def general_rhs(routing):
    """Bind *routing* into a right-hand side usable with :func:`integrate`."""
    def rhs(s, dist, lam):
        return rhs_general(s, dist, lam, routing)
    return rhs

# }}}


# {{{ integration

@dataclass
class FluidTrajectory:
    t: np.ndarray
    s: np.ndarray

    @property
    def final(self):
        return FluidState(self.s[-1].copy(), float(self.t[-1]))

    def csv_header(self):
        return ["t"] + ["s_1_%d" % m for m in range(1, self.s.shape[2]+1)]

    def csv_rows(self):
        for t, s in zip(self.t, self.s):
            yield [float(t)] + s[0].tolist()


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + h/2*k1)
    k3 = f(y + h/2*k2)
    k4 = f(y + h*k3)
    return y + h/6*(k1 + 2*k2 + 2*k3 + k4)


def integrate(rhs, initial, dist, lam, t_end, h=None, sample_every=1):
    """Integrate ``ds/dt = rhs(s, dist, lam)`` from *initial* (a
    :class:`FluidState`) up to *t_end* with the classical fourth-order
    Runge-Kutta scheme and fixed step *h*, shortening the last step to end
    exactly at *t_end*.

    :arg h: step size, by default ``0.01/max(mu)``.
    :arg sample_every: record every that many steps. The first and last
        states are always recorded.
    """
    if h is None:
        h = 0.01/max(dist.mu)
    if not h > 0:
        raise ValueError("step size must be positive, got %g" % h)
    if sample_every < 1:
        raise ValueError("sample_every must be positive, got %d"
                % sample_every)

    t0 = initial.t
    if not t_end >= t0:
        raise ValueError("t_end=%g precedes the initial time %g"
                % (t_end, t0))

    f = partial(rhs, dist=dist, lam=lam)

    n_full = int(math.floor((t_end - t0)/h + 1e-9))
    remainder = (t_end - t0) - n_full*h
    if remainder < 1e-12*max(1., t_end):
        remainder = 0

    logger.debug("integrating to t=%g: %d steps of h=%g, remainder %g",
            t_end, n_full, h, remainder)

    y = np.array(initial.s, dtype=np.float64)
    times = [t0]
    states = [y.copy()]

    def check(y, t):
        if not np.all(np.isfinite(y)):
            raise IntegrationError(
                    "non-finite fluid state at t=%g" % t,
                    t=t, last_state=states[-1])

    for step in range(1, n_full+1):
        y = rk4_step(f, y, h)
        t = t0 + step*h
        check(y, t)
        if step % sample_every == 0 or (step == n_full and not remainder):
            times.append(t)
            states.append(y.copy())

    if remainder:
        y = rk4_step(f, y, remainder)
        check(y, t_end)
        times.append(t_end)
        states.append(y.copy())
    elif n_full:
        times[-1] = t_end

    return FluidTrajectory(t=np.array(times), s=np.array(states))

# }}}

# vim: foldmethod=marker
