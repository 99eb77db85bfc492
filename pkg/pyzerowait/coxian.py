"""Coxian service-time distributions and the constants derived from them."""

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

import numpy as np
from pytools import memoize

from pyzerowait import DistributionError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12


# {{{ distribution

class CoxianDist:
    """A Coxian distribution with *M* phases.

    A job enters phase 1, spends an exponential time with rate ``mu[m-1]``
    in phase *m* and then continues to phase *m+1* with probability
    ``p[m-1]``, or leaves. Phase *M* always leaves.

    .. attribute:: M
    .. attribute:: p

        Continuation probabilities of phases 1 through *M-1*.

    .. attribute:: mu
    .. attribute:: v

        Per-phase mean loads, ``v[m-1] = (p_1 ... p_{m-1}) / mu_m``.
    """

    def __init__(self, M, p, mu):
        if int(M) != M or M < 1:
            raise DistributionError("M must be a positive integer, got %r" % M,
                    field="M")
        M = int(M)

        mu = tuple(float(x) for x in mu)
        p = tuple(float(x) for x in p)

        if len(mu) != M:
            raise DistributionError(
                    "mu must have M=%d entries, got %d" % (M, len(mu)),
                    field="mu")

        # a trailing 1.0 for phase M is accepted and dropped
        if len(p) == M:
            if p[-1] != 1.:
                raise DistributionError(
                        "p has M=%d entries but the last is %g, not 1"
                        % (M, p[-1]), field="p")
            p = p[:-1]

        if len(p) != M-1:
            raise DistributionError(
                    "p must have M-1=%d entries, got %d" % (M-1, len(p)),
                    field="p")

        for m, mu_m in enumerate(mu, 1):
            if not (mu_m > 0 and math.isfinite(mu_m)):
                raise DistributionError(
                        "mu_%d must be positive and finite, got %g" % (m, mu_m),
                        field="mu")

        for i, p_i in enumerate(p, 1):
            if not 0 <= p_i <= 1:
                raise DistributionError(
                        "p_%d must lie in [0, 1], got %g" % (i, p_i),
                        field="p")

        if any(p_i == 1 for p_i in p):
            from warnings import warn
            warn("continuation probability of 1 (Erlang-type phases) "
                    "accepted, but the positivity of the derived constants "
                    "is only guaranteed for p_i < 1", stacklevel=2)

        self.M = M
        self.p = p
        self.mu = mu

        v = []
        reach = 1.
        for m in range(M):
            v.append(reach/mu[m])
            if m < M-1:
                reach *= p[m]
        self.v = tuple(v)

    # {{{ alternate constructors

    @classmethod
    def exponential(cls, rate=1.):
        return cls(1, (), (rate,))

    @classmethod
    def erlang(cls, M, rate=None):
        """Erlang-*M*, by default with rate *M* so that the mean is 1."""
        if rate is None:
            rate = M
        return cls(M, (1.,)*(M-1), (rate,)*M)

    @classmethod
    def identical_rate(cls, M, p, normalize=True):
        """All phases share one rate and one continuation probability *p*."""
        result = cls(M, (p,)*(M-1), (1.,)*M)
        if normalize:
            result = result.normalize()
        return result

    # }}}

    def mean(self):
        return math.fsum(self.v)

    def second_moment(self):
        # E[T^2] via the phase-type formula 2 alpha T^{-2} 1
        T = self.sub_generator()
        alpha = np.zeros(self.M)
        alpha[0] = 1
        Tinv = np.linalg.inv(T)
        return float(2*alpha @ Tinv @ Tinv @ np.ones(self.M))

    def scv(self):
        """Squared coefficient of variation."""
        mean = self.mean()
        return self.second_moment()/mean**2 - 1

    def sub_generator(self):
        M = self.M
        T = np.zeros((M, M))
        for m in range(M):
            T[m, m] = -self.mu[m]
            if m < M-1:
                T[m, m+1] = self.p[m]*self.mu[m]
        return T

    def exit_rates(self):
        """Per-phase departure rates ``(1-p_m) mu_m``, with phase *M*
        departing at its full rate."""
        return tuple(
                (1-self.p[m])*self.mu[m] if m < self.M-1 else self.mu[m]
                for m in range(self.M))

    def is_normalized(self, tol=NORMALIZATION_TOL):
        return abs(self.mean() - 1) <= tol

    def normalize(self):
        """Return a copy with all phase rates scaled by the mean, so that
        the mean service time is 1."""
        mean = self.mean()
        if abs(mean - 1) <= 1e-15:
            return self
        return CoxianDist(self.M, self.p, tuple(mu_m*mean for mu_m in self.mu))

    def __eq__(self, other):
        return (type(self) == type(other)
                and self.p == other.p
                and self.mu == other.mu)

    def __hash__(self):
        return hash((type(self).__name__, self.p, self.mu))

    def __repr__(self):
        return "CoxianDist(M=%d, p=%r, mu=%r)" % (self.M, self.p, self.mu)


def make_dist(M, p, mu, normalize=True):
    result = CoxianDist(M, p, mu)
    if normalize:
        result = result.normalize()
    return result

# }}}


# {{{ sampling

def sample_service_time(dist, rng):
    """Draw one service time. *rng* is a :class:`numpy.random.Generator`."""
    t = 0.
    for m in range(dist.M):
        t += rng.exponential(1/dist.mu[m])
        if m == dist.M-1 or rng.random() >= dist.p[m]:
            break
    return t


def sample_service_times(dist, rng, size):
    """Vectorized version of :func:`sample_service_time`."""
    t = np.zeros(size)
    alive = np.ones(size, dtype=bool)
    for m in range(dist.M):
        n_alive = int(alive.sum())
        if not n_alive:
            break
        t[alive] += rng.exponential(1/dist.mu[m], n_alive)
        if m < dist.M-1:
            alive[alive] = rng.random(n_alive) < dist.p[m]
    return t

# }}}


# {{{ derived constants

@dataclass(frozen=True, eq=False)
class DerivedConstants:
    """Closed-form constants of a normalized Coxian distribution.

    Phase-indexed arrays come in two flavors. *a*, *b* and *c* cover
    phases 2 through *M*, so entry ``m-2`` belongs to phase *m*. *theta*
    and *w* cover all phases, entry ``m-1`` belonging to phase *m*.

    *C* and *theta* are *None* for *M* = 1. *zeta* and *k* depend on the
    buffer size and are *None* unless it was supplied.
    """

    M: int
    mu: tuple
    v: tuple
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    xi: float
    C_M: float
    C_M_strict: float
    C: Optional[float]
    vbar: float
    theta: Optional[np.ndarray]
    w: np.ndarray
    w_u: float
    w_l: float
    mu_max: float
    buffer_size: Optional[int] = None
    zeta: Optional[float] = None
    k: Optional[float] = None

    @property
    def theta_sum(self):
        if self.theta is None:
            return None
        return float(np.sum(self.theta))

    def product_identity_residual(self, dist):
        """``|1 - xi - mu_1 prod a_m|``, which vanishes for every valid
        normalized distribution."""
        return abs(1 - self.xi - dist.mu[0]*float(np.prod(self.a)))


def _frozen(ary):
    ary = np.asarray(ary, dtype=np.float64)
    ary.setflags(write=False)
    return ary


def _tail_products(a):
    """Return *t* with ``t[i] = prod(a[i+1:])``."""
    result = np.ones(len(a))
    for i in range(len(a)-2, -1, -1):
        result[i] = result[i+1]*a[i+1]
    return result


@memoize(use_kwargs=True)
def derived_constants(dist, b=None):
    """Compute the constants for the normalized distribution *dist*.

    :arg b: the per-server capacity (buffer plus one in service), needed
        only for *zeta* and *k*.
    """
    if not dist.is_normalized():
        raise DistributionError("derived constants need a normalized "
                "distribution (mean service time %g)" % dist.mean(),
                field="mu")
    if b is not None and b < 1:
        raise ValueError("buffer size must be positive, got %d" % b)

    M = dist.M
    mu = np.array(dist.mu)
    v = np.array(dist.v)
    p = np.array(dist.p + (0.,))

    w = np.array(dist.exit_rates())
    w_u = float(w.max())
    w_l = float(w.min())
    mu_max = float(mu.max())
    vbar = float(v.min())

    if M == 1:
        return DerivedConstants(
                M=1, mu=dist.mu, v=dist.v, a=_frozen([]), b=_frozen([]), c=_frozen([]),
                xi=0., C_M=0., C_M_strict=6., C=None, vbar=vbar,
                theta=None, w=_frozen(w), w_u=w_u, w_l=w_l, mu_max=mu_max,
                buffer_size=b)

    a = np.empty(M-1)
    b_coef = np.empty(M-1)
    c = np.empty(M-1)

    for m in range(2, M+1):
        i = m-1
        a_m = mu[i]/(p[0]*mu[0] + mu[i])
        a[m-2] = a_m

        # (1-a_m)(1 + later_load/v_1) - a_m v_m/v_1, rearranged so that
        # no cancellation can push it below zero
        later_load = math.fsum(v[r-1] for r in range(m+1, M+1))
        b_coef[m-2] = (
                p[0]*mu[0]/(p[0]*mu[0] + mu[i])*(1 - float(np.prod(p[1:m-1])))
                + (1-a_m)*later_load/v[0])

        c[m-2] = (
                5*(1-a_m)*math.fsum((r-1)*v[r-1] for r in range(m+1, M+1))
                + 5*a_m*math.fsum(mu[r-1]*v[r-1] for r in range(2, m))/mu[i]
                + 5*(m-2)*a_m*v[i]
                + 5 - a_m)

    tails = _tail_products(a)
    xi = float(math.fsum(b_coef*tails))
    C_M = float(math.fsum(c*tails))

    if xi > 0:
        log_inv_xi = math.log(1/xi)
        C = math.sqrt(2*vbar**2*log_inv_xi/(3*M + (3*M+4)*log_inv_xi))
    else:
        # limit as log(1/xi) grows without bound
        C = math.sqrt(2*vbar**2/(3*M+4))

    phases = np.arange(1, M+1)
    theta = (6*mu[0]*v + 5*(phases-1)*v)/C

    zeta = k = None
    if b is not None:
        theta_w = float(np.dot(theta, w))
        if w_l > 0:
            zeta = (4*w_u*b/w_l)*((1/w_l - 1/w_u)*theta_w + 1/w_l + 6)
            k = theta_w/w_u + (1 + w_l/(4*w_u*b))*zeta - float(theta.sum())
        else:
            zeta = k = math.inf

    return DerivedConstants(
            M=M, mu=dist.mu, v=dist.v, a=_frozen(a), b=_frozen(b_coef), c=_frozen(c),
            xi=xi, C_M=C_M, C_M_strict=C_M + 6, C=C, vbar=vbar,
            theta=_frozen(theta), w=_frozen(w), w_u=w_u, w_l=w_l,
            mu_max=mu_max, buffer_size=b, zeta=zeta, k=k)

# }}}


def zero_waiting_equilibrium(dist, lam):
    """Return ``s*_{1,m} = lam v_m`` as an array over the phases."""
    if not lam > 0:
        raise ValueError("arrival rate per server must be positive, got %g" % lam)
    if lam > 1:
        raise ValueError("arrival rate per server must not exceed 1, got %g"
                % lam)
    return lam*np.array(dist.v)

# vim: foldmethod=marker
