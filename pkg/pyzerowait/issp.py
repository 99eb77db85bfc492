"""Iterative state-space peeling: alternating lower and upper bounds on
the steady state, and evaluation of the resulting high-probability and
waiting-probability bounds.

Bounds are tracked for the fraction ``S_{1,m}`` of servers holding at
least one job in phase *m*. In each iteration, a lower bound on
``S_{1,1}`` yields lower bounds on the other ``S_{1,m}`` and upper bounds
``U_m`` on ``S_{1,2} + ... + S_{1,m}``, and ``U_M`` in turn yields the next
lower bound on ``S_{1,1}``.
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
from typing import Optional

import numpy as np

from pyzerowait import NotApplicableError

logger = logging.getLogger(__name__)

ORDERINGS = ("collapsed", "literal")


# {{{ trace

@dataclass
class IsspTrace:
    """Per-iteration bounds. Row *n* of each array belongs to iteration *n*.

    .. attribute:: L

        Shape ``(n+1, M)``, lower bounds on ``S_{1,m}``.

    .. attribute:: U

        Shape ``(n+1, M)``, upper bounds on ``S_{1,2} + ... + S_{1,m}``.
        Column 0 is identically zero.

    .. attribute:: eps
    .. attribute:: sigma

        Failure probabilities of the lower and upper bounds (rigorous mode
        only, otherwise *None*). Not clamped to 1. Column 0 of *sigma* is
        identically zero.

    .. attribute:: closed_form

        The lower bound on ``S_{1,1}`` from the one-line contraction
        ``K + xi (L - K)``, for cross-checking (collapsed ordering only).
    """

    mode: str
    ordering: str
    lam: float
    L: np.ndarray
    U: np.ndarray
    eps: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    closed_form: Optional[np.ndarray] = None
    N: Optional[float] = None
    alpha: Optional[float] = None
    delta: float = 0.
    converged: bool = False
    conditions_ok: Optional[bool] = None

    @property
    def n_iterations(self):
        return self.L.shape[0] - 1

    @property
    def M(self):
        return self.L.shape[1]

    def csv_header(self):
        M = self.M
        result = ["n"]
        result += ["L_%d" % m for m in range(1, M+1)]
        result += ["U_%d" % m for m in range(2, M+1)]
        if self.eps is not None:
            result += ["eps_%d" % m for m in range(1, M+1)]
            result += ["sigma_%d" % m for m in range(2, M+1)]
        return result

    def csv_rows(self):
        for n in range(self.n_iterations+1):
            row = [n] + self.L[n].tolist() + self.U[n, 1:].tolist()
            if self.eps is not None:
                row += self.eps[n].tolist() + self.sigma[n, 1:].tolist()
            yield row

# }}}


# {{{ bound recursions

def upper_chain(consts, l11, delta_over_c=0.):
    """``U_m = 1 - a_m - b_m l11 + a_m U_{m-1} + c_m delta_over_c`` for
    ``m = 2..M``, starting from ``U_1 = 0``."""
    result = np.zeros(consts.M)
    for m in range(2, consts.M+1):
        i = m-2
        result[m-1] = (1 - consts.a[i] - consts.b[i]*l11
                + consts.a[i]*result[m-2]
                + consts.c[i]*delta_over_c)
    return result


def lower_chain(consts, l11, delta_over_c=0.):
    """``L_{1,m} = (v_m/v_{m-1}) L_{1,m-1} - 5 v_m delta_over_c``."""
    v = consts.v
    result = np.empty(consts.M)
    result[0] = l11
    for m in range(1, consts.M):
        result[m] = v[m]/v[m-1]*result[m-1] - 5*v[m]*delta_over_c
    return result


def _iterate(consts, lam, delta_over_c, slack, n_iter, ordering, tol,
        stop_on_convergence):
    if ordering not in ORDERINGS:
        raise ValueError("unknown ordering '%s'" % ordering)

    M = consts.M
    cap = lam*consts.v[0] - 6*delta_over_c

    L = [np.zeros(M)]
    U0 = np.ones(M)
    U0[0] = 0
    U = [U0]

    converged = False
    for n in range(n_iter):
        l11 = L[-1][0]
        if ordering == "collapsed":
            u_m = upper_chain(consts, l11, delta_over_c)[-1]
        else:
            u_m = U[-1][-1]

        l11_new = min(cap, 1 - u_m - slack - 6*delta_over_c)

        L.append(lower_chain(consts, l11_new, delta_over_c))
        U.append(upper_chain(consts, l11_new, delta_over_c))

        if (stop_on_convergence
                and abs(l11_new - l11) <= tol
                and np.max(np.abs(U[-1] - U[-2])) <= tol):
            converged = True
            break

    return np.array(L), np.array(U), converged


def _closed_form(consts, lam, delta_over_c, slack, n_iter):
    """Lower bounds on ``S_{1,1}`` from ``min(cap, K + xi (L - K))``.

    *K* carries ``C_M_strict`` rather than ``C_M``, which
    absorbs the ``6 Delta/C`` margin of the ``S_{1,1}`` update.
    """
    xi = consts.xi
    mu1 = consts.mu[0]
    cap = lam*consts.v[0] - 6*delta_over_c
    K = 1/mu1 - (consts.C_M_strict*delta_over_c + slack)/(1 - xi)

    result = np.zeros(n_iter+1)
    for n in range(n_iter):
        result[n+1] = min(cap, K + xi*(result[n] - K))
    return result


def _require_phases(consts):
    if consts.M < 2:
        raise NotApplicableError(
                "bound iteration needs at least two phases, got M=%d"
                % consts.M)

# }}}


# {{{ ideal mode

def iterate_ideal(consts, dist, lam, n_max=200, ordering="collapsed",
        tol=1e-12):
    """Run the bound iteration without the finite-*N* margins.

    :arg ordering: ``"collapsed"`` recomputes ``U_M`` from the current
        lower bound before updating it; ``"literal"`` uses the stored
        ``U_M`` of the previous iteration, starting from 1, and lags one
        iteration behind.
    """
    _require_phases(consts)
    if not 0 < lam <= 1:
        raise ValueError("arrival rate per server must lie in (0, 1], got %g"
                % lam)
    if dist.v != consts.v:
        raise ValueError("constants were derived from a different "
                "distribution")

    L, U, converged = _iterate(consts, lam, 0., 0., n_max, ordering, tol,
            stop_on_convergence=True)

    closed = None
    if ordering == "collapsed":
        closed = _closed_form(consts, lam, 0., 0., L.shape[0]-1)

    logger.debug("ideal iteration: %d steps, converged=%s",
            L.shape[0]-1, converged)

    if (ordering == "collapsed" and lam == 1 and L.shape[0] >= 3
            and dist.M == 3
            and all(p == 1 for p in dist.p) and len(set(dist.mu)) == 1):
        # some published listings give 11/32 as the third value, which is
        # the S_{1,2} upper bound at that step
        logger.info("Erlang-3 input: lower bound on S_1,1 runs %s by the "
                "recursion, not 0, 0.25, 0.34375",
                ", ".join("%g" % x for x in L[:3, 0]))

    return IsspTrace(mode="ideal", ordering=ordering, lam=lam, L=L, U=U,
            closed_form=closed, converged=converged)

# }}}


# {{{ rigorous mode

def default_n_stop(consts, N):
    """``ceil(log N / (2 log(1/xi)))``, at least 1."""
    if consts.xi <= 0:
        return 1
    return max(1, math.ceil(math.log(N)/(2*math.log(1/consts.xi))))


def _failure_probabilities(consts, N, delta, eps_prev, sigma_prev):
    """One step of the failure-probability recursion. Returns
    ``(eps, sigma)`` for iteration *n+1* given *sigma* of iteration *n*."""
    M = consts.M
    C = consts.C
    v = consts.v
    log_n = math.log(N)

    base = math.exp(-log_n**2/C**2)
    grow = C/delta + 1

    eps = np.empty(M)
    eps[0] = base + grow*sigma_prev[-1]
    for m in range(1, M):
        eps[m] = (math.exp(-v[m]**2*log_n**2/C**2)
                + (C/(v[m]*delta) + 1)*eps[m-1])

    sigma = np.zeros(M)
    sigma_alt = np.zeros(M)
    eps_sum = eps.sum()
    eps_prev_sum = eps_prev.sum()
    for m in range(1, M):
        sigma[m] = base + grow*(sigma[m-1] + eps_sum)
        sigma_alt[m] = base + grow*(sigma_alt[m-1] + eps_prev_sum)

    logger.debug("sigma_M with current eps: %g, with previous eps: %g",
            sigma[-1], sigma_alt[-1])
    return eps, sigma


def iterate_rigorous(consts, dist, N, alpha, n_stop=None,
        ordering="collapsed", delta=None, slack=None):
    """Run the bound iteration with the finite-*N* margins at load
    ``lam = 1 - N**(-alpha)``.

    Lower bounds lose ``6 Delta/C`` (phase 1) and ``5 v_m Delta/C``
    (phase *m*), upper bounds gain ``c_m Delta/C``, and the phase-1
    update subtracts ``(1-xi)/(2 mu_1 N**alpha)``. Here
    ``Delta = log(N)/sqrt(N)``.

    :arg delta: override for *Delta*. With *delta* = 0 and *slack* = 0
        this reduces to :func:`iterate_ideal`.
    """
    _require_phases(consts)
    if N < 2:
        raise ValueError("N must be at least 2, got %g" % N)
    if not alpha > 0:
        raise ValueError("alpha must be positive, got %g" % alpha)
    if dist.v != consts.v:
        raise ValueError("constants were derived from a different "
                "distribution")
    assert 0 <= consts.xi < 1

    lam = 1 - N**(-alpha)
    if delta is None:
        delta = math.log(N)/math.sqrt(N)
    if slack is None:
        slack = (1 - consts.xi)/(2*consts.mu[0]*N**alpha)
    if n_stop is None:
        n_stop = default_n_stop(consts, N)

    delta_over_c = delta/consts.C

    L, U, _ = _iterate(consts, lam, delta_over_c, slack, n_stop, ordering,
            0., stop_on_convergence=False)

    closed = None
    if ordering == "collapsed":
        closed = _closed_form(consts, lam, delta_over_c, slack, n_stop)

    eps = sigma = None
    if delta > 0:
        M = consts.M
        eps = np.zeros((n_stop+1, M))
        sigma = np.zeros((n_stop+1, M))
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(n_stop):
                eps[n+1], sigma[n+1] = _failure_probabilities(
                        consts, N, delta, eps[n], sigma[n])

    cond = theorem1_condition(consts, N, alpha)
    if not cond.holds:
        from warnings import warn
        warn("N=%g does not satisfy the sufficient condition for the "
                "high-probability bound; the iteration is reported but "
                "carries no guarantee" % N)
    if eps is not None and (eps[-1].max() > 1 or sigma[-1].max() > 1):
        logger.info("failure probabilities exceed 1 at N=%g "
                "and are not meaningful", N)

    return IsspTrace(mode="rigorous", ordering=ordering, lam=lam, L=L, U=U,
            eps=eps, sigma=sigma, closed_form=closed, N=N, alpha=alpha,
            delta=delta, converged=False, conditions_ok=cond.holds)

# }}}


# {{{ theorem bounds

@dataclass(frozen=True)
class ConditionReport:
    """``lower_side * N**(0.5-alpha) >= log N >= upper_side``"""

    holds: bool
    log_n: float
    lower_side: float
    upper_side: float
    lower_terms: dict
    upper_terms: dict


def _check_condition(N, alpha, lower_terms, upper_terms):
    log_n = math.log(N)
    lower_side = min(lower_terms.values())
    upper_side = max(upper_terms.values())
    holds = bool(lower_side*N**(0.5-alpha) >= log_n >= upper_side)
    return ConditionReport(holds=holds, log_n=log_n,
            lower_side=lower_side, upper_side=upper_side,
            lower_terms=lower_terms, upper_terms=upper_terms)


def _common_lower_terms(consts):
    mu1 = consts.mu[0]
    return {
            "sum_theta": consts.theta_sum,
            "C(1-xi)/(2 mu_1 C_M)": consts.C*(1-consts.xi)/(2*mu1*consts.C_M),
            }


def theorem1_condition(consts, N, alpha):
    """Sufficient condition on *N* for the high-probability bound."""
    _require_phases(consts)
    mu1 = consts.mu[0]
    return _check_condition(N, alpha,
            _common_lower_terms(consts),
            {
                "2 mu_1/(1-xi)": 2*mu1/(1-consts.xi),
                "C/mu_1": consts.C/mu1,
                })


def waiting_condition(consts, N, alpha):
    """Sufficient condition on *N* for the waiting-probability bound.
    Needs constants derived with a buffer size."""
    _require_phases(consts)
    if consts.buffer_size is None:
        raise ValueError("waiting-probability condition needs constants "
                "derived with a buffer size")

    mu1 = consts.mu[0]
    lower_terms = dict(_common_lower_terms(consts))
    lower_terms["1/(2k)"] = 1/(2*consts.k) if consts.k else math.inf

    log_inv_xi = math.log(1/consts.xi) if consts.xi > 0 else math.inf
    upper_terms = {
            "log(1/xi)": log_inv_xi,
            "2 mu_1/(1-xi)": 2*mu1/(1-consts.xi),
            "4b/(w_l zeta)": 4*consts.buffer_size/(consts.w_l*consts.zeta)
            if consts.w_l > 0 else math.inf,
            "C/mu_1": consts.C/mu1,
            "2": 2.,
            }
    return _check_condition(N, alpha, lower_terms, upper_terms)


@dataclass(frozen=True)
class IntervalBounds:
    lower: np.ndarray
    upper: np.ndarray
    printed_lower: np.ndarray
    printed_upper: np.ndarray


def theorem1_interval(consts, N, alpha, lam=None):
    """Interval around ``s*_{1,m} = lam v_m`` that holds ``S_{1,m}`` with
    high probability.

    *lower*/*upper* put the ``theta_m log(N)/sqrt(N)`` margin below the
    equilibrium, which is what the bound iteration produces.
    *printed_lower*/*printed_upper* have the opposite signs on both
    margins.
    """
    _require_phases(consts)
    if lam is None:
        lam = 1 - N**(-alpha)

    delta = math.log(N)/math.sqrt(N)
    s_star = lam*np.array(consts.v)
    theta = np.asarray(consts.theta)
    others = (theta.sum() - theta)*delta
    slack = N**(-alpha)

    return IntervalBounds(
            lower=s_star - theta*delta,
            upper=s_star + slack + others,
            printed_lower=s_star + theta*delta,
            printed_upper=s_star + slack - others)


@dataclass(frozen=True)
class WaitingBoundReport:
    bound: float
    n_condition_ok: bool
    theorem1_condition_ok: bool
    min_N: Optional[int]
    slowly_vanishing: bool
    zeta: float
    k: float


def waiting_bound_value(consts, N, alpha):
    """``1/sqrt(N) + (10 mu_max + 4)/(N**(0.5-alpha) log N)``"""
    return (1/math.sqrt(N)
            + (10*consts.mu_max + 4)/(N**(0.5-alpha)*math.log(N)))


def theorem2_bound(consts, N, alpha, max_log2_N=64):
    """Evaluate the waiting-probability bound at *N* and check its
    sufficient conditions. Also scans ``N = 2, 4, ..., 2**max_log2_N`` for
    the smallest *N* at which both conditions hold."""
    _require_phases(consts)
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5), got %g" % alpha)
    if N < 2:
        raise ValueError("N must be at least 2, got %g" % N)

    slowly_vanishing = alpha >= 0.45
    if slowly_vanishing:
        from warnings import warn
        warn("alpha=%g is close to 0.5: the second term of the waiting "
                "bound decays like 1/(N^%g log N)" % (alpha, 0.5-alpha))

    def both_hold(n):
        return (waiting_condition(consts, n, alpha).holds
                and theorem1_condition(consts, n, alpha).holds)

    min_N = None
    for log2_n in range(1, max_log2_N+1):
        if both_hold(2.**log2_n):
            min_N = 2**log2_n
            break

    return WaitingBoundReport(
            bound=waiting_bound_value(consts, N, alpha),
            n_condition_ok=waiting_condition(consts, N, alpha).holds,
            theorem1_condition_ok=theorem1_condition(consts, N, alpha).holds,
            min_N=min_N,
            slowly_vanishing=slowly_vanishing,
            zeta=consts.zeta, k=consts.k)

# }}}

# vim: foldmethod=marker
