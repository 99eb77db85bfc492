"""Exact stationary analysis of small systems."""

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
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.linalg as la
import scipy.sparse as sp
from pytools import ProcessLogger

from pyzerowait import (
        ConvergenceError, ReducibleChainError, StateSpaceTooLarge)
from pyzerowait.policy import DROP, Destination, a1_prob, dest_distribution
from pyzerowait.state import SystemState

logger = logging.getLogger(__name__)

MAX_STATES = 200000


# {{{ enumeration

def state_count(N, b, M):
    """Number of count configurations: multisets of size *N* over the
    ``b*M + 1`` per-server states."""
    kinds = b*M + 1
    return math.comb(N + kinds - 1, kinds - 1)


def enumerate_states(N, b, M, max_states=MAX_STATES):
    """Return every state with *N* servers exactly once, in lexicographic
    order of :meth:`~pyzerowait.state.SystemState.key`."""
    count = state_count(N, b, M)
    if count > max_states:
        raise StateSpaceTooLarge(
                "N=%d, b=%d, M=%d has %d states, more than the cap of %d"
                % (N, b, M, count, max_states))

    from pytools import generate_nonnegative_integer_tuples_summing_to_at_most

    keys = sorted(
            (N - sum(busy),) + tuple(busy)
            for busy in generate_nonnegative_integer_tuples_summing_to_at_most(
                N, b*M))
    assert len(keys) == count

    return [SystemState.from_key(N, b, M, key) for key in keys]

# }}}


# {{{ generator

def build_generator(states, dist, policy, lam):
    """Return the rate matrix on *states* as a :class:`scipy.sparse.csr_matrix`.

    Arrivals occur at rate ``lam*N``, split over destinations by the exact
    routing distribution. Drops are self-loops and are left out.
    """
    if not states:
        raise ValueError("empty state list")

    N = states[0].N
    index = {s.key(): i for i, s in enumerate(states)}
    rates = {}

    def add(i, target, rate):
        if rate <= 0:
            return
        j = index[target.key()]
        assert j != i
        rates[i, j] = rates.get((i, j), 0) + rate

    exit_prob = [1 - p_m for p_m in dist.p] + [1.]

    for i, state in enumerate(states):
        for dest, prob in dest_distribution(policy, state).items():
            if dest.kind == DROP:
                continue
            target = state.copy()
            dest.apply(target)
            add(i, target, lam*N*prob)

        for j in range(1, state.b+1):
            for m in range(1, state.M+1):
                count = state.counts[j-1][m-1]
                if not count:
                    continue
                rate = dist.mu[m-1]*count

                target = state.copy()
                target.apply_departure(j, m)
                add(i, target, rate*exit_prob[m-1])

                if m < state.M:
                    target = state.copy()
                    target.apply_phase_advance(j, m)
                    add(i, target, rate*dist.p[m-1])

    n = len(states)
    if rates:
        rows, cols = zip(*rates.keys())
        vals = list(rates.values())
    else:
        rows, cols, vals = (), (), ()

    off_diag = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    diag = -np.asarray(off_diag.sum(axis=1)).ravel()
    return (off_diag + sp.diags(diag)).tocsr()

# }}}


# {{{ stationary solve

def _closed_classes(gen):
    from scipy.sparse.csgraph import connected_components

    adjacency = gen.copy()
    adjacency.setdiag(0)
    adjacency.eliminate_zeros()

    n_comp, labels = connected_components(
            adjacency, directed=True, connection="strong")

    leaves = np.zeros(n_comp, dtype=bool)
    coo = adjacency.tocoo()
    leaves[labels[coo.row[labels[coo.row] != labels[coo.col]]]] = True

    return [c for c in range(n_comp) if not leaves[c]], labels


def stationary(gen, states=None):
    """Solve ``pi G = 0``, ``sum(pi) = 1`` by dense LU.

    States outside the unique closed communicating class (transient
    configurations that the policy never produces) get probability 0.

    :raises ReducibleChainError: if there is more than one closed class.
    """
    import scipy.linalg

    n = gen.shape[0]
    closed, labels = _closed_classes(gen)

    if len(closed) != 1:
        unreachable = np.flatnonzero(labels != closed[0])
        if states is not None:
            unreachable = [states[i] for i in unreachable]
        raise ReducibleChainError(
                "chain has %d closed classes, stationary distribution "
                "is not unique" % len(closed), unreachable=unreachable)

    support = np.flatnonzero(labels == closed[0])
    if len(support) < n:
        logger.debug("%d of %d states are transient", n-len(support), n)

    sub = gen[support][:, support].toarray()
    A = sub.T.copy()
    A[-1, :] = 1
    rhs = np.zeros(len(support))
    rhs[-1] = 1

    lu, piv = scipy.linalg.lu_factor(A)
    pi_sub = scipy.linalg.lu_solve((lu, piv), rhs)

    if pi_sub.min() < -1e-10:
        raise ConvergenceError("stationary solve produced negative mass %g"
                % pi_sub.min())
    pi_sub = np.clip(pi_sub, 0, None)
    pi_sub /= pi_sub.sum()

    pi = np.zeros(n)
    pi[support] = pi_sub
    return pi


def uniformization_rate(N, dist, lam):
    """``lam N + N max(mu)``, which bounds every exit rate of the chain."""
    return lam*N + N*max(dist.mu)


def power_iteration(gen, unif_rate=None, tol=1e-13, max_iterations=10**6,
        check_every=50):
    """Stationary distribution by power iteration on the uniformized
    kernel ``I + G/unif_rate``.

    :arg unif_rate: at least the largest exit rate. Defaults to 1.05 times
        the largest diagonal magnitude of *gen*, for generators that do not
        come from :func:`solve_chain`.
    """
    n = gen.shape[0]
    if unif_rate is None:
        unif_rate = float(np.max(-gen.diagonal()))*1.05
    if unif_rate <= 0:
        raise ValueError("uniformization rate must be positive")

    kernel_t = (sp.identity(n, format="csr") + gen/unif_rate).T.tocsr()

    pi = np.full(n, 1/n)
    gen_t = gen.T.tocsr()
    for it in range(max_iterations):
        pi = kernel_t @ pi
        if it % check_every == 0:
            pi /= pi.sum()
            if la.norm(gen_t @ pi, np.inf) <= tol*unif_rate:
                return pi

    raise ConvergenceError("power iteration did not converge in %d steps"
            % max_iterations)


def residual(gen, pi):
    """``||pi G||_inf``"""
    return float(la.norm(gen.T @ pi, np.inf))

# }}}


# {{{ chains

@dataclass
class ExactChain:
    states: list
    gen: sp.csr_matrix
    pi: np.ndarray
    N: int
    b: int
    dist: object
    policy: object
    lam: float

    @property
    def residual(self):
        return residual(self.gen, self.pi)

    def power_pi(self, **kwargs):
        """Stationary distribution by :func:`power_iteration`, uniformized
        at :func:`uniformization_rate`."""
        return power_iteration(self.gen,
                uniformization_rate(self.N, self.dist, self.lam), **kwargs)

    def index_of(self, state):
        for i, s in enumerate(self.states):
            if s == state:
                return i
        raise KeyError(state)


@dataclass(frozen=True)
class ExactMetrics:
    waiting_prob: float
    drop_prob: float
    avg_total_queue: float
    s1m: np.ndarray


def _cache_key(N, b, dist, policy, lam):
    from pyzerowait import VERSION_TEXT
    from pyzerowait.tools import checksum_of
    return checksum_of(VERSION_TEXT, N, b, dist.p, dist.mu, policy, lam)


def solve_chain(N, b, dist, policy, lam, cache_dir=None):
    """Enumerate, build and solve the chain, reusing a cached stationary
    distribution when one is available.

    :arg cache_dir: see :func:`pyzerowait.tools.get_cache_dir`.
    """
    from pyzerowait.tools import get_cache_dir

    if not 0 < lam:
        raise ValueError("arrival rate per server must be positive, got %g" % lam)

    states = enumerate_states(N, b, dist.M)
    with ProcessLogger(logger, "building generator (%d states)" % len(states)):
        gen = build_generator(states, dist, policy, lam)

    cache_dir = get_cache_dir(cache_dir)
    cache_file = None
    if cache_dir:
        cache_file = os.path.join(
                cache_dir, _cache_key(N, b, dist, policy, lam) + ".npz")

    pi = None
    if cache_file is not None and os.path.exists(cache_file):
        try:
            pi = load_pi(cache_file, states)
            logger.debug("stationary distribution from cache: %s", cache_file)
        except (OSError, KeyError, ValueError):
            logger.warning("ignoring unreadable cache entry %s", cache_file)

    if pi is None:
        with ProcessLogger(logger, "stationary solve (%d states)" % len(states)):
            pi = stationary(gen, states)
        if cache_file is not None:
            try:
                save_pi(cache_file, states, pi)
            except OSError as e:
                from warnings import warn
                warn("could not write cache entry %s: %s" % (cache_file, e))

    return ExactChain(states=states, gen=gen, pi=pi, N=N, b=b, dist=dist,
            policy=policy, lam=lam)


def exact_metrics(chain):
    """Waiting and drop probability (by PASTA, from the exact routing
    distribution), mean jobs per server and ``E[S_{1,m}]``."""
    waiting = 0.
    drop = 0.
    total_queue = 0.
    s1m = np.zeros(chain.dist.M)

    for state, prob in zip(chain.states, chain.pi):
        if prob == 0:
            continue
        waiting += prob*a1_prob(chain.policy, state)
        drop += prob*dest_distribution(chain.policy, state).get(
                Destination.DROP, 0.)
        total_queue += prob*state.sum_si()
        s1m += prob*state.s1()

    return ExactMetrics(waiting_prob=waiting, drop_prob=drop,
            avg_total_queue=total_queue, s1m=s1m)


def save_pi(filename, states, pi):
    keys = np.array([s.key() for s in states], dtype=np.int64)
    tmp = filename + ".tmp.npz"
    np.savez(tmp, keys=keys, pi=pi)
    os.replace(tmp, filename)


def load_pi(filename, states):
    with np.load(filename) as data:
        lookup = {tuple(k): p for k, p in zip(data["keys"].tolist(), data["pi"])}
    return np.array([lookup[s.key()] for s in states])


def dump_pi(chain, outf):
    """Write ``state,probability`` rows, with the state serialized as
    space-separated ``j:m:count`` triples plus ``idle:count``."""
    import csv

    writer = csv.writer(outf)
    writer.writerow(["state", "probability"])
    for state, prob in zip(chain.states, chain.pi):
        writer.writerow([state.encode(), repr(float(prob))])

# }}}


# {{{ drift tail bound

@dataclass
class TailBoundReport:
    hypotheses_hold: bool
    violations: list
    nu_max: float
    q_max: float
    alpha: Optional[float]
    beta: Optional[float]
    prob_outside: float
    j_values: np.ndarray
    tail_probs: np.ndarray
    bounds: np.ndarray

    @property
    def bound_holds(self):
        if not self.hypotheses_hold:
            return False
        return bool(np.all(self.tail_probs <= self.bounds + 1e-12))


def verify_tail_bound(chain, V, in_set, B, gamma, delta, j_max=None):
    """Check the drift tail bound
    ``P(V >= B + 2 nu_max j) <= alpha**j + beta P(S not in E)``
    against the exact stationary distribution of *chain*.

    Verifies the drift hypotheses first: ``drift V <= -gamma`` where
    ``V >= B`` inside *E*, and ``drift V <= delta`` where ``V >= B``
    outside *E*. A violation is reported by state and the bound is then
    not claimed.

    :arg V: function of a :class:`~pyzerowait.state.SystemState`.
    :arg in_set: predicate on states defining *E*.
    """
    if not B > 0:
        raise ValueError("B must be positive, got %g" % B)
    if not gamma > 0:
        raise ValueError("gamma must be positive, got %g" % gamma)
    if not delta >= 0:
        raise ValueError("delta must be nonnegative, got %g" % delta)

    values = np.array([V(s) for s in chain.states], dtype=np.float64)
    inside = np.array([bool(in_set(s)) for s in chain.states])

    gen = chain.gen.tocoo()
    off = gen.row != gen.col
    rows, cols, rates = gen.row[off], gen.col[off], gen.data[off]
    pos = rates > 0
    rows, cols, rates = rows[pos], cols[pos], rates[pos]

    jumps = values[cols] - values[rows]
    nu_max = float(np.max(np.abs(jumps), initial=0))

    up_rate = np.zeros(len(values))
    np.add.at(up_rate, rows[jumps > 0], rates[jumps > 0])
    q_max = float(up_rate.max(initial=0))

    drift = np.zeros(len(values))
    np.add.at(drift, rows, rates*jumps)

    violations = []
    for i in np.flatnonzero(values >= B):
        limit = -gamma if inside[i] else delta
        if drift[i] > limit + 1e-12:
            violations.append((chain.states[i], float(drift[i]), limit))

    for state, d, limit in violations:
        logger.info("drift hypothesis fails at %r: drift %g > %g",
                state, d, limit)

    alpha = q_max*nu_max/(q_max*nu_max + gamma)
    beta = delta/gamma + 1
    prob_outside = float(chain.pi[~inside].sum())

    if j_max is None:
        # enough steps to cross the whole range of V
        span = values.max() - values.min()
        j_max = max(1, math.ceil(span/nu_max - 1e-9)) if nu_max > 0 else 1

    j_values = np.arange(j_max+1)
    tail_probs = np.array([
        chain.pi[values >= B + 2*nu_max*j - 1e-12].sum() for j in j_values])
    bounds = alpha**j_values + beta*prob_outside

    return TailBoundReport(
            hypotheses_hold=not violations, violations=violations,
            nu_max=nu_max, q_max=q_max, alpha=alpha, beta=beta,
            prob_outside=prob_outside, j_values=j_values,
            tail_probs=tail_probs, bounds=bounds)

# }}}

# vim: foldmethod=marker
