"""Aggregate system state: server counts by queue length and service phase."""

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

import numpy as np

from pyzerowait import StateError


class SystemState:
    """Counts of servers by number of jobs *j* (1 through *b*) and phase
    *m* (1 through *M*) of the job in service, plus the idle count.

    Public methods take 1-based *j* and *m*. The counts are kept as plain
    integers. :attr:`level_count` (index 0 is the idle pool) and
    :attr:`busy_by_phase` are maintained alongside them.

    .. attribute:: N
    .. attribute:: b
    .. attribute:: M
    .. attribute:: n_idle
    """

    def __init__(self, N, b, M):
        if N < 1:
            raise ValueError("server count must be positive, got %d" % N)
        if b < 1:
            raise ValueError("server capacity b must be positive, got %d" % b)
        if M < 1:
            raise ValueError("phase count must be positive, got %d" % M)

        self.N = N
        self.b = b
        self.M = M

        self.counts = [[0]*M for _ in range(b)]
        self.n_idle = N
        self.level_count = [N] + [0]*b
        self.busy_by_phase = [0]*M

    # {{{ construction

    @classmethod
    def empty(cls, N, b, M):
        return cls(N, b, M)

    @classmethod
    def from_counts(cls, N, b, M, counts):
        """*counts* is either an array-like of shape ``(b, M)`` holding
        ``n[j][m]`` at ``[j-1, m-1]``, or a mapping ``(j, m) -> count``.
        """
        result = cls(N, b, M)

        if isinstance(counts, dict):
            dense = [[0]*M for _ in range(b)]
            for (j, m), count in counts.items():
                if not (1 <= j <= b and 1 <= m <= M):
                    raise StateError("cell (%d, %d) outside 1..%d x 1..%d"
                            % (j, m, b, M))
                dense[j-1][m-1] = count
        else:
            dense = np.asarray(counts)
            if dense.shape != (b, M):
                raise StateError("counts must have shape (%d, %d), got %s"
                        % (b, M, dense.shape))
            dense = dense.tolist()

        total = 0
        for j in range(b):
            for m in range(M):
                count = dense[j][m]
                if int(count) != count:
                    raise StateError("count at (%d, %d) is not an integer: %r"
                            % (j+1, m+1, count))
                count = int(count)
                if count < 0:
                    raise StateError("negative count %d at (%d, %d)"
                            % (count, j+1, m+1))
                result.counts[j][m] = count
                total += count

        if total > N:
            raise StateError("counts sum to %d, more than N=%d servers"
                    % (total, N))

        result.n_idle = N - total
        result._rebuild_aggregates()
        return result

    @classmethod
    def from_key(cls, N, b, M, key):
        """Inverse of :meth:`key`."""
        flat = key[1:]
        return cls.from_counts(N, b, M,
                [list(flat[j*M:(j+1)*M]) for j in range(b)])

    @classmethod
    def from_s_view(cls, N, s):
        """Build a state from an array of fractions ``s[i-1, m-1]``."""
        s = np.asarray(s, dtype=np.float64)
        b, M = s.shape
        scaled = s*N
        rounded = np.rint(scaled)
        if np.max(np.abs(scaled - rounded), initial=0) > 1e-9:
            raise StateError("N*s is not integral")

        padded = np.vstack([rounded, np.zeros((1, M))])
        counts = padded[:-1] - padded[1:]
        return cls.from_counts(N, b, M, counts.astype(np.int64))

    @classmethod
    def at_equilibrium(cls, N, b, dist, lam):
        """Round the zero-waiting equilibrium ``n[1][m] = round(N lam v_m)``
        to a valid state. All other servers are idle."""
        from pyzerowait.coxian import zero_waiting_equilibrium

        s_star = zero_waiting_equilibrium(dist, lam)
        level1 = [int(round(N*x)) for x in s_star]

        # rounding up in several phases can overshoot N
        while sum(level1) > N:
            level1[int(np.argmax(level1))] -= 1

        counts = [[0]*dist.M for _ in range(b)]
        counts[0] = level1
        return cls.from_counts(N, b, dist.M, counts)

    def copy(self):
        result = type(self).__new__(type(self))
        result.N = self.N
        result.b = self.b
        result.M = self.M
        result.counts = [row[:] for row in self.counts]
        result.n_idle = self.n_idle
        result.level_count = self.level_count[:]
        result.busy_by_phase = self.busy_by_phase[:]
        return result

    def _rebuild_aggregates(self):
        self.level_count = [self.n_idle] + [sum(row) for row in self.counts]
        self.busy_by_phase = [
                sum(self.counts[j][m] for j in range(self.b))
                for m in range(self.M)]

    # }}}

    # {{{ views

    def n(self, j, m):
        return self.counts[j-1][m-1]

    @property
    def busy(self):
        return self.N - self.n_idle

    def total_jobs(self):
        return sum((j+1)*self.level_count[j+1] for j in range(self.b))

    def sum_si(self):
        """``sum_i S_i``, the number of jobs per server."""
        return self.total_jobs()/self.N

    def q_view(self):
        """Fractions ``Q_{j,m}`` of servers with exactly *j* jobs in phase
        *m*, as an array of shape ``(b, M)``."""
        return np.array(self.counts, dtype=np.float64)/self.N

    def s_view(self, exact=False):
        """Fractions ``S_{i,m}`` of servers with at least *i* jobs whose
        job in service is in phase *m*, shape ``(b, M)``.

        With *exact*, the entries are :class:`fractions.Fraction`.
        """
        tail = np.cumsum(np.array(self.counts, dtype=np.int64)[::-1], axis=0)[::-1]
        if exact:
            from fractions import Fraction
            result = np.empty(tail.shape, dtype=object)
            for idx, val in np.ndenumerate(tail):
                result[idx] = Fraction(int(val), self.N)
            return result

        return tail/self.N

    def s1(self):
        """``S_{1,m}`` for all phases."""
        return np.array(self.busy_by_phase, dtype=np.float64)/self.N

    def key(self):
        """Hashable encoding ``(n_idle, n[1][1], ..., n[b][M])``."""
        return (self.n_idle,) + tuple(c for row in self.counts for c in row)

    def snapshot(self):
        """Flat ``(j, m, count)`` triples of the nonzero cells, and the idle
        count."""
        return ([(j+1, m+1, c)
                for j, row in enumerate(self.counts)
                for m, c in enumerate(row) if c],
                self.n_idle)

    def encode(self):
        """The snapshot as one token string, ``idle:count`` followed by
        ``j:m:count`` triples."""
        cells, idle = self.snapshot()
        return " ".join(["idle:%d" % idle] + ["%d:%d:%d" % c for c in cells])

    def __eq__(self, other):
        return (isinstance(other, SystemState)
                and (self.N, self.b, self.M) == (other.N, other.b, other.M)
                and self.key() == other.key())

    def __hash__(self):
        return hash((self.N, self.b, self.M, self.key()))

    def __repr__(self):
        cells, idle = self.snapshot()
        return "SystemState(N=%d, idle=%d, %s)" % (
                self.N, idle,
                " ".join("n[%d][%d]=%d" % cell for cell in cells) or "-")

    def __str__(self):
        return "idle=%d %s" % (self.n_idle, list(map(list, self.counts)))

    # }}}

    # {{{ transitions

    def apply_arrival(self, j, m):
        """A job joins a server that had *j-1* jobs, leaving it with *j*.
        For *j* = 1 this takes an idle server and *m* must be 1.
        """
        if not 1 <= j <= self.b:
            raise StateError("arrival to level %d outside 1..%d; "
                    "overflowing arrivals are dropped by the policy"
                    % (j, self.b))
        if not 1 <= m <= self.M:
            raise StateError("phase %d outside 1..%d" % (m, self.M))

        if j == 1:
            if m != 1:
                raise StateError("a job arriving at an idle server "
                        "starts in phase 1, got phase %d" % m)
            if self.n_idle < 1:
                raise StateError("no idle server to receive an arrival")
            self.n_idle -= 1
            self.level_count[0] -= 1
            self.busy_by_phase[0] += 1
        else:
            src = self.counts[j-2]
            if src[m-1] < 1:
                raise StateError("no server with %d jobs in phase %d"
                        % (j-1, m))
            src[m-1] -= 1
            self.level_count[j-1] -= 1

        self.counts[j-1][m-1] += 1
        self.level_count[j] += 1

    def apply_departure(self, j, m):
        """A server with *j* jobs finishes its job in phase *m*. The next
        job, if any, starts in phase 1."""
        row = self.counts[j-1] if 1 <= j <= self.b else None
        if row is None or not 1 <= m <= self.M or row[m-1] < 1:
            raise StateError("no server with %d jobs in phase %d" % (j, m))

        row[m-1] -= 1
        self.level_count[j] -= 1
        self.busy_by_phase[m-1] -= 1

        if j == 1:
            self.n_idle += 1
            self.level_count[0] += 1
        else:
            self.counts[j-2][0] += 1
            self.level_count[j-1] += 1
            self.busy_by_phase[0] += 1

    def apply_phase_advance(self, j, m):
        if not 1 <= m < self.M:
            raise StateError("phase %d cannot advance (M=%d)" % (m, self.M))
        row = self.counts[j-1] if 1 <= j <= self.b else None
        if row is None or row[m-1] < 1:
            raise StateError("no server with %d jobs in phase %d" % (j, m))

        row[m-1] -= 1
        row[m] += 1
        self.busy_by_phase[m-1] -= 1
        self.busy_by_phase[m] += 1

    # }}}

    def check_invariants(self):
        """Verify the count identities and membership of the fraction view
        in the admissible set. Raises :exc:`AssertionError` on failure."""
        assert self.n_idle >= 0
        assert all(c >= 0 for row in self.counts for c in row)
        assert self.n_idle + sum(map(sum, self.counts)) == self.N

        expected = SystemState.from_counts(self.N, self.b, self.M, self.counts)
        assert expected.level_count == self.level_count
        assert expected.busy_by_phase == self.busy_by_phase

        s = self.s_view()
        assert np.all(s[:-1] >= s[1:] - 1e-15)
        assert s[0].sum() <= 1 + 1e-12

# vim: foldmethod=marker
