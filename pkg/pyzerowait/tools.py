"""Miscellaneous helper functionality."""

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
import os

import numpy as np

logger = logging.getLogger(__name__)


# {{{ seeding

def derive_seed(seed_base, run_index, trial_index):
    """Return the integer seed of trial *trial_index* of grid point
    *run_index*.

    The seed is the first 64-bit word of
    ``numpy.random.SeedSequence(entropy=seed_base,
    spawn_key=(run_index, trial_index))``, so it is a stable hash of the
    triple and independent of the order in which trials are executed.
    """
    if seed_base < 0:
        raise ValueError("seed base must be nonnegative, got %d" % seed_base)

    ss = np.random.SeedSequence(
            entropy=int(seed_base), spawn_key=(int(run_index), int(trial_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])

# }}}


# {{{ buffered random stream

class UniformStream:
    """Draws uniforms and unit exponentials from a
    :class:`numpy.random.Generator` in blocks, handing them out one at a
    time as Python floats.

    .. attribute:: generator
    """

    def __init__(self, seed_or_generator=None, block_size=8192):
        if isinstance(seed_or_generator, np.random.Generator):
            self.generator = seed_or_generator
        else:
            self.generator = np.random.default_rng(seed_or_generator)

        self.block_size = block_size

        self._uniforms = []
        self._upos = 0
        self._exponentials = []
        self._epos = 0

    def random(self):
        if self._upos >= len(self._uniforms):
            self._uniforms = self.generator.random(self.block_size).tolist()
            self._upos = 0

        result = self._uniforms[self._upos]
        self._upos += 1
        return result

    def exponential(self, rate):
        if self._epos >= len(self._exponentials):
            self._exponentials = self.generator.standard_exponential(
                    self.block_size).tolist()
            self._epos = 0

        result = self._exponentials[self._epos]
        self._epos += 1
        return result / rate

    def choice_weighted(self, weights, total=None):
        """Return an index into *weights* with probability proportional
        to its entry. Zero-weight entries are never returned."""
        if total is None:
            total = sum(weights)

        target = self.random() * total
        last_positive = None
        for i, w in enumerate(weights):
            if w <= 0:
                continue
            last_positive = i
            if target < w:
                return i
            target -= w

        if last_positive is None:
            raise ValueError("no positive weight to choose from")

        # roundoff put target past the final bucket
        return last_positive

# }}}


# {{{ combinatorics

def comb_ratio(top, n, d):
    """Return ``C(top, d) / C(n, d)``, the probability that a uniform
    *d*-subset of *n* items lies within a fixed set of *top* items.
    """
    if not 0 <= top <= n:
        raise ValueError("need 0 <= top <= n, got top=%d, n=%d" % (top, n))
    if d < 0 or d > n:
        raise ValueError("subset size out of range: %d" % d)

    if d > top:
        return 0.
    if d == 0 or top == n:
        return 1.

    if n <= 1000:
        from fractions import Fraction
        from math import comb
        return float(Fraction(comb(top, d), comb(n, d)))

    # C(top,d)/C(n,d) = Beta(n-d+1, d) / Beta(top-d+1, d)
    from scipy.special import betaln
    return float(np.exp(betaln(n-d+1, d) - betaln(top-d+1, d)))

# }}}


# {{{ parallel execution

def get_worker_count(requested=None):
    """Resolve the worker count. An explicit request wins, then
    ``PYZEROWAIT_WORKERS``, then 1. Invalid values raise
    :exc:`~pyzerowait.ConfigError`."""
    from pyzerowait import ConfigError

    source = None
    if requested is not None:
        result = int(requested)
    elif "PYZEROWAIT_WORKERS" in os.environ:
        source = "PYZEROWAIT_WORKERS"
        try:
            result = int(os.environ[source])
        except ValueError:
            raise ConfigError("PYZEROWAIT_WORKERS must be an integer, got '%s'"
                    % os.environ[source], field="workers", source=source)
    else:
        result = 1

    if result < 1:
        raise ConfigError("worker count must be positive, got %d" % result,
                field="workers", source=source)

    return result


def parallel_map(func, items, workers=1):
    """Like :func:`map`, but over a process pool when *workers* > 1.
    Results come back in the order of *items*."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(func, items))

# }}}


# {{{ on-disk cache

def get_cache_dir(cache_dir=None):
    """Return the directory used for cached results, or *False* if
    caching is disabled.

    *cache_dir* may be *False* to disable caching, a path, or *None*, in
    which case ``PYZEROWAIT_CACHE_DIR`` and ``PYZEROWAIT_DISABLE_CACHE``
    are consulted before falling back to the per-user cache directory.
    """
    if cache_dir is False:
        return False

    if "PYZEROWAIT_DISABLE_CACHE" in os.environ:
        return False

    if cache_dir is None and "PYZEROWAIT_CACHE_DIR" in os.environ:
        cache_dir = os.environ["PYZEROWAIT_CACHE_DIR"]

    if cache_dir is None:
        import appdirs

        cache_dir = os.path.join(
            appdirs.user_cache_dir("pyzerowait", "pyzerowait"),
            "exact-cache-v1")

    try:
        os.makedirs(cache_dir, exist_ok=True)
    except OSError as e:
        from warnings import warn
        warn("could not create cache directory '%s' (%s), caching disabled"
                % (cache_dir, e))
        return False

    return cache_dir


def checksum_of(*parts):
    from hashlib import md5

    checksum = md5()
    for part in parts:
        checksum.update(repr(part).encode("utf-8"))
        checksum.update(b"\0")
    return checksum.hexdigest()

# }}}


# {{{ console output

def format_table(header, rows):
    from pytools import Table

    tbl = Table()
    tbl.add_row(tuple(header))
    for row in rows:
        tbl.add_row(tuple(_format_cell(x) for x in row))
    return str(tbl)


def _format_cell(x):
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return "%.6g" % x
    if isinstance(x, (tuple, list, np.ndarray)):
        return "(%s)" % ", ".join(_format_cell(
            float(y) if isinstance(y, np.floating) else y) for y in x)
    return str(x)

# }}}

# vim: foldmethod=marker
