"""Runners behind the command-line subcommands. Each takes a validated
config dict (see :mod:`pyzerowait.config`), writes CSV tables into an
output directory and returns the list of files written."""

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

import csv
import logging
import os

import numpy as np

from pyzerowait import ConfigError
from pyzerowait.config import MAX_GRID_RUNS, make_policy

logger = logging.getLogger(__name__)


# {{{ output

def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def write_csv(filename, header, rows):
    """Write *rows* under *header*. Floats are written with :func:`repr`,
    so equal values always give equal bytes."""
    with open(filename, "w", newline="") as outf:
        writer = csv.writer(outf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(x) for x in row])
    logger.info("wrote %s", filename)
    return filename


def _out_path(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)

# }}}


# {{{ grids

def check_grid_size(n_runs, what):
    if n_runs > MAX_GRID_RUNS:
        raise ConfigError("%s expands to %d runs, more than the limit of %d"
                % (what, n_runs, MAX_GRID_RUNS))
    if n_runs > 0.8*MAX_GRID_RUNS:
        from warnings import warn
        warn("%s expands to %d runs, close to the limit of %d"
                % (what, n_runs, MAX_GRID_RUNS))


def _sim_config(config, N, b, dist, policy, **kwargs):
    from pyzerowait.engine import SimConfig

    if config.get("lam") is None and config.get("alpha") is None:
        raise ConfigError("lam: either lam or alpha must be given",
                field="lam")
    try:
        return SimConfig(N=N, b=b, dist=dist, policy=policy,
                lam=config.get("lam"), alpha=config.get("alpha"),
                beta=config.get("beta", 1.),
                warmup_fraction=config["warmup_fraction"], **kwargs)
    except ValueError as e:
        raise ConfigError("N=%d: %s" % (N, e), field="lam")


def simulate_grid(config):
    """Expand *config* into a list of :class:`~pyzerowait.engine.SimConfig`,
    distribution-major, then *N*, then policy."""
    if config.get("t_end") is not None:
        horizon = {"t_end": config["t_end"]}
    else:
        horizon = {"events": config["events"]}

    result = []
    for dist in config["dist"]:
        for N in config["N"]:
            for kind in config["policy"]:
                result.append(_sim_config(config, N, config["b"], dist,
                    make_policy(config, kind),
                    sample_interval=config.get("sample_interval"),
                    init=config["init"], **horizon))

    check_grid_size(len(result)*config["trials"], "simulation grid")
    return result


def _replicate(points, trials, seed_base, workers):
    from pyzerowait.engine import run_grid
    return run_grid(points, trials, seed_base=seed_base, workers=workers)

# }}}


# {{{ simulate

def run_simulate(config, out_dir, seed_base=0, workers=1):
    points = simulate_grid(config)
    results = _replicate(points, config["trials"], seed_base, workers)

    max_M = max(point.M for point in points)
    header = (["N", "policy", "M", "lambda", "waiting_prob", "drop_prob",
        "avg_total_queue"]
        + ["s1m_avg_%d" % m for m in range(1, max_M+1)]
        + ["events", "seed"])

    def rows():
        for point, trials in zip(points, results):
            for metrics in trials:
                s1m = metrics.s1m_avg.tolist()
                yield ([point.N, str(point.policy), point.M, metrics.lam,
                    metrics.waiting_prob, metrics.drop_prob,
                    metrics.avg_total_queue]
                    + s1m + [None]*(max_M - len(s1m))
                    + [metrics.events, metrics.seed])

    written = [write_csv(_out_path(out_dir, "simulate.csv"), header, rows())]

    if config.get("sample_interval") is not None:
        for j, (point, trials) in enumerate(zip(points, results)):
            for i, metrics in enumerate(trials):
                written.append(_write_trajectory(
                    _out_path(out_dir, "trajectory-%d-%d.csv" % (j, i)),
                    metrics, point.dist))

    return written


def _write_trajectory(filename, metrics, dist):
    M = metrics.M
    s_star = metrics.lam*np.array(dist.v)
    header = (["t"] + ["S_1_%d" % m for m in range(1, M+1)] + ["sum_Si"]
            + ["s_star_1_%d" % m for m in range(1, M+1)] + ["state"])
    rows = (row.tolist() + s_star.tolist() + [snap]
            for row, snap in zip(metrics.trajectory, metrics.snapshots))
    return write_csv(filename, header, rows)

# }}}


# {{{ issp

def run_issp(config, out_dir):
    from pyzerowait.coxian import derived_constants
    from pyzerowait.issp import iterate_ideal, iterate_rigorous, theorem2_bound

    dist = config["dist"]
    consts = derived_constants(dist, config.get("b"))
    if config["mode"] == "ideal":
        trace = iterate_ideal(consts, dist, config["lam"],
                n_max=config["n_max"], ordering=config["ordering"])
    else:
        trace = iterate_rigorous(consts, dist, config["N"], config["alpha"],
                n_stop=config.get("n_stop"), ordering=config["ordering"])

    n = trace.n_iterations
    print("%s iteration, %s ordering: %d steps, lam=%g"
            % (trace.mode, trace.ordering, n, trace.lam))
    print("  L_1m(%d) = %s" % (n, _fmt_vec(trace.L[n])))
    print("  U_m(%d)  = %s" % (n, _fmt_vec(trace.U[n, 1:])))
    if trace.mode == "ideal":
        print("  converged: %s" % trace.converged)
    else:
        print("  N-condition holds: %s" % trace.conditions_ok)
        if config.get("b") is not None and 0 < config["alpha"] < 0.5:
            report = theorem2_bound(consts, config["N"], config["alpha"])
            print("  waiting bound: %.6g (conditions hold: %s, smallest "
                    "N with both conditions: %s)"
                    % (report.bound,
                        report.n_condition_ok and report.theorem1_condition_ok,
                        report.min_N))

    return [write_csv(_out_path(out_dir, "issp.csv"), trace.csv_header(),
        trace.csv_rows())]


def _fmt_vec(x):
    return "(%s)" % ", ".join("%.12g" % xi for xi in x)

# }}}


# {{{ meanfield

def run_meanfield(config, out_dir):
    from pyzerowait.meanfield import (FluidState, general_rhs, integrate,
            jiq_fluid_routing, jsq_fluid_routing, rhs_jsq_truncated)

    dist = config["dist"]
    lam = config["lam"]
    b = config["b"]
    s_star = lam*np.array(dist.v)

    rhs = {
            "jsq_truncated": rhs_jsq_truncated,
            "jsq": general_rhs(jsq_fluid_routing),
            "jiq": general_rhs(jiq_fluid_routing),
            }[config["rhs"]]

    if config["initial"] == "zero":
        initial = FluidState.zeros(b, dist.M)
    else:
        initial = FluidState.from_s1(s_star, b)

    traj = integrate(rhs, initial, dist, lam, config["t_end"],
            h=config.get("h"), sample_every=config["sample_every"])

    final = traj.final.s[0]
    print("s_1m(%g) = %s" % (config["t_end"], _fmt_vec(final)))
    print("max |s_1m - lam v_m| = %.3e" % np.max(np.abs(final - s_star)))

    return [write_csv(_out_path(out_dir, "meanfield.csv"),
        traj.csv_header(), traj.csv_rows())]

# }}}


# {{{ exact

def run_exact(config, out_dir):
    from pyzerowait.exact import dump_pi, exact_metrics, solve_chain

    dist = config["dist"]
    N = config["N"]
    b = config["b"]
    M = dist.M
    cache_dir = None if config["cache"] else False

    header = (["N", "b", "M", "policy", "lambda", "waiting_prob",
        "drop_prob", "avg_total_queue"]
        + ["s1m_%d" % m for m in range(1, M+1)] + ["residual"])
    rows = []
    written = []
    for kind in config["policy"]:
        policy = make_policy(config, kind)
        chain = solve_chain(N, b, dist, policy, config["lam"],
                cache_dir=cache_dir)
        metrics = exact_metrics(chain)
        rows.append([N, b, M, str(policy), config["lam"],
            metrics.waiting_prob, metrics.drop_prob, metrics.avg_total_queue]
            + metrics.s1m.tolist() + [chain.residual])

        if config["dump_pi"]:
            filename = _out_path(out_dir, "pi-%s.csv" % policy)
            with open(filename, "w", newline="") as outf:
                dump_pi(chain, outf)
            written.append(filename)

    written.insert(0, write_csv(_out_path(out_dir, "exact.csv"), header, rows))
    return written

# }}}


# {{{ constants

def constants_rows(dist, b=None):
    """Name/value pairs describing *dist* and its derived constants."""
    from pyzerowait.coxian import derived_constants

    consts = derived_constants(dist, b)
    rows = [
            ("M", consts.M),
            ("mu", _fmt_vec(dist.mu)),
            ("p", _fmt_vec(dist.p)),
            ("v", _fmt_vec(consts.v)),
            ("scv", "%.12g" % dist.scv()),
            ("w", _fmt_vec(consts.w)),
            ("mu_max", "%.12g" % consts.mu_max),
            ]
    if consts.M > 1:
        rows += [
                ("a", _fmt_vec(consts.a)),
                ("b", _fmt_vec(consts.b)),
                ("c", _fmt_vec(consts.c)),
                ("xi", "%.12g" % consts.xi),
                ("C_M", "%.12g" % consts.C_M),
                ("C_M_strict", "%.12g" % consts.C_M_strict),
                ("C", "%.12g" % consts.C),
                ("theta", _fmt_vec(consts.theta)),
                ("identity residual", "%.3g"
                    % consts.product_identity_residual(dist)),
                ]
    if b is not None:
        rows += [
                ("zeta", "%.12g" % consts.zeta),
                ("k", "%.12g" % consts.k),
                ]
    return consts, rows


def run_constants(config, out_dir=None):
    from pyzerowait.issp import theorem1_condition, theorem2_bound
    from pyzerowait.tools import format_table

    consts, rows = constants_rows(config["dist"], config.get("b"))
    N = config.get("N")
    alpha = config["alpha"]
    if N is not None and consts.M > 1:
        cond = theorem1_condition(consts, N, alpha)
        rows.append(("concentration condition at N=%g" % N, str(cond.holds)))
        if config.get("b") is not None and alpha < 0.5:
            report = theorem2_bound(consts, N, alpha)
            rows += [
                    ("waiting bound at N=%g" % N, "%.6g" % report.bound),
                    ("waiting condition at N=%g" % N,
                        str(report.n_condition_ok)),
                    ("smallest N with both conditions", str(report.min_N)),
                    ]

    print(format_table(["name", "value"], rows))

    if out_dir is None:
        return []
    return [write_csv(_out_path(out_dir, "constants.csv"),
        ["name", "value"], rows)]

# }}}


# {{{ recipes

def _policy_columns(summaries):
    result = []
    for summary in summaries:
        result += [summary.mean["waiting_prob"], summary.std["waiting_prob"],
                summary.mean["avg_total_queue"],
                summary.std["avg_total_queue"]]
    return result


def _policy_header(kinds):
    result = []
    for kind in kinds:
        result += ["waiting_prob_%s" % kind, "waiting_prob_std_%s" % kind,
                "avg_total_queue_%s" % kind,
                "avg_total_queue_std_%s" % kind]
    return result


def _recipe_points(config, specs):
    """*specs* is a list of ``(N, dist)``. Returns one
    :class:`~pyzerowait.engine.SimConfig` per spec and policy, spec-major."""
    points = []
    for N, dist in specs:
        for kind in config["policy"]:
            points.append(_sim_config(config, N, config["b"], dist,
                make_policy(config, kind), events=config["events"]))
    return points


def recipe_verse_n(config, out_dir, seed_base=0, workers=1):
    """Waiting probability and mean jobs per server against *N*."""
    from pyzerowait.engine import combine_replicas

    kinds = config["policy"]
    specs = [(N, config["dist"]) for N in config["Ns"]]
    points = _recipe_points(config, specs)
    check_grid_size(len(points)*config["trials"], "verse-N recipe")
    results = _replicate(points, config["trials"], seed_base, workers)

    rows = []
    for i, (N, dist) in enumerate(specs):
        chunk = results[i*len(kinds):(i+1)*len(kinds)]
        summaries = [combine_replicas(trials) for trials in chunk]
        rows.append([N, points[i*len(kinds)].arrival_rate(), config["trials"]]
                + _policy_columns(summaries))

    return [write_csv(_out_path(out_dir, "verse-N.csv"),
        ["N", "lambda", "trials"] + _policy_header(kinds), rows)]


def recipe_verse_m(config, out_dir, seed_base=0, workers=1):
    """Waiting probability against the phase count at fixed *N*, for
    identical-rate Coxian distributions."""
    from pyzerowait.coxian import CoxianDist
    from pyzerowait.engine import combine_replicas

    kinds = config["policy"]
    dists = [CoxianDist.identical_rate(M, config["p"]) for M in config["Ms"]]
    specs = [(config["N"], dist) for dist in dists]
    points = _recipe_points(config, specs)
    check_grid_size(len(points)*config["trials"], "verse-M recipe")
    results = _replicate(points, config["trials"], seed_base, workers)

    rows = []
    for i, dist in enumerate(dists):
        chunk = results[i*len(kinds):(i+1)*len(kinds)]
        summaries = [combine_replicas(trials) for trials in chunk]
        rows.append([dist.M, dist.scv(), config["trials"]]
                + _policy_columns(summaries))

    return [write_csv(_out_path(out_dir, "verse-M.csv"),
        ["M", "scv", "trials"] + _policy_header(kinds), rows)]


def recipe_trajectory(config, out_dir, seed_base=0, workers=1):
    """Sampled trajectories of ``S_{1,m}`` started at the zero-waiting
    equilibrium, one file per policy and trial, with the equilibrium
    values alongside."""
    from dataclasses import replace

    specs = [(config["N"], config["dist"])]
    points = [replace(point, sample_interval=config["sample_interval"],
                init="equilibrium", warmup_fraction=0.)
            for point in _recipe_points(config, specs)]
    check_grid_size(len(points)*config["trials"], "trajectory recipe")
    results = _replicate(points, config["trials"], seed_base, workers)

    written = []
    for point, trials in zip(points, results):
        for i, metrics in enumerate(trials):
            written.append(_write_trajectory(
                _out_path(out_dir, "trajectory-%s-%d.csv" % (point.policy, i)),
                metrics, point.dist))
    return written


RECIPE_RUNNERS = {
        "verse-N": recipe_verse_n,
        "verse-M": recipe_verse_m,
        "trajectory": recipe_trajectory,
        }

# }}}

# vim: foldmethod=marker
