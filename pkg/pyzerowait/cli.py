"""Command-line entry point, ``pyzerowait <subcommand> [options]``."""

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

import argparse
import logging
import sys

from pyzerowait import ConfigError, DistributionError, Error

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

SUBCOMMAND_HELP = {
        "simulate": "simulate a grid of systems and write per-trial metrics",
        "issp": "run the bound iteration for the steady state",
        "meanfield": "integrate the fluid model",
        "exact": "solve small systems exactly",
        "constants": "print the constants derived from a distribution",
        "recipe": "run a canned study (verse-N, verse-M, trajectory)",
        }


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def make_parser():
    from pyzerowait import VERSION_TEXT
    from pyzerowait.config import RECIPES, SCHEMAS

    parser = argparse.ArgumentParser(prog="pyzerowait",
            description="Zero-waiting load balancing: simulation, "
            "bounds, fluid limits and exact solutions.")
    parser.add_argument("--version", action="version",
            version="%(prog)s " + VERSION_TEXT)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
            help="JSON config file; keys are listed below")
    common.add_argument("--out", metavar="DIR", default=".",
            help="output directory (default: current directory)")
    common.add_argument("--seed", metavar="U64", type=_seed, default=0,
            help="seed base for all trials (default: 0)")
    common.add_argument("--workers", metavar="K", type=int, default=None,
            help="worker processes; PYZEROWAIT_WORKERS applies if unset")
    common.add_argument("-v", "--verbose", action="count", default=0,
            help="log progress (-vv for debug output)")

    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    subparsers.required = True

    for name, schema in SCHEMAS.items():
        sub = subparsers.add_parser(name, parents=[common],
                help=SUBCOMMAND_HELP[name],
                description=SUBCOMMAND_HELP[name],
                formatter_class=argparse.RawDescriptionHelpFormatter,
                epilog="config keys:\n" + schema().get_help())
        if name == "recipe":
            sub.add_argument("recipe", choices=RECIPES)

    return parser


def run_experiment(args):
    """Dispatch the parsed command line *args*. Returns the list of files
    written."""
    from pyzerowait import experiment
    from pyzerowait.config import SCHEMAS
    from pyzerowait.tools import get_worker_count

    config = SCHEMAS[args.subcommand]().read(args.config)
    workers = get_worker_count(args.workers)

    if args.subcommand == "simulate":
        return experiment.run_simulate(config, args.out,
                seed_base=args.seed, workers=workers)
    elif args.subcommand == "issp":
        return experiment.run_issp(config, args.out)
    elif args.subcommand == "meanfield":
        return experiment.run_meanfield(config, args.out)
    elif args.subcommand == "exact":
        return experiment.run_exact(config, args.out)
    elif args.subcommand == "constants":
        return experiment.run_constants(config, args.out)
    elif args.subcommand == "recipe":
        return experiment.RECIPE_RUNNERS[args.recipe](config, args.out,
                seed_base=args.seed, workers=workers)
    else:
        raise ValueError("unknown subcommand '%s'" % args.subcommand)


def _setup_logging(verbosity):
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level,
            format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    try:
        written = run_experiment(args)
    except (ConfigError, DistributionError) as e:
        print("pyzerowait: config error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except (Error, ArithmeticError, RuntimeError, ValueError, OSError) as e:
        logger.debug("failure details", exc_info=True)
        print("pyzerowait: %s: %s" % (type(e).__name__, e), file=sys.stderr)
        return EXIT_RUNTIME

    for filename in written:
        logger.info("output: %s", filename)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
