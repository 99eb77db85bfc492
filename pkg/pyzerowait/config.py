"""Experiment configuration: JSON files validated against per-command
option schemas."""

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

import json
import math

from pyzerowait import ConfigError, DistributionError

MAX_GRID_RUNS = 10000

# Coxian-4 with p = 0.5 and unit mean, used when no distribution is given
DEFAULT_DIST = {"M": 4, "p": [0.5, 0.5, 0.5, 1.0], "mu": [1, 1, 1, 1],
        "normalize": True}


# {{{ options

class Option:
    def __init__(self, name, default=None, help=None, required=False):
        self.name = name
        self.default = default
        self.help = help
        self.required = required

    def get_help(self):
        result = self.help or ""
        if self.required:
            result += " (required)"
        elif self.default is not None:
            result += " (default: %s)" % self.value_to_str(self.default)
        return result

    def value_to_str(self, value):
        return json.dumps(value)

    def convert(self, value, source):
        return value

    def fail(self, msg, source):
        raise ConfigError("%s: %s" % (self.name, msg),
                field=self.name, source=source)


class IntOption(Option):
    def __init__(self, name, default=None, help=None, required=False,
            minimum=None):
        Option.__init__(self, name, default, help, required)
        self.minimum = minimum

    def convert(self, value, source):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or int(value) != value:
            self.fail("expected an integer, got %r" % (value,), source)
        value = int(value)
        if self.minimum is not None and value < self.minimum:
            self.fail("must be at least %d, got %d" % (self.minimum, value),
                    source)
        return value


class FloatOption(Option):
    def __init__(self, name, default=None, help=None, required=False,
            check=None, check_desc=None):
        Option.__init__(self, name, default, help, required)
        self.check = check
        self.check_desc = check_desc

    def convert(self, value, source):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("expected a number, got %r" % (value,), source)
        value = float(value)
        if not math.isfinite(value):
            self.fail("must be finite", source)
        if self.check is not None and not self.check(value):
            self.fail("must be %s, got %g" % (self.check_desc, value), source)
        return value


class Switch(Option):
    def convert(self, value, source):
        if not isinstance(value, bool):
            self.fail("expected true or false, got %r" % (value,), source)
        return value


class ChoiceOption(Option):
    def __init__(self, name, choices, default=None, help=None):
        Option.__init__(self, name, default, help)
        self.choices = choices

    def get_help(self):
        return "%s, one of %s" % (Option.get_help(self),
                "|".join(self.choices))

    def convert(self, value, source):
        if value not in self.choices:
            self.fail("expected one of %s, got %r"
                    % (", ".join(self.choices), value), source)
        return value


class ListOption(Option):
    """Accepts a scalar or a list. Each element goes through *element*,
    and the value is always a list."""

    def __init__(self, name, element, default=None, help=None,
            required=False):
        Option.__init__(self, name, default, help, required)
        self.element = element

    def convert(self, value, source):
        if not isinstance(value, list):
            value = [value]
        if not value:
            self.fail("must not be empty", source)
        return [self.element.convert(x, source) for x in value]


class DistOption(Option):
    """A Coxian distribution block ``{"M", "p", "mu", "normalize"}``, or a
    list of them if *multiple*."""

    keys = ("M", "p", "mu", "normalize")

    def __init__(self, name="dist", default=DEFAULT_DIST, help=None,
            multiple=False):
        Option.__init__(self, name, default,
                help or "Coxian service distribution, keys M, p "
                "(M-1 entries, or M with a trailing 1.0), mu, normalize")
        self.multiple = multiple

    def convert(self, value, source):
        if self.multiple:
            if not isinstance(value, list):
                value = [value]
            return [self._convert_one(v, source) for v in value]
        return self._convert_one(value, source)

    def _convert_one(self, value, source):
        from pyzerowait.coxian import make_dist

        if not isinstance(value, dict):
            self.fail("expected an object with keys %s"
                    % ", ".join(self.keys), source)

        for key in value:
            if key not in self.keys:
                raise ConfigError("invalid config key in %s: %s.%s"
                        % (source, self.name, key),
                        field="%s.%s" % (self.name, key), source=source)

        for key in ("M", "mu"):
            if key not in value:
                raise ConfigError("%s.%s: missing" % (self.name, key),
                        field="%s.%s" % (self.name, key), source=source)

        try:
            return make_dist(value["M"], value.get("p", []), value["mu"],
                    normalize=value.get("normalize", True))
        except (DistributionError, TypeError, ValueError) as e:
            field = getattr(e, "field", None)
            field = "%s.%s" % (self.name, field) if field else self.name
            raise ConfigError("%s: %s" % (field, e), field=field,
                    source=source)

# }}}


# {{{ schema

class ConfigSchema:
    def __init__(self, options):
        self.optdict = dict((opt.name, opt) for opt in options)
        self.options = options

    def get_default_config(self):
        return dict((opt.name, opt.default) for opt in self.options)

    def get_help(self):
        width = max(len(opt.name) for opt in self.options)
        return "\n".join(
                "  %s  %s" % (opt.name.ljust(width), opt.get_help())
                for opt in self.options)

    def validate(self, raw, source="<config>"):
        """Return a complete config dict from the mapping *raw*, with
        defaults filled in. Unknown keys are errors."""
        if not isinstance(raw, dict):
            raise ConfigError("%s: top level must be a JSON object" % source,
                    source=source)

        result = self.get_default_config()
        for key, value in raw.items():
            if key not in self.optdict:
                raise ConfigError("invalid config key in %s: %s"
                        % (source, key), field=key, source=source)
            result[key] = self.optdict[key].convert(value, source)

        for opt in self.options:
            if opt.required and result[opt.name] is None:
                raise ConfigError("%s: missing in %s" % (opt.name, source),
                        field=opt.name, source=source)
            if (opt.name not in raw and result[opt.name] is not None
                    and not isinstance(opt, Switch)):
                result[opt.name] = opt.convert(result[opt.name], "<default>")

        return result

    def read(self, filename):
        if filename is None:
            return self.validate({}, "<defaults>")

        try:
            with open(filename) as inf:
                raw = json.load(inf)
        except json.JSONDecodeError as e:
            raise ConfigError("%s:%d: invalid JSON: %s"
                    % (filename, e.lineno, e.msg), source=filename)
        except OSError as e:
            raise ConfigError("cannot read config file %s: %s"
                    % (filename, e), source=filename)

        return self.validate(raw, filename)

# }}}


# {{{ subcommand schemas

def _positive(x):
    return x > 0


def _unit_open(x):
    return 0 < x < 1


def _policy_options(default=("jsq",)):
    from pyzerowait.policy import POLICY_KINDS
    return [
            ListOption("policy", ChoiceOption("policy", POLICY_KINDS),
                default=list(default), help="routing policy or list of policies"),
            IntOption("d", minimum=1,
                help="sample size of the power-of-d policy"),
            FloatOption("d_alpha", check=_positive, check_desc="positive",
                help="power-of-d: d = ceil(N^d_alpha log^2 N) if d is unset; "
                "defaults to alpha"),
            FloatOption("d_log_base", default=math.e, check=lambda x: x > 1,
                check_desc="greater than 1",
                help="logarithm base in the power-of-d formula"),
            ]


def _load_options(alpha=None):
    return [
            FloatOption("lam", check=_unit_open, check_desc="in (0, 1)",
                help="arrival rate per server; overrides alpha/beta"),
            FloatOption("alpha", default=alpha, check=_positive,
                check_desc="positive",
                help="load exponent: lam = 1 - beta N^-alpha"),
            FloatOption("beta", default=1., check=_positive,
                check_desc="positive", help="load prefactor"),
            ]


def simulate_schema():
    return ConfigSchema([
        DistOption(multiple=True),
        ListOption("N", IntOption("N", minimum=1), default=[100],
            help="server count or list of server counts"),
        IntOption("b", default=10, minimum=1,
            help="jobs per server, in service plus buffered"),
        ] + _policy_options() + _load_options() + [
        IntOption("events", default=100000, minimum=1,
            help="events per trial, unless t_end is given"),
        FloatOption("t_end", check=_positive, check_desc="positive",
            help="virtual time per trial, overrides events"),
        FloatOption("warmup_fraction", default=0.2,
            check=lambda x: 0 <= x < 1, check_desc="in [0, 1)",
            help="leading fraction of each trial discarded"),
        IntOption("trials", default=10, minimum=1,
            help="independent trials per grid point"),
        FloatOption("sample_interval", check=_positive,
            check_desc="positive",
            help="virtual time between trajectory samples; enables "
            "trajectory output"),
        ChoiceOption("init", ("equilibrium", "empty"), default="equilibrium",
            help="initial state"),
        ])


def issp_schema():
    return ConfigSchema([
        DistOption(),
        ChoiceOption("mode", ("ideal", "rigorous"), default="ideal",
            help="bound iteration mode"),
        FloatOption("lam", default=1., check=lambda x: 0 < x <= 1,
            check_desc="in (0, 1]", help="load for the ideal mode"),
        FloatOption("N", default=1e6, check=lambda x: x >= 2,
            check_desc="at least 2", help="server count for the rigorous mode"),
        FloatOption("alpha", default=0.3, check=_unit_open,
            check_desc="in (0, 1)", help="load exponent for the rigorous mode"),
        IntOption("b", minimum=1,
            help="jobs per server; enables the waiting-probability report"),
        IntOption("n_max", default=200, minimum=1,
            help="iteration cap for the ideal mode"),
        IntOption("n_stop", minimum=1,
            help="iteration count for the rigorous mode, default "
            "ceil(log N/(2 log(1/xi)))"),
        ChoiceOption("ordering", ("collapsed", "literal"),
            default="collapsed", help="update order"),
        ])


def meanfield_schema():
    return ConfigSchema([
        DistOption(),
        FloatOption("lam", default=0.99, check=_unit_open,
            check_desc="in (0, 1)", help="arrival rate per server"),
        FloatOption("t_end", default=50., check=_positive,
            check_desc="positive", help="integration horizon"),
        FloatOption("h", check=_positive, check_desc="positive",
            help="step size, default 0.01/max(mu)"),
        IntOption("b", default=1, minimum=1,
            help="rows of the fluid state"),
        ChoiceOption("rhs", ("jsq_truncated", "jsq", "jiq"),
            default="jsq_truncated", help="fluid dynamics"),
        IntOption("sample_every", default=100, minimum=1,
            help="steps between recorded states"),
        ChoiceOption("initial", ("zero", "equilibrium"), default="zero",
            help="initial fluid state"),
        ])


def exact_schema():
    return ConfigSchema([
        DistOption(),
        IntOption("N", default=3, minimum=1, help="server count"),
        IntOption("b", default=2, minimum=1,
            help="jobs per server, in service plus buffered"),
        ] + _policy_options() + [
        FloatOption("lam", default=0.7, check=_positive,
            check_desc="positive", help="arrival rate per server"),
        Switch("dump_pi", default=False,
            help="write the full stationary distribution"),
        Switch("cache", default=True,
            help="reuse cached stationary distributions"),
        ])


def constants_schema():
    return ConfigSchema([
        DistOption(),
        IntOption("b", minimum=1,
            help="jobs per server; needed for zeta and k"),
        FloatOption("N", check=lambda x: x >= 2, check_desc="at least 2",
            help="server count for the condition checks"),
        FloatOption("alpha", default=0.3, check=_unit_open,
            check_desc="in (0, 1)", help="load exponent"),
        ])


RECIPES = ("verse-N", "verse-M", "trajectory")


def recipe_schema():
    return ConfigSchema([
        DistOption(help="Coxian distribution for verse-N and trajectory"),
        ListOption("Ns", IntOption("Ns", minimum=1), default=[100, 400, 1600],
            help="server counts for verse-N"),
        IntOption("N", default=1000, minimum=1,
            help="server count for verse-M and trajectory"),
        ListOption("Ms", IntOption("Ms", minimum=1), default=[1, 2, 4, 8],
            help="phase counts for verse-M"),
        FloatOption("p", default=0.5, check=lambda x: 0 <= x <= 1,
            check_desc="in [0, 1]",
            help="continuation probability for verse-M"),
        IntOption("b", default=10, minimum=1,
            help="jobs per server, in service plus buffered"),
        ] + _policy_options(("jsq", "jiq")) + _load_options(0.5) + [
        IntOption("events", default=200000, minimum=1,
            help="events per trial"),
        IntOption("trials", default=5, minimum=1,
            help="independent trials per grid point"),
        FloatOption("warmup_fraction", default=0.2,
            check=lambda x: 0 <= x < 1, check_desc="in [0, 1)",
            help="leading fraction of each trial discarded"),
        FloatOption("sample_interval", default=0.1, check=_positive,
            check_desc="positive",
            help="virtual time between samples for trajectory"),
        ])


SCHEMAS = {
        "simulate": simulate_schema,
        "issp": issp_schema,
        "meanfield": meanfield_schema,
        "exact": exact_schema,
        "constants": constants_schema,
        "recipe": recipe_schema,
        }

# }}}


def make_policy(config, kind=None):
    from pyzerowait.policy import PolicySpec

    if kind is None:
        kind = config["policy"][0]
    if kind != "pod":
        return PolicySpec(kind)

    d_alpha = config.get("d_alpha")
    if config.get("d") is None and d_alpha is None:
        d_alpha = config.get("alpha")
        if d_alpha is None:
            raise ConfigError("d: power-of-d policy needs d, d_alpha or alpha",
                    field="d")

    return PolicySpec("pod", d=config.get("d"), d_alpha=d_alpha,
            log_base=config.get("d_log_base", math.e))

# vim: foldmethod=marker
