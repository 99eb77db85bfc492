"""Simulation and analysis of zero-waiting load balancing with Coxian
service times."""

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

VERSION = (2022, 1)
VERSION_STATUS = ""
VERSION_TEXT = ".".join(str(x) for x in VERSION) + VERSION_STATUS


# {{{ exceptions

class Error(Exception):
    pass


class ConfigError(Error, ValueError):
    def __init__(self, msg, field=None, source=None):
        ValueError.__init__(self, msg)
        self.field = field
        self.source = source

    def __str__(self):
        result = ValueError.__str__(self)
        if self.field is not None and self.field not in result:
            result = "%s: %s" % (self.field, result)
        return result


class DistributionError(Error, ValueError):
    """Raised for an invalid Coxian parametrization. *field* names the
    offending parameter (``M``, ``p`` or ``mu``)."""

    def __init__(self, msg, field=None):
        ValueError.__init__(self, msg)
        self.field = field


class StateError(Error, ValueError):
    pass


class StateSpaceTooLarge(Error):
    pass


class ReducibleChainError(Error):
    def __init__(self, msg, unreachable=()):
        Error.__init__(self, msg)
        self.unreachable = list(unreachable)

    def __str__(self):
        result = Error.__str__(self)
        if self.unreachable:
            shown = ", ".join(str(s) for s in self.unreachable[:10])
            if len(self.unreachable) > 10:
                shown += ", ..."
            result += "\n[unreachable states: %s]" % shown
        return result


class RateBookkeepingError(Error, RuntimeError):
    pass


class IntegrationError(Error, RuntimeError):
    def __init__(self, msg, t=None, last_state=None):
        RuntimeError.__init__(self, msg)
        self.t = t
        self.last_state = last_state


class ConvergenceError(Error, RuntimeError):
    pass


class NotApplicableError(Error, ValueError):
    pass

# }}}

# vim: foldmethod=marker
