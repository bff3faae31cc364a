"""Exception hierarchy shared by all analysis engines."""


class LdosimError(Exception):
    """Base class for all toolkit errors."""


class CircuitError(LdosimError):
    """Structural problem while building a circuit (unknown node, bad terminal)."""


class NetlistParseError(LdosimError):
    """Malformed netlist / parameter / config text."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(LdosimError):
    """Invalid or incomplete run configuration."""


class ConvergenceError(LdosimError):
    """Newton iteration failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularMatrixError(LdosimError):
    """Singular (or numerically singular) system matrix.

    ``pivot_name`` identifies the unknown (node voltage or branch current)
    at the offending pivot; ``freq_hz`` is set for AC solves.
    """

    def __init__(self, message, pivot_name=None, freq_hz=None):
        super().__init__(message)
        self.pivot_name = pivot_name
        self.freq_hz = freq_hz


class TransientStallError(LdosimError):
    """Time step fell below the hard floor without Newton convergence."""

    def __init__(self, message, time_s=None, node=None):
        super().__init__(message)
        self.time_s = time_s
        self.node = node


class LoadRangeError(ValueError, LdosimError):
    """Requested load current is outside the active mode's range."""
