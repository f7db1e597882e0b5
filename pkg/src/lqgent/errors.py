"""Exception hierarchy shared across the package."""


class LqgentError(Exception):
    """Base class for all package-specific errors."""


class InputError(LqgentError):
    """Invalid argument or parameter value."""


class ConfigError(LqgentError):
    """Malformed or inconsistent run configuration."""


class StabilityError(LqgentError):
    """The mechanical system or a simulated trajectory is unstable."""


class ControllabilityError(LqgentError):
    """The feedback configuration cannot actuate every mode."""


class SolverError(LqgentError):
    """A matrix-equation solver could not produce a stabilizing solution."""


class ConvergenceError(SolverError):
    """A solver finished without reaching the required residual."""


class InternalError(LqgentError):
    """An internal consistency check failed; indicates a bug."""


class SweepError(LqgentError):
    """A parameter sweep failed on every grid cell."""
