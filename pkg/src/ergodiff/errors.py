"""Exception hierarchy shared by all modules."""


class Error(Exception):
    """Base class for package errors."""


class ParameterError(Error, ValueError):
    """An argument lies outside its admissible range."""


class InvalidDriftError(Error, ValueError):
    """The drift returned a non-finite value."""


class QuadratureError(Error, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class DivergenceError(Error, RuntimeError):
    """A simulated path crossed the overflow guard.

    Attributes
    ----------
    step : int
        Index of the first offending sample.
    value : float
        The offending value.
    """

    def __init__(self, step, value, guard):
        self.step = int(step)
        self.value = float(value)
        self.guard = float(guard)
        super().__init__(
            f"path diverged at step {self.step}: |x|={abs(self.value):.3e} > {self.guard:.1e}"
        )


class EvaluationError(Error, ArithmeticError):
    """A path functional produced a non-finite value."""


class WindowError(Error, ValueError):
    """Evaluation window is unusable or a path left it.

    Attributes
    ----------
    max_abs : float or None
        Largest absolute path value, when the error comes from a path.
    """

    def __init__(self, message, max_abs=None):
        self.max_abs = max_abs
        super().__init__(message)


class ConfigurationError(Error, ValueError):
    """A configuration file or bound parameter set is invalid."""


class ExperimentError(Error, RuntimeError):
    """An experiment could not produce a valid report."""
