"""Exception types raised across the package."""


class PrecodingError(Exception):
    """Base class for all errors raised by momentfp."""


class ConfigurationError(PrecodingError, ValueError):
    """Inconsistent dimensions, unsupported layout or invalid parameter."""


class InputError(PrecodingError, ValueError):
    """Non-finite or otherwise malformed numerical input."""


class NumericalError(PrecodingError, ArithmeticError):
    """A factorization or iteration failed beyond the allowed safeguards.

    ``iteration`` is filled in by the solvers when the failure happens inside
    their main loop.
    """

    def __init__(self, message, iteration=None, **diagnostics):
        super().__init__(message)
        self.iteration = iteration
        self.diagnostics = diagnostics

    def __str__(self):
        msg = super().__str__()
        if self.iteration is not None:
            msg = f"iteration {self.iteration}: {msg}"
        if self.diagnostics:
            extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
            msg = f"{msg} ({extra})"
        return msg
