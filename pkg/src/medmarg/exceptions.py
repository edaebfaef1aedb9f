"""Exception hierarchy for medmarg."""


class MedMargError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MedMargError, ValueError):
    """Invalid user input (data, configuration, parameters)."""


class ParseError(InputError):
    """Malformed CSV or configuration file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidConfig(InputError):
    pass


class NumericalError(MedMargError, ArithmeticError):
    """A numerical procedure failed."""


class NonConvergence(NumericalError):
    pass


class Separation(NumericalError):
    """Logistic likelihood has no finite maximiser (complete or quasi-complete separation)."""

    def __init__(self, message=None):
        if message is None:
            message = (
                "IRLS diverged: the outcome appears separated by the design. "
                "Refit with firth=True (CLI: --firth)."
            )
        super().__init__(message)


class RankDeficient(NumericalError):
    pass


class DegenerateResidual(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class TooManyFailures(NumericalError):
    def __init__(self, message, n_failed=None, n_total=None):
        self.n_failed = n_failed
        self.n_total = n_total
        super().__init__(message)


class UnsupportedCombination(InputError):
    pass


class InteractionPresent(InputError):
    pass


class InvalidVarianceTerm(InputError):
    pass


class SignMismatch(InputError):
    pass
