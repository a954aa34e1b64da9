"""Exception types raised across the package."""


class SmileLabError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"


class DomainError(SmileLabError, ValueError):
    code = "domain_error"


class NoArbitrageError(DomainError):
    code = "no_arbitrage"


class ConvergenceError(SmileLabError, ArithmeticError):
    code = "numerical_error"


class DegenerateModelError(SmileLabError, ValueError):
    code = "degenerate_model"


class VolOfVolTooLargeError(DomainError):
    code = "nu_too_large"


class InsufficientDataError(SmileLabError, ValueError):
    code = "insufficient_data"


class DataFormatError(SmileLabError, ValueError):
    code = "data_format"
