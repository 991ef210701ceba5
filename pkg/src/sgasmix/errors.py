"""Exception hierarchy shared by the numerical modules and the CLI."""


class SgasError(Exception):
    """Base class for every error raised by sgasmix."""


class DomainError(SgasError, ValueError):
    """An argument lies outside the domain of the operation."""


class EvaluationError(SgasError, ArithmeticError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class NotPositiveDefiniteError(SgasError, ValueError):
    pass


class SamplerStuckError(SgasError, RuntimeError):
    """The rejection sampler exhausted its retry budget."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = rows


class DegenerateGroupError(SgasError, RuntimeError):
    """A hard-assignment group is empty or too small to update."""

    def __init__(self, message, group=None):
        super().__init__(message)
        self.group = group


class DegenerateCovarianceError(DegenerateGroupError):
    pass


class RootBracketError(SgasError, ArithmeticError):
    pass
