"""Exception hierarchy shared by all entcov modules."""


class EntcovError(ValueError):
    """Base class for every error raised by entcov."""


class DomainError(EntcovError):
    """A scalar function was evaluated outside its domain."""


class NotPositiveDefinite(DomainError):
    pass


class ConjugateDomainError(DomainError):
    """An eigenvalue lies outside the domain of the conjugate link."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NotInDomain(DomainError):
    """A Bregman divergence argument lies outside dom(F)."""

    def __init__(self, message, argument=None):
        super().__init__(message)
        self.argument = argument


class DimensionMismatch(EntcovError):
    pass


class EmptyBasis(EntcovError):
    pass


class NotLinear(EntcovError):
    pass


class NotJordan(EntcovError):
    pass


class ProjectionNotPD(EntcovError):
    pass


class InfeasibleStart(EntcovError):
    pass


class NoInterior(EntcovError):
    pass


class NoMinimizer(EntcovError):
    """A one-dimensional Bregman line search has no interior minimizer."""


class NotEssentiallySmooth(EntcovError):
    pass


class NoPDExtension(EntcovError):
    pass


class SingularInformation(EntcovError):
    pass


class UnsupportedLink(EntcovError):
    pass


class ConvergenceError(EntcovError):
    """An inner solve did not reach a certified optimum.

    The offending :class:`~entcov.solve.FitResult` is kept on ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
