"""Exception types raised across the package."""


class QRenewalError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(QRenewalError):
    pass


class KrausNotTracePreserving(QRenewalError):
    pass


class NotTracePreservingGenerator(QRenewalError):
    pass


class IllConditionedEigenbasis(QRenewalError):
    """Eigenvector matrix too ill conditioned for spectral evaluation."""


class NegativeTime(QRenewalError):
    pass


class PoleAtU(QRenewalError):
    """Laplace-domain evaluation requested at (or too close to) a pole."""


class PoleAtShiftedU(PoleAtU):
    """A shifted argument u - eigenvalue hit a pole during matrix-function evaluation."""


class ZeroSurvival(QRenewalError):
    pass


class RenewalPole(QRenewalError):
    """Sprinkling distribution evaluated where 1 - fhat(u) vanishes (u = 0)."""


class QuadratureFailure(QRenewalError):
    pass


class TruncationTooLoose(QRenewalError):
    """Series truncation bound exceeds the requested tolerance."""


class SingularResolvent(QRenewalError):
    pass


class ContourNonconvergence(QRenewalError):
    """Talbot inversions at successive node counts disagree beyond tolerance."""


class ParseError(QRenewalError):
    pass


class ValidationError(QRenewalError):
    pass
