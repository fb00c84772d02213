"""Exception types raised across the package.

The CLI maps usage-type errors to exit code 1 and numeric/verification failures to exit code 2.
"""


class DxhogError(Exception):
    pass


class UsageError(DxhogError):
    """Invalid command-line usage or configuration."""


class DimensionError(DxhogError, ValueError):
    """Qubit counts or array lengths disagree."""


class QubitIndexError(DxhogError, ValueError):
    """Gate target out of range or repeated."""


class NormalizationError(DxhogError, ValueError):
    """State is not normalised (or is zero) where a normalised state is required."""


class SizeGuardError(DxhogError, ValueError):
    """Requested object is too large for a dense representation."""


class BoundUnreachableError(DxhogError):
    """No communication budget within the search range reaches the requested XEB value."""


class ParamsFileError(DxhogError):
    """Ansatz parameter file missing, malformed, or inconsistent with the instance."""


class VerificationError(DxhogError):
    """Recomputed values disagree with logged values."""
