"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`DsikitError`,
so callers (notably the CLI) can separate contract violations from bugs.
"""


class DsikitError(Exception):
    """Base class for all package errors."""


# input model
class DimensionMismatch(DsikitError, ValueError):
    pass


class AsymmetricCovariance(DsikitError, ValueError):
    pass


class NotPositiveSemidefinite(DsikitError, ValueError):
    pass


class UnknownModel(DsikitError, KeyError):
    pass


class ParamLengthMismatch(DsikitError, ValueError):
    pass


# dependency models
class NotADependentBlock(DsikitError, ValueError):
    pass


class PermutationInvalid(DsikitError, ValueError):
    pass


class LengthMismatch(DsikitError, ValueError):
    pass


class InconsistentPrefix(DsikitError, ValueError):
    pass


# combinatorics
class BlockTooSmall(DsikitError, ValueError):
    pass


class OutOfRange(DsikitError, ValueError):
    pass


class IndexNotInGround(DsikitError, ValueError):
    pass


class BlockTooLarge(DsikitError, ValueError):
    pass


class DimensionTooLargeForExact(DsikitError, ValueError):
    pass


# estimation
class DegenerateVariance(DsikitError, ArithmeticError):
    pass


class NotIndependentInput(DsikitError, ValueError):
    pass


# bounds
class NonpositiveVariance(DsikitError, ValueError):
    pass


class GradientUnavailable(DsikitError, ValueError):
    pass


class BoundUnavailable(DsikitError, ValueError):
    pass


# cli
class ConfigError(DsikitError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
