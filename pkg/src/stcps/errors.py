"""Exception types shared across the package."""


class StcpsError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(StcpsError):
    """Operands have incompatible shapes."""


class UncontrollablePair(StcpsError):
    """(A, B) is not controllable, so no gain can place the poles."""


class UnsupportedShape(StcpsError):
    """Gain synthesis is restricted to single-input systems."""


class NonFiniteState(StcpsError):
    """Integration produced NaN or Inf entries."""


class NonPositiveDistance(StcpsError):
    """Channel geometry requires strictly positive distances."""


class ZeroRate(StcpsError):
    """A link with zero rate cannot carry payload."""


class DelayBudgetExceeded(StcpsError):
    """Realized end-to-end delay exceeded the plant's tolerance."""


class Infeasible(StcpsError):
    """The allocation cannot satisfy its constraints.

    ``family`` names the violated constraint group (C3..C11) so callers can
    report which requirement failed.
    """

    def __init__(self, family: str, detail: str = ""):
        self.family = family
        self.detail = detail
        super().__init__(f"{family}: {detail}" if detail else family)


class TooLarge(StcpsError):
    """Instance exceeds the exhaustive solver's guard rails."""


class SchemaError(StcpsError):
    """Configuration violates the schema.  Carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnitError(StcpsError):
    """A configured quantity could not be converted to SI units."""


class StabilityViolation(StcpsError):
    """A simulated plant state left the finite domain."""


class DeadlineViolation(StcpsError):
    """Delay tolerance unmet after the deviation-bound escalation ran out."""
