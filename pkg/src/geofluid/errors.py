"""Exception hierarchy.  Every numerical failure names the operation that raised it."""


class GeofluidError(Exception):
    """Base class for all library errors."""


class NumericalFailure(GeofluidError):
    """A computation could not produce a valid result."""


class ConfigError(GeofluidError):
    """Invalid run configuration."""


# chart
class RankDeficient(NumericalFailure):
    pass


class DomainError(GeofluidError):
    pass


class UnknownChart(ConfigError):
    pass


class BadParams(ConfigError):
    pass


class StencilOutOfDomain(DomainError):
    pass


# geometry
class NotPositiveDefinite(NumericalFailure):
    pass


class ComplexEigenvalues(NumericalFailure):
    pass


# fluid2d
class CaseExcluded(NumericalFailure):
    pass


class MixedSigns(NumericalFailure):
    pass


class NegativeF(NumericalFailure):
    pass


class PathExitsPositivityRegion(NumericalFailure):
    pass


class NonPositiveSeed(NumericalFailure):
    pass


# renorm
class ScheduleViolation(ConfigError):
    pass


class QuadratureUnderResolved(NumericalFailure):
    pass


class RankNotOne(NumericalFailure):
    pass


class MixedDiagonalSigns(NumericalFailure):
    pass


# multid
class NegativeDiscriminant(NumericalFailure):
    pass


class ConsistencyFailed(NumericalFailure):
    pass
