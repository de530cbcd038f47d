"""Exception hierarchy shared across the package."""


class AnomgraphError(Exception):
    """Base class for all package errors."""


class DataError(AnomgraphError):
    """Malformed or inconsistent input data."""


class ConfigError(AnomgraphError):
    """Invalid configuration or parameter value."""


class InternalInvariantError(AnomgraphError):
    """A pipeline invariant was violated at runtime."""


# feature files

class BadMagic(DataError):
    pass


class VersionMismatch(DataError):
    pass


class DimensionError(DataError):
    pass


class NonFiniteValue(DataError):
    pass


# pooling / scoring

class InvalidReceptiveField(ConfigError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyRow(InternalInvariantError):
    pass


class InvalidEta(ConfigError):
    pass


# burnout statistics

class ZeroDistance(DataError):
    pass


class ZeroReference(DataError):
    pass


# graph / communities

class SingletonCommunity(AnomgraphError):
    pass


class NoEdges(AnomgraphError):
    pass


# filtering

class BaseTooSmall(AnomgraphError):
    pass


class EmptyBase(InternalInvariantError):
    pass


# simulation lab

class DegenerateTail(DataError):
    pass


class OutOfRangeSample(DataError):
    pass


# metrics

class SingleClass(DataError):
    pass


class NoPositives(DataError):
    pass


class NoAnomalousRegion(DataError):
    pass


# synthetic generator

class ConfigInfeasible(ConfigError):
    pass
