"""Exception types shared across the package."""


class FormctlError(Exception):
    """Base class for every error raised by formctl."""


# --- graph construction ---
class DuplicateEdge(FormctlError):
    pass


class SelfLoop(FormctlError):
    pass


class Disconnected(FormctlError):
    pass


class NoLeaderAccess(FormctlError):
    pass


class IndexOutOfRange(FormctlError):
    pass


# --- dynamics / numerics ---
class InvalidDimension(FormctlError):
    pass


class NonFiniteState(FormctlError):
    pass


class NonFiniteDerivative(FormctlError):
    pass


class SingularGain(FormctlError):
    pass


class SingularSystem(FormctlError):
    pass


# --- formation / control contracts ---
class SpecGraphMismatch(FormctlError):
    pass


class DimensionMismatch(FormctlError):
    pass


class NonPositiveGain(FormctlError):
    pass


class LocalityViolation(FormctlError):
    """An agent's control computation read state outside its permitted set."""


# --- datasets / models / io ---
class IoFailure(FormctlError):
    pass


class FormatVersionMismatch(FormctlError):
    pass


class CorruptRecord(FormctlError):
    pass


class EmptyDataset(FormctlError):
    pass


class DivergedLoss(FormctlError):
    pass


class UnknownNeighborId(FormctlError):
    pass


class EmptyLog(FormctlError):
    pass


class ConfigError(FormctlError):
    pass
