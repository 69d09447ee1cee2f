"""Exception hierarchy shared by all gwrsim modules."""


class GwrError(Exception):
    """Base class for every error raised by gwrsim."""


# capability / registry
class DuplicateNode(GwrError):
    pass


class InvalidCounts(GwrError, ValueError):
    pass


class InvalidProbability(GwrError, ValueError):
    pass


class ZeroSlots(GwrError, ValueError):
    pass


class UnknownNode(GwrError, KeyError):
    pass


class NoPath(GwrError):
    pass


class SelfPair(GwrError, ValueError):
    pass


class MismatchedPair(GwrError, ValueError):
    pass


class DisjointWindows(GwrError, ValueError):
    pass


# demand lifecycle
class IllegalTransition(GwrError):
    pass


class AlreadyExpired(GwrError, ValueError):
    pass


class NotAdmitted(GwrError):
    pass


class PastExpiry(GwrError, ValueError):
    pass


# admission
class UnsetRate(GwrError, ValueError):
    pass


class DemandExpired(GwrError):
    pass


class DemandComplete(GwrError):
    pass


class ZeroSuccessProbability(GwrError, ValueError):
    pass


# metrics
class EmptyInput(GwrError, ValueError):
    pass


class InsufficientPoints(GwrError, ValueError):
    pass


# configuration
class ConfigError(GwrError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(ConfigError):
    def __init__(self, field, reason, line=None):
        self.field = field
        self.reason = reason
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {reason}")


ConfigInvalid = InvariantViolation
