"""Exception hierarchy shared across the package."""


class KairanbanError(Exception):
    """Base class for every error raised by this package."""


# probability algebra
class AllZero(KairanbanError, ValueError):
    pass


class NegativeEntry(KairanbanError, ValueError):
    pass


class PlaceholderInput(KairanbanError, ValueError):
    pass


# backends
class BackendError(KairanbanError):
    pass


class TransportError(BackendError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class AuthError(BackendError):
    pass


class RateLimited(TransportError):
    pass


class ScriptExhausted(BackendError):
    pass


# prompting / parsing
class ParseError(KairanbanError, ValueError):
    pass


class ParseFailure(ParseError):
    pass


class LabelMismatch(ParseError):
    pass


class NonNumeric(ParseError):
    pass


# pipeline preconditions
class MissingPredecessor(KairanbanError, ValueError):
    pass


class MissingSteps(KairanbanError, ValueError):
    pass


class MissingAnalysis(KairanbanError, ValueError):
    pass


class EmptyInstance(KairanbanError, ValueError):
    pass


# datasets
class MalformedRow(KairanbanError, ValueError):
    def __init__(self, message: str, row_number: int):
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


class UnknownLabel(KairanbanError, ValueError):
    pass


class SampleTooLarge(KairanbanError, ValueError):
    pass


# metrics
class EmptyRecords(KairanbanError, ValueError):
    pass


class LengthMismatch(KairanbanError, ValueError):
    pass


class ConfigError(KairanbanError, ValueError):
    pass
