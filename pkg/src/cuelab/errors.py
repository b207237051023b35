"""Exception hierarchy shared by every cuelab module."""


class CueLabError(Exception):
    """Base class for all library errors."""


class DataError(CueLabError):
    """Input data cannot support the requested computation."""


class BufferTooShort(DataError):
    pass


class DegenerateWindow(DataError):
    pass


class ZeroVariance(DataError):
    pass


class NoBeatsDetected(DataError):
    pass


class TooFewBeats(DataError):
    pass


class SpanTooShort(DataError):
    pass


class NoBreathDetected(DataError):
    pass


class ImuSaturated(DataError):
    pass


class MissingBaseline(DataError):
    pass


class InsufficientLabels(DataError):
    pass


class DegenerateFeatures(DataError):
    pass


class BadFeatureVector(DataError):
    pass


class EmptyEvaluation(DataError):
    pass


class NonMonotonicTime(DataError):
    pass


class TooFewSessions(DataError):
    pass


class NoModel(DataError):
    pass


class NoProbes(DataError):
    pass


class SessionTooShort(DataError):
    pass


class LayerViolation(CueLabError):
    """A slow-path stream tried to reach the Layer-1 (fast EEG) path."""

    def __init__(self, stream: str, detail: str = ""):
        self.stream = stream
        msg = f"stream {stream!r} is not allowed in the Layer-1 path"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class ConfigError(CueLabError):
    pass


class InvalidConfig(ConfigError):
    pass


class StimError(CueLabError):
    pass


class AmplitudeLocked(StimError):
    pass


class OutOfRange(StimError):
    pass


class StimDisabled(StimError):
    pass


class AmplitudeNotSet(StimError):
    pass


class IncompleteDescriptor(CueLabError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
