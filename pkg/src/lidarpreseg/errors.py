"""Exception types shared across the package.

Every error raised by library code derives from PresegError so callers can
catch one base. Pipeline stages re-raise unexpected failures as
PipelineStageError with the stage name attached.
"""


class PresegError(Exception):
    """Base class for all package errors."""


class MalformedFileError(PresegError):
    """A file's framing is wrong (truncated record, bad header, wrong size)."""


class CorruptRecordError(PresegError):
    """A record inside a well-framed file holds invalid values."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class PoseParseError(PresegError):
    """A pose text line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class InvalidPoseError(PresegError):
    """A parsed pose is not a valid rigid transform."""


class ParameterError(PresegError):
    """An argument is outside its documented domain."""


class UnknownIdError(ParameterError):
    """A referenced entity (sequence, frame, segment, job) does not exist."""


class FitError(PresegError):
    """Model fitting could not proceed (degenerate or insufficient data)."""


class PromptInfeasibleError(PresegError):
    """No mask can satisfy the given positive/negative prompt set."""


class SegmenterProtocolError(PresegError):
    """The remote segmenter replied outside the wire protocol."""


class JournalConflictError(PresegError):
    """A mutation was submitted against a stale journal version."""

    def __init__(self, message: str, expected: int, actual: int):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class PipelineStageError(PresegError):
    """A pipeline stage failed; .stage names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
