"""Error taxonomy shared by every module.

Each failure mode named in a contract maps onto one of these classes so
callers (and the CLI) can translate them into stable exit codes and
machine-readable messages.
"""


class PromptRecError(Exception):
    """Base class for all library errors."""

    code = "error"


class InvalidArgumentError(PromptRecError, ValueError):
    """A value passed to an operation violates its precondition."""

    code = "invalid_argument"


class ConfigurationError(PromptRecError, ValueError):
    """A configuration is internally inconsistent or infeasible."""

    code = "configuration"


class StateError(PromptRecError, RuntimeError):
    """An operation was invoked on state that is not ready for it."""

    code = "state"


class ParseError(PromptRecError, ValueError):
    """An input file could not be parsed; carries the offending line."""

    code = "parse"

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class CheckpointFormatError(PromptRecError, ValueError):
    """A checkpoint file is malformed or truncated."""

    code = "format"


class CheckpointVersionError(PromptRecError, ValueError):
    """A checkpoint declares a version this build does not understand."""

    code = "version"


class NotFoundError(PromptRecError, LookupError):
    """A referenced entity (user, item, file) does not exist."""

    code = "not_found"
