"""Exception hierarchy shared across the package."""


class PemError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PemError, ValueError):
    pass


class IntegrationError(PemError, RuntimeError):
    """A projected trajectory produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ExprError(PemError, ValueError):
    """Base for problem-expression errors; carries a byte offset when known."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class ExprSyntaxError(ExprError):
    pass


class UnknownIdentifierError(ExprError):
    pass


class ExponentError(ExprError):
    pass


class ExprEvaluationError(ExprError):
    pass


class ProblemFileError(PemError, ValueError):
    """Malformed problem file; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class MissingKeyError(ProblemFileError):
    pass


class ProblemValidationError(ProblemFileError):
    pass
