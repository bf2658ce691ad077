"""Exception hierarchy shared by every module."""


class PgclError(Exception):
    """Base class for all errors raised by the package."""


class EvalError(PgclError):
    """An expression could not be evaluated in a given state."""


class UnboundVariable(EvalError):
    def __init__(self, name):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class DivisionByZero(EvalError):
    pass


class NonIntegerArgument(EvalError):
    pass


class NegativeArgument(EvalError):
    pass


class ArgumentTooLarge(EvalError):
    """Builtin argument outside the range we are prepared to compute exactly."""


class ProbabilityOutOfRange(EvalError):
    def __init__(self, value, state=None):
        super().__init__(f"probability {value} outside [0,1]")
        self.value = value
        self.state = state


class NegativeExpectation(EvalError):
    def __init__(self, value, state=None):
        super().__init__(f"expectation takes negative value {value}")
        self.value = value
        self.state = state


class LoopNotAllowed(PgclError):
    pass


class PgclSyntaxError(PgclError):
    def __init__(self, message, line=None, col=None):
        where = f" at line {line}, column {col}" if line is not None else ""
        super().__init__(message + where)
        self.message = message
        self.line = line
        self.col = col


class MissingField(PgclSyntaxError):
    def __init__(self, field):
        super().__init__(f"missing field '{field}'")
        self.field = field


class WrongKindField(PgclSyntaxError):
    def __init__(self, field, kind):
        super().__init__(f"field '{field}' does not belong to a {kind} certificate")
        self.field = field
        self.kind = kind


class EmptyRange(PgclSyntaxError):
    pass


class InvalidParameters(PgclError):
    pass
