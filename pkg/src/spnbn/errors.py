"""Exception hierarchy shared by every module.

Each exception carries a short machine-readable ``code`` that the command
line front end prints as ``error[CODE]: message``.
"""


class SpnError(Exception):
    code = "E000"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code

    @property
    def message(self):
        return self.args[0]

    def render(self):
        return f"error[{self.code}]: {self.message}"


class StructureError(SpnError):
    """A graph violates a structural invariant (cycle, dangling edge, ...)."""

    code = "E100"


class ParseError(SpnError):
    """Malformed text document; carries a 1-based line/column position."""

    code = "E200"

    def __init__(self, message, code=None, line=None, column=None):
        super().__init__(message, code)
        self.line = line
        self.column = column

    def render(self):
        where = f"{self.line}:{self.column}: " if self.line is not None else ""
        return f"error[{self.code}]: {where}{self.message}"


class InputError(SpnError):
    code = "E300"


class PreconditionError(SpnError):
    """An operation was applied to a model lacking a required property."""

    code = "E400"

    def __init__(self, message, code=None, node=None):
        super().__init__(message, code)
        self.node = node


class DegenerateError(SpnError):
    code = "E500"

    def __init__(self, message, code=None, node=None):
        super().__init__(message, code)
        self.node = node


class EnumerationLimitError(SpnError):
    code = "E600"


class OrderViolationError(SpnError):
    code = "E700"
