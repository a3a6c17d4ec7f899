"""Error types shared across the package.

Every error carries a stable machine-readable ``code`` so callers (and the
CLI) can act on the category without parsing the message.
"""

from __future__ import annotations


class PbdError(Exception):
    """Base class for all errors raised by this package."""

    code = "ERROR"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def __str__(self) -> str:
        return f"{self.code}: {super().__str__()}"


class RulesetError(PbdError):
    """A ruleset file violates an invariant of the guideline catalog."""

    code = "RULESET_INVALID"

    def __init__(self, message: str, *, source: str = "<bundled>"):
        super().__init__(message)
        self.source = source

    def __str__(self) -> str:
        return f"{self.code}: {self.source}: {Exception.__str__(self)}"


class UnknownGuidelineError(PbdError):
    """A guideline id outside 1..30 was requested."""

    code = "UNKNOWN_GUIDELINE"

    def __init__(self, guideline_id: object):
        super().__init__(f"no guideline with id {guideline_id!r}")
        self.guideline_id = guideline_id


class ParseError(PbdError):
    """Syntax error in a model or annotation file.

    ``column`` is 0 for line-oriented formats that do not track columns.
    """

    code = "PARSE_ERROR"

    def __init__(self, message: str, line: int, column: int = 0, *, code: str | None = None):
        super().__init__(message, code=code)
        self.line = line
        self.column = column

    def __str__(self) -> str:
        if self.column:
            return f"{self.code}: line {self.line}, column {self.column}: {Exception.__str__(self)}"
        return f"{self.code}: line {self.line}: {Exception.__str__(self)}"


class EngineError(PbdError):
    """Raised when propagation or assessment preconditions are broken."""

    code = "ENGINE_ERROR"


class MergeError(PbdError):
    """Raised when an annotation cannot be merged into an assessment."""

    code = "MERGE_ERROR"


class ReportError(PbdError):
    """Raised for rendering and diff contract violations."""

    code = "REPORT_ERROR"
