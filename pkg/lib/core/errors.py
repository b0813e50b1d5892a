"""Error and diagnostic types shared by every module."""

from typing import Optional

from pydantic import BaseModel


class AnalysisError(ValueError):
    """Raised for contract violations; `code` is a stable E_* identifier."""

    def __init__(self, code: str, message: str, step: Optional[int] = None) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.step = step

    def to_diagnostic(self) -> "Diagnostic":
        return Diagnostic(code=self.code, message=self.message, step=self.step)


class Diagnostic(BaseModel):
    code: str
    message: str
    severity: str = "error"
    step: Optional[int] = None
    line: Optional[int] = None
    column: Optional[int] = None

    def describe(self) -> str:
        where = ""
        if self.line is not None:
            where = f"{self.line}:{self.column or 1}: "
        elif self.step is not None:
            where = f"step {self.step}: "
        return f"{where}{self.severity} {self.code}: {self.message}"


def has_errors(diagnostics) -> bool:
    return any(d.severity == "error" for d in diagnostics)
