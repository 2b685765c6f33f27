"""Exception hierarchy shared by every finprog module."""
from typing import Optional


class FinProgError(Exception):
    """Base class; the CLI maps it to the data-error exit code."""


# ---------------------------------------------------------------- program syntax

class ProgramSyntaxError(FinProgError):
    def __init__(self, message: str, token: str, offset: int):
        super().__init__(f"{message}: {token!r} at offset {offset}")
        self.token = token
        self.offset = offset


class UnknownOperator(ProgramSyntaxError):
    pass


class ArityMismatch(ProgramSyntaxError):
    pass


class UnresolvedStepRef(ProgramSyntaxError):
    pass


class MalformedToken(ProgramSyntaxError):
    pass


class NestedFormUnavailable(FinProgError):
    pass


# ---------------------------------------------------------------- execution

class ExecutionError(FinProgError):
    pass


class NotANumber(ExecutionError):
    def __init__(self, raw: str):
        super().__init__(f"not a number: {raw!r}")
        self.raw = raw


class DivisionByZero(ExecutionError):
    pass


class RowNotFound(ExecutionError):
    def __init__(self, name: str):
        super().__init__(f"row not found: {name!r}")
        self.name = name


class EmptyNumericRow(ExecutionError):
    def __init__(self, name: str):
        super().__init__(f"row has no numeric cells: {name!r}")
        self.name = name


class YesNoUsedAsNumber(ExecutionError):
    pass


class ArithmeticDomainError(ExecutionError):
    pass


# ---------------------------------------------------------------- data

class DataError(FinProgError):
    pass


class DuplicateRowHeader(DataError):
    def __init__(self, header: str):
        super().__init__(f"duplicate row header: {header!r}")
        self.header = header


class FileUnreadable(DataError):
    pass


class SchemaMismatch(DataError):
    def __init__(self, field_path: str, detail: Optional[str] = None):
        msg = f"schema mismatch at {field_path}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.field_path = field_path


class IndexOutOfRange(DataError):
    pass


class EmptyGraph(DataError):
    pass


class NoIrrelevantEvidence(DataError):
    pass


class SpanOutOfRange(DataError):
    pass


class AllCorporaEmpty(DataError):
    pass


class EmptyGold(DataError):
    pass
