"""Evaluate solution programs, optionally against the example's table."""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from .dsl_core import ConstantRef, NumberLiteral, Operator, Program, RowRef, Step, StepRef
from .errors import (
    ArithmeticDomainError,
    DivisionByZero,
    DuplicateRowHeader,
    EmptyNumericRow,
    ExecutionError,
    RowNotFound,
    YesNoUsedAsNumber,
)
from .numeric import NumericToken, parse_numeric, try_parse_numeric

__all__ = [
    "ExecValue",
    "Number",
    "YesNo",
    "NumericToken",
    "TableContext",
    "TableRow",
    "eval_program",
    "parse_exec_value",
    "parse_numeric",
    "trace_program",
]

RawTable = Sequence[Sequence[str]]


@dataclass(frozen=True)
class Number:
    value: float

    def render(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class YesNo:
    value: bool

    def render(self) -> str:
        return "yes" if self.value else "no"


ExecValue = Union[Number, YesNo]


def normalize_header(text: str) -> str:
    return " ".join(text.split()).lower()


@dataclass(frozen=True)
class TableRow:
    header: str
    cells: Tuple[str, ...]

    def numeric_cells(self) -> List[NumericToken]:
        return [t for t in (try_parse_numeric(c) for c in self.cells if c.strip()) if t is not None]


@dataclass(frozen=True)
class TableContext:
    """Data rows of a table; row 0 of the raw matrix is the column-header row."""
    columns: Tuple[str, ...]
    rows: Tuple[TableRow, ...]

    @classmethod
    def from_matrix(cls, raw: RawTable) -> "TableContext":
        if not raw:
            return cls((), ())
        columns = tuple(str(c) for c in raw[0])
        rows = []
        seen = set()
        for r in raw[1:]:
            if not r:
                continue
            header = str(r[0])
            key = normalize_header(header)
            if key in seen:
                raise DuplicateRowHeader(header)
            seen.add(key)
            rows.append(TableRow(header, tuple(str(c) for c in r[1:])))
        return cls(columns, tuple(rows))

    def find_row(self, name: str) -> TableRow:
        key = normalize_header(name)
        for row in self.rows:
            if normalize_header(row.header) == key:
                return row
        raise RowNotFound(name)

    def numeric_series(self, name: str) -> pd.Series:
        row = self.find_row(name)
        values = [t.value for t in row.numeric_cells()]
        if not values:
            raise EmptyNumericRow(name)
        return pd.Series(values, dtype="float64")


# table operator -> pandas aggregation
_TABLE_AGG: Dict[Operator, str] = {
    Operator.TABLE_SUM: "sum",
    Operator.TABLE_AVERAGE: "mean",
    Operator.TABLE_MAX: "max",
    Operator.TABLE_MIN: "min",
}


def _as_number(value: ExecValue) -> float:
    if isinstance(value, YesNo):
        raise YesNoUsedAsNumber("result of 'greater' used as a number")
    return value.value


def _resolve(operand, results: List[ExecValue]) -> float:
    if isinstance(operand, NumberLiteral):
        return operand.value
    if isinstance(operand, ConstantRef):
        return operand.value
    if isinstance(operand, StepRef):
        return _as_number(results[operand.index])
    raise ExecutionError(f"row reference {operand.name!r} used as an arithmetic operand")


_ARITHMETIC = {
    Operator.ADD: operator.add,
    Operator.SUBTRACT: operator.sub,
    Operator.MULTIPLY: operator.mul,
    Operator.DIVIDE: operator.truediv,
    Operator.EXP: math.pow,
}


def _arithmetic(op: Operator, a: float, b: float) -> float:
    if op is Operator.DIVIDE and b == 0:
        raise DivisionByZero(f"divide({a}, {b})")
    try:
        result = _ARITHMETIC[op](a, b)
    except (OverflowError, ValueError) as e:
        raise ArithmeticDomainError(f"{op.value}({a}, {b}): {e}") from None
    if not math.isfinite(result):
        raise ArithmeticDomainError(f"{op.value}({a}, {b}) is not finite")
    return result


def _eval_step(step: Step, results: List[ExecValue], ctx: Optional[TableContext]) -> ExecValue:
    op = step.op
    if op.is_table:
        (row_ref,) = step.operands
        if not isinstance(row_ref, RowRef):
            raise ExecutionError(f"{op.value} expects a row name")
        if ctx is None:
            raise RowNotFound(row_ref.name)
        series = ctx.numeric_series(row_ref.name)
        value = float(series.agg(_TABLE_AGG[op]))
        if op is Operator.TABLE_AVERAGE:
            # rounding in sum/n must not push the mean outside [min, max]
            value = min(max(value, float(series.min())), float(series.max()))
        return Number(value)

    a, b = (_resolve(o, results) for o in step.operands)
    if op is Operator.GREATER:
        return YesNo(a > b)
    return Number(_arithmetic(op, a, b))


def trace_program(p: Program, ctx: Optional[TableContext] = None) -> List[ExecValue]:
    """Values of every step, in step order."""
    results: List[ExecValue] = []
    for step in p.steps:
        results.append(_eval_step(step, results, ctx))
    return results


def eval_program(p: Program, ctx: Optional[TableContext] = None) -> ExecValue:
    if not p.steps:
        raise ExecutionError("empty program")
    return trace_program(p, ctx)[-1]


def parse_exec_value(raw: Union[str, float, int, bool]) -> ExecValue:
    """FinQA ``exe_ans``: a number, or "yes"/"no" for comparison questions."""
    if isinstance(raw, bool):
        return YesNo(raw)
    if isinstance(raw, (int, float)):
        return Number(float(raw))
    text = raw.strip().lower()
    if text in ("yes", "no"):
        return YesNo(text == "yes")
    return Number(parse_numeric(text).value)
