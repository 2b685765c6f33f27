import math
import random

import pytest

from conftest import ROW_NAMES, TABLE, random_program_text
from finprog.dsl_core import parse_program, render_program
from finprog.errors import (
    ArithmeticDomainError,
    DivisionByZero,
    DuplicateRowHeader,
    EmptyNumericRow,
    ExecutionError,
    NotANumber,
    RowNotFound,
    YesNoUsedAsNumber,
)
from finprog.executor import (
    Number,
    TableContext,
    YesNo,
    eval_program,
    parse_exec_value,
    parse_numeric,
    trace_program,
)


def _table(rows):
    return TableContext.from_matrix([["", "a", "b", "c"], *rows])


def test_figure_program_value():
    value = eval_program(parse_program("divide(1760, add(279,320))"))
    assert value == Number(1760 / 599)
    assert value.render().startswith("2.938230")


def test_arithmetic_semantics():
    assert eval_program(parse_program("subtract(5, 7)")) == Number(-2.0)
    assert eval_program(parse_program("multiply(2.5, const_m1)")) == Number(-2.5)
    assert eval_program(parse_program("exp(2, 10)")) == Number(1024.0)
    assert eval_program(parse_program("greater(5,3)")) == YesNo(True)
    assert eval_program(parse_program("greater(3,5)")).render() == "no"


def test_percent_literals_are_not_scaled():
    assert eval_program(parse_program("add(14.1%, 0)")) == Number(14.1)


def test_table_operators():
    ctx = _table([["r", "2", "4", "6"], ["mixed", "$1,000", "n/a", "(500)"]])
    assert eval_program(parse_program("table_average(r)"), ctx) == Number(4.0)
    assert eval_program(parse_program("table_sum(r)"), ctx) == Number(12.0)
    assert eval_program(parse_program("table_max(mixed)"), ctx) == Number(1000.0)
    assert eval_program(parse_program("table_min(mixed, none)"), ctx) == Number(-500.0)


def test_row_lookup_ignores_case_and_spacing():
    ctx = _table([["Net  Sales", "1", "2", "3"]])
    assert eval_program(parse_program("table_sum(net sales)"), ctx) == Number(6.0)


def test_table_errors():
    ctx = _table([["r", "2", "4", "6"], ["words", "n/a", "-", ""]])
    with pytest.raises(RowNotFound):
        eval_program(parse_program("table_sum(missing)"), ctx)
    with pytest.raises(RowNotFound):
        eval_program(parse_program("table_sum(r)"))
    with pytest.raises(EmptyNumericRow):
        eval_program(parse_program("table_max(words)"), ctx)


def test_duplicate_row_headers_are_rejected():
    with pytest.raises(DuplicateRowHeader):
        _table([["r", "1", "2", "3"], ["R", "4", "5", "6"]])


def test_execution_errors():
    with pytest.raises(DivisionByZero):
        eval_program(parse_program("divide(1, subtract(2, 2))"))
    with pytest.raises(YesNoUsedAsNumber):
        eval_program(parse_program("add(greater(2, 1), 1)"))
    with pytest.raises(ArithmeticDomainError):
        eval_program(parse_program("exp(const_m1, 0.5)"))
    with pytest.raises(ArithmeticDomainError):
        eval_program(parse_program("exp(10, 400)"))


@pytest.mark.parametrize(
    "text",
    ["add(1e308, 1e308)", "subtract(-1e308, 1e308)", "multiply(1e200, 1e200)", "divide(1e308, 1e-10)"],
)
def test_overflow_is_a_domain_error(text):
    with pytest.raises(ArithmeticDomainError):
        eval_program(parse_program(text))


def test_trace_returns_every_step():
    trace = trace_program(parse_program("add(279,320), divide(1760,#0)"))
    assert trace == [Number(599.0), Number(1760 / 599)]


@pytest.mark.parametrize(
    "raw, value, percent",
    [("$1,760", 1760.0, False), ("14.1%", 14.1, True), ("(7)", -7.0, False), ("(170.1)", -170.1, False)],
)
def test_parse_numeric(raw, value, percent):
    tok = parse_numeric(raw)
    assert tok.value == value
    assert tok.percent is percent


@pytest.mark.parametrize("raw", ["", "abc", "1.2.3", "$", "inf", "nan"])
def test_parse_numeric_rejects(raw):
    with pytest.raises(NotANumber):
        parse_numeric(raw)


def test_parse_exec_value():
    assert parse_exec_value(2.5) == Number(2.5)
    assert parse_exec_value("yes") == YesNo(True)
    assert parse_exec_value(" No ") == YesNo(False)
    assert parse_exec_value("1,760") == Number(1760.0)


def test_commutative_operators_execute_identically():
    rng = random.Random(7)
    for _ in range(1000):
        a = round(rng.uniform(-1e6, 1e6), rng.randint(0, 6))
        b = round(rng.uniform(-1e6, 1e6), rng.randint(0, 6))
        for op in ("add", "multiply"):
            assert eval_program(parse_program(f"{op}({a}, {b})")) == eval_program(parse_program(f"{op}({b}, {a})"))


def test_table_average_between_min_and_max():
    ctx = TableContext.from_matrix(TABLE)
    for row in ROW_NAMES:
        lo = eval_program(parse_program(f"table_min({row})"), ctx).value
        mean = eval_program(parse_program(f"table_average({row})"), ctx).value
        hi = eval_program(parse_program(f"table_max({row})"), ctx).value
        assert lo <= mean <= hi


def test_nested_and_flattened_forms_execute_identically(program_rng):
    ctx = TableContext.from_matrix(TABLE)
    checked = 0
    for _ in range(2000):
        p = parse_program(random_program_text(program_rng, depth=4))
        try:
            expected = eval_program(p, ctx)
        except ExecutionError:
            continue
        if isinstance(expected, Number) and math.isnan(expected.value):
            continue
        for form in ("nested", "flattened"):
            assert eval_program(parse_program(render_program(p, form)), ctx) == expected
        checked += 1
    assert checked > 100
