"""
Solution-program DSL: parse, render, flatten and decompose programs such as
``divide(1760, add(279, 320))`` or its flattened form
``add(279, 320), divide(1760, #0)``.

Grammar (EBNF, see docs/program_grammar.md):

    program  = call , { "," , call } ;
    call     = atom , "(" , [ arg , { "," , arg } ] , ")" ;
    arg      = call | atom ;
    atom     = any run of characters except "(", ")", "," (inner spaces allowed) ;
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken

from .errors import (
    ArityMismatch,
    MalformedToken,
    NestedFormUnavailable,
    UnknownOperator,
    UnresolvedStepRef,
)
from .log import get_logger
from .numeric import try_parse_numeric

logger = get_logger(__name__)

MAX_FINQA_STEPS = 6


class Operator(str, Enum):
    ADD = "add"
    SUBTRACT = "subtract"
    MULTIPLY = "multiply"
    DIVIDE = "divide"
    EXP = "exp"
    GREATER = "greater"
    TABLE_SUM = "table_sum"
    TABLE_AVERAGE = "table_average"
    TABLE_MAX = "table_max"
    TABLE_MIN = "table_min"

    @property
    def is_table(self) -> bool:
        return self.value.startswith("table_")

    @property
    def arity(self) -> int:
        return 1 if self.is_table else 2

    @property
    def is_commutative(self) -> bool:
        return self in (Operator.ADD, Operator.MULTIPLY)

    @property
    def index(self) -> int:
        """Position in the fixed 10-way label space."""
        return list(Operator).index(self)


OPERATORS: Tuple[Operator, ...] = tuple(Operator)

# const_<n> -> n, const_m<n> -> -n; any such token resolves, these are the common ones
DEFAULT_CONSTANTS: Dict[str, float] = {
    "const_1": 1.0,
    "const_2": 2.0,
    "const_10": 10.0,
    "const_100": 100.0,
    "const_1000": 1000.0,
    "const_1000000": 1000000.0,
    "const_1000000000": 1000000000.0,
    "const_m1": -1.0,
}

_CONSTANT_TOKEN = re.compile(r"const_(m?)(\d+)")


def constant_value(token: str, constants: Mapping[str, float]) -> Optional[float]:
    """Value of a ``const_*`` token: registered constants first, then the naming convention."""
    if token in constants:
        return constants[token]
    m = _CONSTANT_TOKEN.fullmatch(token)
    if m is None:
        return None
    value = float(m.group(2))
    return -value if m.group(1) else value


# FinQA writes table operators as table_xxx(row name, none)
_TABLE_PLACEHOLDER = "none"


# ---------------------------------------------------------------- operands

@dataclass(frozen=True)
class NumberLiteral:
    value: float
    percent: bool
    raw: str


@dataclass(frozen=True)
class ConstantRef:
    token: str
    value: float


@dataclass(frozen=True)
class StepRef:
    index: int


@dataclass(frozen=True)
class RowRef:
    name: str


Operand = Union[NumberLiteral, ConstantRef, StepRef, RowRef]


@dataclass(frozen=True)
class Step:
    op: Operator
    operands: Tuple[Operand, ...]


@dataclass(frozen=True)
class Program:
    steps: Tuple[Step, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def warnings(self) -> List[str]:
        out = []
        if len(self.steps) > MAX_FINQA_STEPS:
            out.append(f"program has {len(self.steps)} steps (FinQA maximum is {MAX_FINQA_STEPS})")
        return out


@dataclass(frozen=True)
class Call:
    """Node of the nested (tree) view of a program."""
    op: Operator
    args: Tuple[Union["Call", Operand], ...]


def render_operand(operand: Operand) -> str:
    if isinstance(operand, NumberLiteral):
        return operand.raw
    if isinstance(operand, ConstantRef):
        return operand.token
    if isinstance(operand, StepRef):
        return f"#{operand.index}"
    return operand.name


# ---------------------------------------------------------------- parsing

_GRAMMAR = r"""
start: call ("," call)*
call: ATOM "(" args? ")"
args: arg ("," arg)*
?arg: call
    | ATOM

ATOM: /[^\s,()]+(?:[ \t]+[^\s,()]+)*/

%import common.WS
%ignore WS
"""

_parser = Lark(_GRAMMAR, parser="lalr")


class _Flattener:
    """Walks the parse tree depth-first, left to right, emitting steps."""

    def __init__(self, constants: Mapping[str, float]):
        self.constants = constants
        self.steps: List[Step] = []

    def top(self, tree: Tree) -> None:
        for call in tree.children:
            self.call(call)

    def call(self, node: Tree) -> int:
        name_tok: Token = node.children[0]
        name = str(name_tok)
        try:
            op = Operator(name)
        except ValueError:
            raise UnknownOperator("unknown operator", name, name_tok.start_pos) from None

        raw_args = list(node.children[1].children) if len(node.children) > 1 else []

        if op.is_table and len(raw_args) == 2 and isinstance(raw_args[1], Token) \
                and str(raw_args[1]).lower() == _TABLE_PLACEHOLDER:
            raw_args = raw_args[:1]

        if len(raw_args) != op.arity:
            raise ArityMismatch(
                f"{op.value} takes {op.arity} operand(s), got {len(raw_args)}",
                name, name_tok.start_pos,
            )

        operands: List[Operand] = []
        for arg in raw_args:
            if isinstance(arg, Tree):
                if op.is_table:
                    raise MalformedToken("table operators take a row name", name, name_tok.start_pos)
                operands.append(StepRef(self.call(arg)))
            else:
                operands.append(self.atom(op, arg))

        self.steps.append(Step(op, tuple(operands)))
        return len(self.steps) - 1

    def atom(self, op: Operator, tok: Token) -> Operand:
        text = " ".join(str(tok).split())
        offset = tok.start_pos
        current = len(self.steps)

        if op.is_table:
            if text.startswith("#") or constant_value(text, self.constants) is not None:
                raise MalformedToken("table operators take a row name", text, offset)
            return RowRef(text)

        if text.startswith("#"):
            digits = text[1:]
            if not digits.isdigit():
                raise MalformedToken("malformed step reference", text, offset)
            index = int(digits)
            if index >= current:
                raise UnresolvedStepRef("step reference does not point to an earlier step", text, offset)
            return StepRef(index)

        if text.startswith("const_"):
            value = constant_value(text, self.constants)
            if value is None:
                raise MalformedToken("unknown constant", text, offset)
            return ConstantRef(text, value)

        num = try_parse_numeric(text)
        if num is None:
            raise MalformedToken("expected a number, constant or step reference", text, offset)
        return NumberLiteral(num.value, num.percent, text)


def parse_program(text: str, constants: Optional[Mapping[str, float]] = None) -> Program:
    """
    Parse a nested or flattened program into its flattened form.

    Inner calls of a nested program get lower step indices (depth-first,
    left to right), so ``divide(1760, add(279,320))`` becomes
    ``[add(279,320), divide(1760,#0)]``.
    """
    table = dict(DEFAULT_CONSTANTS)
    if constants:
        table.update(constants)

    try:
        tree = _parser.parse(text)
    except UnexpectedCharacters as e:
        pos = e.pos_in_stream
        raise MalformedToken("unexpected character", text[pos:pos + 1], pos) from None
    except UnexpectedEOF:
        raise MalformedToken("unexpected end of program", "", len(text)) from None
    except UnexpectedToken as e:
        tok = e.token
        if tok.type == "$END":
            raise MalformedToken("unexpected end of program", "", len(text)) from None
        raise MalformedToken("unexpected token", str(tok), tok.start_pos) from None
    except UnexpectedInput as e:  # pragma: no cover - other lark input errors
        raise MalformedToken("malformed program", text, max(e.pos_in_stream or 0, 0)) from None

    flattener = _Flattener(table)
    flattener.top(tree)
    program = Program(tuple(flattener.steps))
    for w in program.warnings():
        logger.warning(w, extra={"program": text})
    return program


# ---------------------------------------------------------------- rendering

def _render_step(step: Step) -> str:
    return f"{step.op.value}({', '.join(render_operand(o) for o in step.operands)})"


def reference_counts(p: Program) -> List[int]:
    counts = [0] * len(p.steps)
    for step in p.steps:
        for o in step.operands:
            if isinstance(o, StepRef):
                counts[o.index] += 1
    return counts


def _depth_first_order(p: Program, roots: Sequence[int]) -> List[int]:
    order: List[int] = []

    def visit(i: int) -> None:
        for o in p.steps[i].operands:
            if isinstance(o, StepRef):
                visit(o.index)
        order.append(i)

    for r in roots:
        visit(r)
    return order


def program_to_tree(p: Program) -> List[Call]:
    """Nested view: one Call tree per root step (normally exactly one)."""
    counts = reference_counts(p)
    if any(c > 1 for c in counts):
        shared = [f"#{i}" for i, c in enumerate(counts) if c > 1]
        raise NestedFormUnavailable(f"step results referenced more than once: {', '.join(shared)}")

    roots = [i for i, c in enumerate(counts) if c == 0]
    if _depth_first_order(p, roots) != list(range(len(p.steps))):
        raise NestedFormUnavailable("step order is not the depth-first order of the expression tree")

    def build(i: int) -> Call:
        step = p.steps[i]
        args = tuple(build(o.index) if isinstance(o, StepRef) else o for o in step.operands)
        return Call(step.op, args)

    return [build(r) for r in roots]


def _render_call(node: Call) -> str:
    parts = [_render_call(a) if isinstance(a, Call) else render_operand(a) for a in node.args]
    return f"{node.op.value}({', '.join(parts)})"


def render_program(p: Program, form: Literal["nested", "flattened"] = "nested") -> str:
    if form == "flattened":
        return ", ".join(_render_step(s) for s in p.steps)
    if form == "nested":
        return ", ".join(_render_call(t) for t in program_to_tree(p))
    raise ValueError(f"unknown form: {form!r}")


# ---------------------------------------------------------------- decomposition

def extract_variable_subprograms(p: Program) -> List[Step]:
    """Steps whose operands are all number literals taken from the passage."""
    return [s for s in p.steps if all(isinstance(o, NumberLiteral) for o in s.operands)]


def operator_count(p: Program) -> int:
    return len(p.steps)
