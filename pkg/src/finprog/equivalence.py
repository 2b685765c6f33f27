"""Program accuracy: rule-based mathematical equivalence of two programs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

from .dsl_core import ConstantRef, NumberLiteral, Operator, Program, RowRef, Step, StepRef
from .executor import normalize_header

# canonical operands:
#   ("num", value, percent) | ("row", normalized name) | ("ref", step index)
CanonicalOperand = Tuple
# content key of an operand: refs are replaced by the key of the step they point to
_Key = Tuple


@dataclass(frozen=True)
class CanonicalStep:
    op: Operator
    operands: Tuple[CanonicalOperand, ...]


@dataclass(frozen=True)
class CanonicalProgram:
    steps: Tuple[CanonicalStep, ...]

    def to_program(self) -> Program:
        steps = []
        for cs in self.steps:
            operands = []
            for o in cs.operands:
                if o[0] == "num":
                    raw = _format_number(o[1]) + ("%" if o[2] else "")
                    operands.append(NumberLiteral(o[1], o[2], raw))
                elif o[0] == "row":
                    operands.append(RowRef(o[1]))
                else:
                    operands.append(StepRef(o[1]))
            steps.append(Step(cs.op, tuple(operands)))
        return Program(tuple(steps))


def _format_number(v: float) -> str:
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def _normalize(operand) -> CanonicalOperand:
    if isinstance(operand, NumberLiteral):
        return ("num", operand.value + 0.0, operand.percent)
    if isinstance(operand, ConstantRef):
        return ("num", operand.value + 0.0, False)
    if isinstance(operand, RowRef):
        return ("row", normalize_header(operand.name))
    return ("ref", operand.index)


def canonicalize(p: Program, eliminate_dead_steps: bool = True) -> CanonicalProgram:
    """
    Rules, in order: numeric normalization (value + percent flag, constants by
    value), commutative operand sort for add/multiply, dead-step elimination,
    then renumbering in depth-first order of the expression DAG.

    Sorting and renumbering use the content of referenced sub-expressions, so
    the result does not depend on the order independent steps were emitted in.
    """
    normalized: List[List[CanonicalOperand]] = [[_normalize(o) for o in s.operands] for s in p.steps]

    keys: List[_Key] = []
    order: List[List[int]] = []  # operand visiting order per step
    for step, ops in zip(p.steps, normalized):
        op_keys = [("sub", keys[o[1]]) if o[0] == "ref" else o for o in ops]
        idx = list(range(len(ops)))
        if step.op.is_commutative:
            idx.sort(key=lambda j: op_keys[j])
        order.append(idx)
        keys.append((step.op.value, tuple(op_keys[j] for j in idx)))

    n = len(p.steps)
    if n == 0:
        return CanonicalProgram(())

    referenced = set()
    for ops in normalized:
        referenced.update(o[1] for o in ops if o[0] == "ref")
    if eliminate_dead_steps:
        roots = [n - 1]
    else:
        dead = [i for i in range(n - 1) if i not in referenced]
        dead.sort(key=lambda i: keys[i])
        roots = dead + [n - 1]

    new_index: Dict[int, int] = {}
    by_key: Dict[_Key, int] = {}
    out: List[CanonicalStep] = []

    def emit(i: int, shared: bool = True) -> int:
        if i in new_index:
            return new_index[i]
        if shared and keys[i] in by_key:
            # identical sub-expression already emitted
            new_index[i] = by_key[keys[i]]
            return new_index[i]
        operands = []
        for j in order[i]:
            o = normalized[i][j]
            operands.append(("ref", emit(o[1])) if o[0] == "ref" else o)
        out.append(CanonicalStep(p.steps[i].op, tuple(operands)))
        new_index[i] = len(out) - 1
        if shared:
            by_key[keys[i]] = new_index[i]
        return new_index[i]

    # a kept dead step stays a step of its own even when a live step computes the same thing
    for r in roots:
        emit(r, shared=r == n - 1)
    return CanonicalProgram(tuple(out))


def prog_equal(a: Program, b: Program, eliminate_dead_steps: bool = True) -> bool:
    return canonicalize(a, eliminate_dead_steps) == canonicalize(b, eliminate_dead_steps)
