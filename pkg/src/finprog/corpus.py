"""
FinQA-format ingestion.

Each example becomes a HybridExample whose candidate evidence is, in document
order: pre_text sentences, linearized table rows, post_text sentences.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from .dsl_core import Program, operator_count, parse_program, render_program
from .errors import FileUnreadable, FinProgError, IndexOutOfRange, SchemaMismatch
from .executor import ExecValue, RawTable, TableContext, eval_program, parse_exec_value
from .jsonl import write_jsonl
from .log import get_logger

logger = get_logger(__name__)

CELL_SEPARATOR = " ; "
ROW_TERMINATOR = " ."


# ---------------------------------------------------------------- linearization

def _squash(text: str) -> str:
    return " ".join(text.split())


def linearize_cell(row_header: str, col_header: str, value: str) -> str:
    """
    "The {row} of {col} is {value}".

    A row header that already starts with "the" is not given a second article,
    so "The Charlotte at Midtown" yields "The Charlotte at Midtown of Units is 279".
    """
    row = _squash(row_header)
    subject = row if row.lower().startswith("the ") else f"The {row}"
    return _squash(f"{subject} of {col_header} is {value}")


def cell_sentences(table: RawTable, row_index: int) -> List[str]:
    """One sentence per non-header cell of the row, in column order."""
    if not 1 <= row_index < len(table):
        raise IndexOutOfRange(f"row {row_index} not in table with {len(table)} rows")
    header, row = table[0], table[row_index]
    out = []
    for col in range(1, len(row)):
        col_header = header[col] if col < len(header) else ""
        out.append(linearize_cell(row[0], col_header, row[col]))
    return out


def linearize_row(
    table: RawTable,
    row_index: int,
    separator: str = CELL_SEPARATOR,
    terminator: str = ROW_TERMINATOR,
) -> str:
    cells = cell_sentences(table, row_index)
    if not cells:
        return ""
    return separator.join(cells) + terminator


# ---------------------------------------------------------------- examples

@dataclass(frozen=True)
class EvidenceItem:
    id: str
    sentence: str
    source: Literal["text", "table"] = "text"
    row_index: Optional[int] = None
    is_gold: bool = False


@dataclass(frozen=True)
class HybridExample:
    id: str
    question: str
    candidates: Tuple[EvidenceItem, ...]
    gold: Tuple[EvidenceItem, ...]
    program: Program
    program_text: str
    execution_answer: ExecValue
    table: TableContext
    raw_table: Tuple[Tuple[str, ...], ...] = field(default=())

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "question": self.question,
            "candidates": [{"id": c.id, "sentence": c.sentence, "gold": c.is_gold} for c in self.candidates],
            "program": render_program(self.program, "flattened"),
            "exe_ans": self.execution_answer.value,
        }


class _FinQAQA(BaseModel):
    model_config = ConfigDict(extra="ignore")

    question: str
    program: str
    exe_ans: Union[float, str]
    gold_inds: Dict[str, str] = {}


class _FinQARecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: str = ""
    pre_text: List[str]
    post_text: List[str]
    table: List[List[str]]
    qa: _FinQAQA


@dataclass
class IngestReport:
    source: str
    total: int = 0
    examples: List[HybridExample] = field(default_factory=list)
    rejects: List[Dict[str, Any]] = field(default_factory=list)
    gold_text_mismatches: int = 0


def _loose_words(text: str) -> str:
    return " ".join(re.findall(r"[^\W_]+", text.casefold()))


def _build_candidates(
    rec: _FinQARecord, separator: str, terminator: str
) -> List[EvidenceItem]:
    pre = [EvidenceItem(f"text_{i}", s, "text") for i, s in enumerate(rec.pre_text)]
    rows = [
        EvidenceItem(f"table_{r}", linearize_row(rec.table, r, separator, terminator), "table", r)
        for r in range(1, len(rec.table))
    ]
    offset = len(rec.pre_text)
    post = [EvidenceItem(f"text_{offset + i}", s, "text") for i, s in enumerate(rec.post_text)]
    return pre + rows + post


def _build_example(
    rec: _FinQARecord,
    example_id: str,
    report: IngestReport,
    constants: Optional[Mapping[str, float]],
    separator: str,
    terminator: str,
) -> HybridExample:
    program = parse_program(rec.qa.program, constants)
    table = TableContext.from_matrix(rec.table)
    eval_program(program, table)
    answer = parse_exec_value(rec.qa.exe_ans)

    if not rec.qa.gold_inds:
        raise SchemaMismatch("qa.gold_inds", "no gold evidence")

    candidates = _build_candidates(rec, separator, terminator)
    by_id = {c.id: c for c in candidates}
    gold_ids = set()
    for gid, stored in rec.qa.gold_inds.items():
        if gid not in by_id:
            raise SchemaMismatch(f"qa.gold_inds.{gid}", "does not resolve to a candidate")
        ours, theirs = _loose_words(by_id[gid].sentence), _loose_words(stored)
        if theirs not in ours and ours not in theirs:
            report.gold_text_mismatches += 1
            logger.debug("gold text differs from candidate", extra={"example": example_id, "gold_id": gid})
        gold_ids.add(gid)

    candidates = [
        EvidenceItem(c.id, c.sentence, c.source, c.row_index, c.id in gold_ids) for c in candidates
    ]
    return HybridExample(
        id=example_id,
        question=rec.qa.question,
        candidates=tuple(candidates),
        gold=tuple(c for c in candidates if c.is_gold),
        program=program,
        program_text=rec.qa.program,
        execution_answer=answer,
        table=table,
        raw_table=tuple(tuple(r) for r in rec.table),
    )


def ingest_finqa(
    records: Sequence[Any],
    source: str = "<memory>",
    constants: Optional[Mapping[str, float]] = None,
    separator: str = CELL_SEPARATOR,
    terminator: str = ROW_TERMINATOR,
) -> IngestReport:
    """Validate raw FinQA records; malformed ones are quarantined, not fatal."""
    report = IngestReport(source=source, total=len(records))
    stem = Path(source).stem
    for i, raw in enumerate(records):
        example_id = raw.get("id") if isinstance(raw, dict) and raw.get("id") else f"{stem}-{i}"
        try:
            try:
                rec = _FinQARecord.model_validate(raw)
            except ValidationError as e:
                err = e.errors()[0]
                path = ".".join(str(p) for p in err["loc"]) or "$"
                raise SchemaMismatch(path, err["msg"]) from None
            example = _build_example(rec, example_id, report, constants, separator, terminator)
        except FinProgError as e:
            report.rejects.append(
                {"index": i, "id": example_id, "error": type(e).__name__, "message": str(e)}
            )
            logger.info("rejected example", extra={"example": example_id, "error": type(e).__name__})
            continue
        report.examples.append(example)

    logger.info(
        "ingested %d/%d examples from %s (%d rejected)",
        len(report.examples), report.total, source, len(report.rejects),
    )
    return report


def read_finqa_file(path: Path) -> List[Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FileUnreadable(f"{path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaMismatch("$", f"invalid JSON: {e}") from None
    if not isinstance(data, list):
        raise SchemaMismatch("$", "expected a JSON array of examples")
    return data


def load_finqa_report(
    path: Path,
    constants: Optional[Mapping[str, float]] = None,
    separator: str = CELL_SEPARATOR,
    terminator: str = ROW_TERMINATOR,
) -> IngestReport:
    return ingest_finqa(read_finqa_file(path), str(path), constants, separator, terminator)


def load_finqa(
    path: Path,
    rejects_path: Optional[Path] = None,
    constants: Optional[Mapping[str, float]] = None,
    separator: str = CELL_SEPARATOR,
    terminator: str = ROW_TERMINATOR,
) -> List[HybridExample]:
    report = load_finqa_report(path, constants, separator, terminator)
    if rejects_path is not None:
        with Path(rejects_path).open("w", encoding="utf-8") as f:
            write_jsonl(f, report.rejects)
    return report.examples


# ---------------------------------------------------------------- statistics / export

def dataset_statistics(examples: Sequence[HybridExample]) -> Dict[str, float]:
    """Count, mean/max operators per program and mean/max gold evidence."""
    if not examples:
        return {"n": 0, "mean_operators": 0.0, "max_operators": 0, "mean_gold": 0.0, "max_gold": 0}
    df = pd.DataFrame(
        {
            "operators": [operator_count(e.program) for e in examples],
            "gold": [len(e.gold) for e in examples],
        }
    )
    return {
        "n": int(len(df)),
        "mean_operators": float(df["operators"].mean()),
        "max_operators": int(df["operators"].max()),
        "mean_gold": float(df["gold"].mean()),
        "max_gold": int(df["gold"].max()),
    }


def export_examples(examples: Sequence[HybridExample], out, provenance: Optional[Dict[str, Any]] = None) -> int:
    return write_jsonl(out, (e.to_record() for e in examples), provenance)
