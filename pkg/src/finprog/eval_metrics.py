"""Execution accuracy, program accuracy and retriever recall@k."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field
from rich.table import Table

from .corpus import EvidenceItem, HybridExample
from .dsl_core import Program, parse_program
from .equivalence import prog_equal
from .errors import EmptyGold, ExecutionError, ProgramSyntaxError
from .executor import ExecValue, TableContext, YesNo, eval_program
from .log import get_logger

logger = get_logger(__name__)

DEFAULT_TOL = 1e-4

ScoredEvidence = Sequence[Tuple[EvidenceItem, float]]


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    # a parse failure scores 0 on both metrics
    predicted: Union[Program, ProgramSyntaxError]
    gold_program: Program
    gold_answer: ExecValue
    table: Optional[TableContext] = None

    @classmethod
    def from_text(
        cls,
        example: HybridExample,
        predicted_text: str,
        constants: Optional[Mapping[str, float]] = None,
    ) -> "PredictionRecord":
        try:
            predicted: Union[Program, ProgramSyntaxError] = parse_program(predicted_text, constants)
        except ProgramSyntaxError as e:
            predicted = e
        return cls(example.id, predicted, example.program, example.execution_answer, example.table)


def answers_match(pred: ExecValue, gold: ExecValue, tol: float = DEFAULT_TOL, percent_equiv: bool = False) -> bool:
    """YesNo compares exactly; numbers within tol relative to max(1, |gold|)."""
    if isinstance(pred, YesNo) or isinstance(gold, YesNo):
        return isinstance(pred, YesNo) and isinstance(gold, YesNo) and pred.value == gold.value
    bound = tol * max(1.0, abs(gold.value))
    candidates = [pred.value]
    if percent_equiv:
        candidates += [pred.value * 100.0, pred.value / 100.0]
    return any(abs(c - gold.value) <= bound for c in candidates)


def execution_correct(r: PredictionRecord, tol: float = DEFAULT_TOL, percent_equiv: bool = False) -> bool:
    if not isinstance(r.predicted, Program):
        return False
    try:
        value = eval_program(r.predicted, r.table)
    except ExecutionError:
        return False
    return answers_match(value, r.gold_answer, tol, percent_equiv)


def program_correct(r: PredictionRecord, eliminate_dead_steps: bool = True) -> bool:
    if not isinstance(r.predicted, Program):
        return False
    return prog_equal(r.predicted, r.gold_program, eliminate_dead_steps)


def execution_accuracy(
    records: Sequence[PredictionRecord], tol: float = DEFAULT_TOL, percent_equiv: bool = False
) -> float:
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if not records:
        logger.warning("execution accuracy of an empty record set is defined as 0")
        return 0.0
    return sum(execution_correct(r, tol, percent_equiv) for r in records) / len(records)


def program_accuracy(records: Sequence[PredictionRecord], eliminate_dead_steps: bool = True) -> float:
    if not records:
        logger.warning("program accuracy of an empty record set is defined as 0")
        return 0.0
    return sum(program_correct(r, eliminate_dead_steps) for r in records) / len(records)


# ---------------------------------------------------------------- retrieval

def _ranked(scored: ScoredEvidence) -> List[EvidenceItem]:
    # sorted() is stable: ties keep candidate order
    return [e for e, _ in sorted(scored, key=lambda x: -x[1])]


def recall_at_k(scored: ScoredEvidence, gold: Iterable[EvidenceItem], k: int) -> float:
    """Share of the gold evidence found among the k best-scored candidates."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold_ids = {g.id for g in gold}
    if not gold_ids:
        raise EmptyGold("recall is undefined without gold evidence")
    top = {e.id for e in _ranked(scored)[:k]}
    return len(gold_ids & top) / len(gold_ids)


def mean_recall_at_k(rankings: Sequence[Tuple[ScoredEvidence, Sequence[EvidenceItem]]], k: int) -> float:
    if not rankings:
        return 0.0
    return sum(recall_at_k(s, g, k) for s, g in rankings) / len(rankings)


def retrieve_top_n(scored: ScoredEvidence, n: int = 3) -> List[EvidenceItem]:
    """The n best candidates, put back into document (candidate) order."""
    position = {e.id: i for i, (e, _) in enumerate(scored)}
    return sorted(_ranked(scored)[:n], key=lambda e: position[e.id])


def score_retrieval(
    score_records: Iterable[Mapping[str, Any]],
    examples: Sequence[HybridExample],
    ks: Sequence[int] = (3, 5),
) -> Dict[str, float]:
    """
    Mean R@k from records ``{"id": ..., "scores": {candidate_id: score}}``.
    Candidates without a score rank last; unknown example ids are skipped.
    """
    by_id = {e.id: e for e in examples}
    rankings = []
    for rec in score_records:
        ex = by_id.get(rec.get("id"))
        if ex is None:
            logger.warning("scores for unknown example", extra={"example": rec.get("id")})
            continue
        scores = rec.get("scores", {})
        scored = [(c, float(scores.get(c.id, float("-inf")))) for c in ex.candidates]
        rankings.append((scored, ex.gold))
    out = {f"R@{k}": mean_recall_at_k(rankings, k) for k in ks}
    out["n"] = len(rankings)
    return out


# ---------------------------------------------------------------- reports

class EvaluationReport(BaseModel):
    exe_acc: float
    prog_acc: float
    n: int
    failures: List[str] = Field(default_factory=list)
    provenance: Dict[str, Any] = Field(default_factory=dict)


def score_predictions(
    predictions: Mapping[str, str],
    examples: Sequence[HybridExample],
    tol: float = DEFAULT_TOL,
    percent_equiv: bool = False,
    eliminate_dead_steps: bool = True,
    constants: Optional[Mapping[str, float]] = None,
) -> EvaluationReport:
    """
    Score predicted program texts by example id. Examples without a
    prediction count as failures on both metrics.
    """
    records = []
    for ex in examples:
        text = predictions.get(ex.id)
        if text is None:
            logger.info("no prediction for example", extra={"example": ex.id})
            text = ""
        records.append(PredictionRecord.from_text(ex, text, constants))

    failures = sorted(r.example_id for r in records if not execution_correct(r, tol, percent_equiv))
    return EvaluationReport(
        exe_acc=execution_accuracy(records, tol, percent_equiv),
        prog_acc=program_accuracy(records, eliminate_dead_steps),
        n=len(records),
        failures=failures,
    )


def report_table(report: EvaluationReport) -> Table:
    table = Table(title="Evaluation")
    table.add_column("metric")
    table.add_column("value", justify="right")
    table.add_row("n", str(report.n))
    table.add_row("exe acc", f"{report.exe_acc:.4f}")
    table.add_row("prog acc", f"{report.prog_acc:.4f}")
    table.add_row("failures", str(len(report.failures)))
    return table


def retrieval_table(scores: Mapping[str, float]) -> Table:
    table = Table(title="Retrieval")
    table.add_column("metric")
    table.add_column("value", justify="right")
    for name, value in scores.items():
        table.add_row(name, str(value) if name == "n" else f"{value:.4f}")
    return table
