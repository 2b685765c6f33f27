"""
Pretraining corpora built from solution programs:

- VIR: pseudo evidence sets of decreasing integrity and the ranking pairs between them
- VOP: single-operator examples from sub-programs whose operands are passage variables
- VKM: question + cell evidence with one occurrence of every keyphrase masked
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

from .corpus import EvidenceItem, HybridExample, cell_sentences
from .dsl_core import NumberLiteral, Operator, RowRef, Step, extract_variable_subprograms
from .errors import NoIrrelevantEvidence, RowNotFound
from .keyphrase import Keyphrase, extract_header_keyphrases, extract_textrank_keyphrases
from .log import get_logger
from .numeric import try_parse_numeric
from .text import MASK, tokenize

logger = get_logger(__name__)


def example_seed(global_seed: int, example_id: str) -> int:
    digest = hashlib.sha256(f"{global_seed}:{example_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class GenerationReport:
    examples: int = 0
    instances: int = 0
    skipped_examples: int = 0
    skipped_steps: int = 0
    ambiguous_operands: int = 0

    def merge(self, other: "GenerationReport") -> None:
        self.examples += other.examples
        self.instances += other.instances
        self.skipped_examples += other.skipped_examples
        self.skipped_steps += other.skipped_steps
        self.ambiguous_operands += other.ambiguous_operands


def _evidence_from_sentences(sentences: Sequence[str]) -> Tuple[EvidenceItem, ...]:
    return tuple(EvidenceItem(f"e{i}", s) for i, s in enumerate(sentences))


# ---------------------------------------------------------------- VIR

@dataclass(frozen=True)
class IntegritySet:
    level: int
    evidence: Tuple[EvidenceItem, ...]
    gold_count: int

    def sentences(self) -> List[str]:
        return [e.sentence for e in self.evidence]


@dataclass(frozen=True)
class RankPair:
    higher: IntegritySet
    lower: IntegritySet
    question: str
    example_id: str = ""

    def to_record(self) -> Dict[str, Any]:
        return {
            "example_id": self.example_id,
            "question": self.question,
            "higher": self.higher.sentences(),
            "lower": self.lower.sentences(),
            "levels": [self.higher.level, self.lower.level],
            "gold_counts": [self.higher.gold_count, self.lower.gold_count],
        }

    @classmethod
    def from_record(cls, r: Dict[str, Any]) -> "RankPair":
        u, v = r["levels"]
        gu, gv = r.get("gold_counts", [-1, -1])
        return cls(
            IntegritySet(u, _evidence_from_sentences(r["higher"]), gu),
            IntegritySet(v, _evidence_from_sentences(r["lower"]), gv),
            r["question"],
            r.get("example_id", ""),
        )


def _document_order(ex: HybridExample, items: Sequence[EvidenceItem]) -> Tuple[EvidenceItem, ...]:
    position = {c.id: i for i, c in enumerate(ex.candidates)}
    return tuple(sorted(items, key=lambda e: position[e.id]))


def _vir_sets_and_pool(
    ex: HybridExample, k: int, rng: random.Random
) -> Tuple[List[IntegritySet], List[EvidenceItem]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = list(ex.gold)
    pool = [c for c in ex.candidates if not c.is_gold]
    if not pool:
        raise NoIrrelevantEvidence(f"{ex.id}: every candidate is gold evidence")

    k_eff = min(k, len(gold), len(pool))
    current = list(gold)
    sets = [IntegritySet(0, _document_order(ex, current), len(gold))]
    for level in range(1, k_eff + 1):
        gold_positions = [i for i, e in enumerate(current) if e.is_gold]
        pos = rng.choice(gold_positions)
        current[pos] = pool.pop(rng.randrange(len(pool)))
        sets.append(IntegritySet(level, _document_order(ex, current), len(gold) - level))
    return sets, pool


def gen_vir_sets(ex: HybridExample, k: int, seed: int) -> List[IntegritySet]:
    """
    E^0 is the gold set; E^{i+1} swaps one remaining gold item of E^i for a
    distractor drawn without replacement. k is capped by the gold and
    distractor counts.
    """
    sets, _ = _vir_sets_and_pool(ex, k, random.Random(seed))
    return sets


def gen_noisy_vir_sets(ex: HybridExample, k: int, seed: int) -> List[IntegritySet]:
    """As gen_vir_sets, plus one extra distractor (the same one) in every set."""
    rng = random.Random(seed)
    sets, pool = _vir_sets_and_pool(ex, k, rng)
    if not pool:
        needed = len(sets)
        raise NoIrrelevantEvidence(f"{ex.id}: noisy ranking needs {needed} distractors")
    extra = pool.pop(rng.randrange(len(pool)))
    return [
        IntegritySet(s.level, _document_order(ex, [*s.evidence, extra]), s.gold_count)
        for s in sets
    ]


def gen_vir_pairs(sets: Sequence[IntegritySet], question: str = "", example_id: str = "") -> List[RankPair]:
    """All (E^u, E^v) with u < v: (k+1)k/2 pairs."""
    ordered = sorted(sets, key=lambda s: s.level)
    return [
        RankPair(ordered[u], ordered[v], question, example_id)
        for u in range(len(ordered))
        for v in range(u + 1, len(ordered))
    ]


# ---------------------------------------------------------------- VOP

@dataclass(frozen=True)
class OperandSpan:
    evidence_index: int
    token_start: int
    token_end: int  # exclusive


@dataclass(frozen=True)
class OperatorExample:
    question: str
    evidence: Tuple[EvidenceItem, ...]
    operand_spans: Tuple[OperandSpan, ...]
    label: Operator
    values: Tuple[float, ...] = ()
    example_id: str = ""

    def token_sequence(self) -> Tuple[List[str], List[int]]:
        """Question + evidence tokens and the position of each operand's first token."""
        tokens = tokenize(self.question)
        offsets = []
        for e in self.evidence:
            offsets.append(len(tokens))
            tokens.extend(tokenize(e.sentence))
        positions = [offsets[s.evidence_index] + s.token_start for s in self.operand_spans]
        return tokens, positions

    def to_record(self) -> Dict[str, Any]:
        return {
            "example_id": self.example_id,
            "question": self.question,
            "evidence": [e.sentence for e in self.evidence],
            "spans": [[s.evidence_index, s.token_start, s.token_end] for s in self.operand_spans],
            "label": self.label.value,
            "values": list(self.values),
        }

    @classmethod
    def from_record(cls, r: Dict[str, Any]) -> "OperatorExample":
        return cls(
            r["question"],
            _evidence_from_sentences(r["evidence"]),
            tuple(OperandSpan(*s) for s in r["spans"]),
            Operator(r["label"]),
            tuple(r.get("values", ())),
            r.get("example_id", ""),
        )


def _step_values(step: Step, ex: HybridExample) -> Optional[List[float]]:
    if all(isinstance(o, NumberLiteral) for o in step.operands):
        return [o.value for o in step.operands]
    if step.op.is_table and isinstance(step.operands[0], RowRef):
        try:
            row = ex.table.find_row(step.operands[0].name)
        except RowNotFound:
            return None
        # every numeric cell of the row is an operand
        return [t.value for t in row.numeric_cells()]
    return None


def gen_vop(ex: HybridExample, report: Optional[GenerationReport] = None) -> List[OperatorExample]:
    """
    One example per variable sub-program (and per table-operator step), with
    each operand located at its first matching token in the gold evidence.
    Steps with an operand that cannot be located are skipped and counted.
    """
    report = report if report is not None else GenerationReport()
    evidence = ex.gold
    numeric = [[try_parse_numeric(t) for t in tokenize(e.sentence)] for e in evidence]
    matches_by_value: Dict[float, List[Tuple[int, int]]] = {}
    for ei, toks in enumerate(numeric):
        for ti, tok in enumerate(toks):
            if tok is not None:
                matches_by_value.setdefault(tok.value, []).append((ei, ti))

    variable_steps = extract_variable_subprograms(ex.program)
    out: List[OperatorExample] = []
    for step in ex.program.steps:
        if step not in variable_steps and not step.op.is_table:
            continue
        values = _step_values(step, ex)
        if not values or len(values) < 2:
            report.skipped_steps += 1
            continue

        spans: List[OperandSpan] = []
        used = set()
        for v in values:
            matches = matches_by_value.get(v, [])
            if not matches:
                break
            if len(matches) > 1:
                report.ambiguous_operands += 1
                logger.debug("operand value occurs more than once", extra={"example": ex.id, "value": v})
            ei, ti = next((m for m in matches if m not in used), matches[0])
            used.add((ei, ti))
            spans.append(OperandSpan(ei, ti, ti + 1))

        if len(spans) != len(values):
            report.skipped_steps += 1
            logger.info("operand not found in gold evidence", extra={"example": ex.id, "op": step.op.value})
            continue
        out.append(OperatorExample(ex.question, evidence, tuple(spans), step.op, tuple(values), ex.id))

    report.instances += len(out)
    return out


# ---------------------------------------------------------------- VKM

@dataclass(frozen=True)
class MaskedExample:
    question: str
    masked_sequence: Tuple[str, ...]
    targets: Tuple[Tuple[int, str], ...]
    example_id: str = ""
    # (start, length) of every masked keyphrase occurrence
    phrase_spans: Tuple[Tuple[int, int], ...] = ()

    @property
    def mask_positions(self) -> List[int]:
        return [p for p, _ in self.targets]

    def to_record(self) -> Dict[str, Any]:
        return {
            "example_id": self.example_id,
            "question": self.question,
            "tokens": list(self.masked_sequence),
            "mask_positions": self.mask_positions,
            "targets": [t for _, t in self.targets],
            "phrase_spans": [list(s) for s in self.phrase_spans],
        }

    @classmethod
    def from_record(cls, r: Dict[str, Any]) -> "MaskedExample":
        return cls(
            r["question"],
            tuple(r["tokens"]),
            tuple(zip(r["mask_positions"], r["targets"])),
            r.get("example_id", ""),
            tuple((int(s), int(n)) for s, n in r.get("phrase_spans", [])),
        )


def cell_evidence(ex: HybridExample) -> List[str]:
    """Gold evidence with table rows split into one sentence per cell."""
    out: List[str] = []
    for g in ex.gold:
        if g.source == "table" and g.row_index is not None:
            out.extend(cell_sentences(ex.raw_table, g.row_index))
        else:
            out.append(g.sentence)
    return out


def vkm_keyphrases(
    ex: HybridExample,
    window: int = 2,
    stopwords: Optional[FrozenSet[str]] = None,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> List[Keyphrase]:
    phrases = extract_textrank_keyphrases(
        ex.question, cell_evidence(ex), window, stopwords, damping, tol, max_iter
    )
    gold_rows = [g.row_index for g in ex.gold if g.source == "table" and g.row_index is not None]
    if gold_rows:
        phrases += extract_header_keyphrases(ex.raw_table, gold_rows)

    seen = set()
    unique = []
    for kp in phrases:
        if kp.tokens not in seen:
            seen.add(kp.tokens)
            unique.append(kp)
    return unique


def _occurrences(phrase: Tuple[str, ...], lowered: Sequence[str], boundaries: Sequence[int]) -> List[int]:
    """Start positions of non-overlapping occurrences that stay inside one segment."""
    n = len(phrase)
    starts = []
    for lo, hi in zip(boundaries, boundaries[1:]):
        i = lo
        while i + n <= hi:
            if tuple(lowered[i:i + n]) == phrase:
                starts.append(i)
                i += n
            else:
                i += 1
    return starts


def gen_vkm(
    ex: HybridExample,
    seed: int,
    window: int = 2,
    stopwords: Optional[FrozenSet[str]] = None,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> List[MaskedExample]:
    """Mask one uniformly chosen occurrence of every keyphrase seen at least twice."""
    rng = random.Random(seed)
    segments = [ex.question, *cell_evidence(ex)]

    tokens: List[str] = []
    boundaries = [0]
    for s in segments:
        tokens.extend(tokenize(s))
        boundaries.append(len(tokens))
    lowered = [t.lower() for t in tokens]

    masked = list(tokens)
    targets: Dict[int, str] = {}
    spans: List[Tuple[int, int]] = []
    for kp in vkm_keyphrases(ex, window, stopwords, damping, tol, max_iter):
        starts = _occurrences(kp.tokens, lowered, boundaries)
        if len(starts) < 2:
            continue
        n = len(kp.tokens)
        free = [s for s in starts if not any(p in targets for p in range(s, s + n))]
        if not free:
            continue
        start = rng.choice(free)
        spans.append((start, n))
        for p in range(start, start + n):
            targets[p] = tokens[p]
            masked[p] = MASK

    if not targets:
        return []
    return [MaskedExample(ex.question, tuple(masked), tuple(sorted(targets.items())), ex.id, tuple(sorted(spans)))]
