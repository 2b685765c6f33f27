"""Keyphrases that describe variables: TextRank over text, and table headers."""
from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import STOPLIST_ENV
from .corpus import cell_sentences
from .errors import EmptyGraph, FileUnreadable
from .executor import RawTable
from .log import get_logger
from .text import is_word, tokenize, tokenize_spans

logger = get_logger(__name__)

MIN_FREQUENCY = 2


@lru_cache(maxsize=8)
def _read_stoplist(path: Optional[str]) -> FrozenSet[str]:
    if path is None:
        text = resources.files(__package__).joinpath("data/stopwords_en.txt").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise FileUnreadable(f"stoplist {path}: {e}") from None
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


def load_stopwords(path: Optional[Path] = None) -> FrozenSet[str]:
    """Stoplist file, one token per line. FINPROG_STOPLIST overrides the shipped list."""
    if path is None:
        path = os.getenv(STOPLIST_ENV) or None
    return _read_stoplist(str(path) if path else None)


# ---------------------------------------------------------------- graph + PageRank

@dataclass(frozen=True)
class TokenGraph:
    nodes: Tuple[str, ...]
    # undirected edge weights keyed by the sorted node pair
    weights: Dict[Tuple[str, str], int]

    def adjacency(self) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.nodes)}
        a = np.zeros((len(self.nodes), len(self.nodes)), dtype=np.float64)
        for (u, v), w in self.weights.items():
            a[index[u], index[v]] = w
            a[index[v], index[u]] = w
        return a


def build_token_graph(tokens: Sequence[str], window: int = 2) -> TokenGraph:
    """Co-occurrence graph: tokens closer than ``window`` positions share an edge."""
    nodes: List[str] = []
    seen = set()
    for t in tokens:
        if t not in seen:
            seen.add(t)
            nodes.append(t)

    weights: Dict[Tuple[str, str], int] = defaultdict(int)
    for i, t in enumerate(tokens):
        for u in tokens[i + 1:i + window]:
            if u != t:
                weights[(t, u) if t < u else (u, t)] += 1
    return TokenGraph(tuple(nodes), dict(weights))


def pagerank(
    g: TokenGraph,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> Dict[str, float]:
    """Weighted PageRank by power iteration; scores sum to 1."""
    n = len(g.nodes)
    if n == 0:
        raise EmptyGraph("token graph has no nodes")

    adj = g.adjacency()
    strength = adj.sum(axis=1)
    dangling = strength == 0
    # adj is symmetric, so adj[i, j] / strength[j] is already column-stochastic
    transition = np.divide(adj, strength, out=np.zeros_like(adj), where=~dangling)

    scores = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        new = (1.0 - damping) / n + damping * (transition @ scores + scores[dangling].sum() / n)
        delta = np.abs(new - scores).max()
        scores = new
        if delta < tol:
            break
    else:
        logger.warning("pagerank did not converge", extra={"max_iter": max_iter, "nodes": n})

    scores = scores / scores.sum()
    return dict(zip(g.nodes, scores.tolist()))


# ---------------------------------------------------------------- keyphrases

@dataclass(frozen=True)
class Keyphrase:
    tokens: Tuple[str, ...]
    surface: str
    frequency: int
    score: float = 0.0
    source: str = "textrank"


def count_occurrences(phrase: Sequence[str], sequences: Iterable[Sequence[str]]) -> int:
    """Non-overlapping occurrences of ``phrase`` (lowercased tokens) in each sequence."""
    n = len(phrase)
    total = 0
    for seq in sequences:
        i = 0
        while i + n <= len(seq):
            if tuple(seq[i:i + n]) == tuple(phrase):
                total += 1
                i += n
            else:
                i += 1
    return total


def extract_textrank_keyphrases(
    question: str,
    gold_evidence: Sequence[str],
    window: int = 2,
    stopwords: Optional[FrozenSet[str]] = None,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> List[Keyphrase]:
    if stopwords is None:
        stopwords = load_stopwords()

    segments = [question, *gold_evidence]
    spans = [tokenize_spans(s) for s in segments]
    lowered = [[t.lower() for t, _, _ in seg] for seg in spans]

    content = [t for seq in lowered for t in seq if is_word(t) and t not in stopwords]
    if not content:
        return []

    graph = build_token_graph(content, window)
    scores = pagerank(graph, damping, tol, max_iter)
    first_seen = {t: i for i, t in reversed(list(enumerate(content)))}
    ranked = sorted(graph.nodes, key=lambda t: (-scores[t], first_seen[t]))
    selected = set(ranked[:math.ceil(len(ranked) / 3)])

    # merge selected tokens that are adjacent in the original text
    found: Dict[Tuple[str, ...], Tuple[str, int]] = {}
    order = 0
    for seg_text, seg_spans, seg_lower in zip(segments, spans, lowered):
        i = 0
        while i < len(seg_lower):
            if seg_lower[i] not in selected:
                i += 1
                continue
            j = i
            while j + 1 < len(seg_lower) and seg_lower[j + 1] in selected:
                j += 1
            phrase = tuple(seg_lower[i:j + 1])
            if phrase not in found:
                found[phrase] = (seg_text[seg_spans[i][1]:seg_spans[j][2]], order)
                order += 1
            i = j + 1

    phrases = []
    for phrase, (surface, first) in found.items():
        freq = count_occurrences(phrase, lowered)
        if freq < MIN_FREQUENCY:
            continue
        score = sum(scores[t] for t in phrase)
        phrases.append((-score, first, Keyphrase(phrase, surface, freq, score, "textrank")))
    phrases.sort(key=lambda x: (x[0], x[1]))
    return [kp for _, _, kp in phrases]


def extract_header_keyphrases(table: RawTable, rows: Optional[Sequence[int]] = None) -> List[Keyphrase]:
    """
    Row and column headers mentioned at least twice in the linearized cells of
    ``rows`` (all data rows by default).
    """
    if len(table) < 2 or not table[0]:
        return []
    if rows is None:
        rows = range(1, len(table))

    cell_tokens = [
        [t.lower() for t in tokenize(sentence)]
        for r in rows
        for sentence in cell_sentences(table, r)
    ]

    headers = [str(h) for h in table[0][1:]] + [str(table[r][0]) for r in rows if table[r]]
    out: List[Keyphrase] = []
    seen = set()
    for position, header in enumerate(headers):
        tokens = tuple(t.lower() for t in tokenize(header))
        if not any(is_word(t) for t in tokens) or tokens in seen:
            continue
        seen.add(tokens)
        freq = count_occurrences(tokens, cell_tokens)
        if freq >= MIN_FREQUENCY:
            out.append(Keyphrase(tokens, " ".join(header.split()), freq, float(freq), "header"))
    out.sort(key=lambda kp: -kp.frequency)
    return out
