"""
Tokenizer shared by keyphrase extraction, corpus generation and the reference
model: whitespace splitting with punctuation split off, except that report
numbers ("$1,760", "14.1%", "(170.1)") stay whole.
"""
import re
from typing import List, Tuple

_TOKEN = re.compile(
    r"\$?\(?(?:(?<!\w)-)?\d(?:[\d,]*\d)?(?:\.\d+)?\)?%?"  # report numbers
    r"|[^\W_]+"                                          # words
    r"|[^\w\s]|_"                                        # single punctuation marks
)

MASK = "[MASK]"


def tokenize(text: str) -> List[str]:
    return _TOKEN.findall(text)


def tokenize_spans(text: str) -> List[Tuple[str, int, int]]:
    """Tokens with their character offsets in ``text``."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN.finditer(text)]


def is_word(token: str) -> bool:
    return any(ch.isalnum() for ch in token)
