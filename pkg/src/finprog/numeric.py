"""Report-style number tokens: "$1,760", "14.1%", "(170.1)"."""
import math
import re
from dataclasses import dataclass

from .errors import NotANumber

_PLAIN_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?")


@dataclass(frozen=True)
class NumericToken:
    raw: str
    value: float
    percent: bool = False


def parse_numeric(raw: str) -> NumericToken:
    """
    Parse a number as written in financial reports.

    "$" and "," are stripped, a trailing "%" sets the percent flag (the value is
    kept at face value), and accounting negatives "(7)" become -7.
    """
    s = raw.strip()
    if not s:
        raise NotANumber(raw)

    negative = False
    if s.startswith("(") and s.endswith(")"):
        negative = True
        s = s[1:-1].strip()

    percent = s.endswith("%")
    if percent:
        s = s[:-1].strip()

    s = s.replace("$", "").replace(",", "").strip()
    if not _PLAIN_NUMBER.fullmatch(s):
        raise NotANumber(raw)

    value = float(s)
    if not math.isfinite(value):
        raise NotANumber(raw)
    if negative:
        value = -value
    return NumericToken(raw=raw, value=value, percent=percent)


def try_parse_numeric(raw: str) -> NumericToken | None:
    try:
        return parse_numeric(raw)
    except NotANumber:
        return None
