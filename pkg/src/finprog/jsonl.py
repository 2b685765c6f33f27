"""JSONL artifacts with a provenance header line."""
import json
from pathlib import Path
from typing import Any, Dict, IO, Iterable, Iterator, Optional

from .errors import FileUnreadable, SchemaMismatch

PROVENANCE_KEY = "_provenance"


def dump_line(record: Dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def write_jsonl(
    out: IO[str],
    records: Iterable[Dict[str, Any]],
    provenance: Optional[Dict[str, Any]] = None,
) -> int:
    n = 0
    if provenance is not None:
        out.write(dump_line({PROVENANCE_KEY: provenance}) + "\n")
    for r in records:
        out.write(dump_line(r) + "\n")
        n += 1
    return n


def read_jsonl(path: Path) -> Iterator[Dict[str, Any]]:
    """Yield records, skipping the provenance header and blank lines."""
    try:
        f = Path(path).open("r", encoding="utf-8")
    except OSError as e:
        raise FileUnreadable(f"{path}: {e}") from None
    with f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaMismatch(f"{path}:{lineno}", str(e)) from None
            if not isinstance(record, dict):
                raise SchemaMismatch(f"{path}:{lineno}", "expected a JSON object")
            if PROVENANCE_KEY in record:
                continue
            yield record
