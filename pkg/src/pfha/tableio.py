"""Delimited-text helpers: schema-checked reading and deterministic writing."""

from __future__ import annotations

import csv
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError


def read_rows(path, required: Sequence[str], optional: Sequence[str] = ()) -> list[dict[str, str]]:
    """Read a comma-delimited file with a header row.

    Lines starting with ``#`` are skipped. Missing required columns raise
    :class:`DataError` naming the file; optional columns absent from the
    header come back as empty strings.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.lstrip().startswith("#")]
    if not lines:
        return []
    reader = csv.DictReader(lines)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    rows = []
    for raw in reader:
        row = {(k or "").strip(): (v or "").strip() for k, v in raw.items()}
        for c in optional:
            row.setdefault(c, "")
        rows.append(row)
    return rows


def parse_float(value: str, path, field: str, lineno: int) -> float:
    try:
        x = float(value)
    except ValueError:
        raise DataError(f"{path}:{lineno}: {field}={value!r} is not a number") from None
    if not math.isfinite(x):
        raise DataError(f"{path}:{lineno}: {field} is not finite")
    return x


def parse_timestamp(value: str) -> datetime:
    """ISO-8601 timestamp; a trailing ``Z`` is accepted, naive values are taken as UTC."""
    v = value.strip()
    if v.endswith("Z"):
        v = v[:-1] + "+00:00"
    ts = datetime.fromisoformat(v)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def fmt(x) -> str:
    """Nine significant digits, locale independent."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], provenance: str | None = None) -> None:
    """Write a CSV table with an optional leading ``# ...`` provenance line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
