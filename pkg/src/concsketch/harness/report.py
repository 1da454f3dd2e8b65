"""CSV output with a fixed header and deterministic float formatting."""

from __future__ import annotations

import csv
import os
from typing import Iterable, Mapping, Sequence

__all__ = ["report_emit", "report_read", "format_value"]


def format_value(v) -> str:
    # repr round-trips floats exactly and is stable across runs
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def report_emit(rows: Iterable[Mapping], path, columns: Sequence[str] | None = None) -> int:
    """Overwrite ``path`` with a CSV of ``rows``; returns the number of rows.

    ``columns`` fixes the header (required when ``rows`` may be empty);
    otherwise the first row's keys are used.
    """
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ValueError("empty report needs explicit columns")
        columns = list(rows[0])
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            missing = [c for c in columns if c not in row]
            if missing:
                raise KeyError(f"row lacks columns {missing}")
            w.writerow([format_value(row[c]) for c in columns])
    os.replace(tmp, path)
    return len(rows)


def report_read(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
