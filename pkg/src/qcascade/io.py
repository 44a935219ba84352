"""Deterministic CSV emission."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from .observables import CorrelationRecord

__all__ = ["format_float", "record_header", "emit_records", "write_table"]

SIGNIFICANT_DIGITS = 12


def format_float(x: float) -> str:
    """12 significant digits, locale independent; NaN and missing values become empty."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), f".{SIGNIFICANT_DIGITS}g")


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def record_header(n_max: int) -> list[str]:
    return (
        ["pump_rate", "system", "mean_n"]
        + [f"g{n}" for n in range(2, n_max + 1)]
        + ["cutoff_s", "cutoff_t", "converged"]
    )


def emit_records(records: Sequence[CorrelationRecord], path, n_max: int | None = None) -> Path:
    """Write records sorted by ``(pump_rate, system)``. Orders without a value stay empty."""
    if not records:
        raise ValueError("no records to write")
    if n_max is None:
        n_max = max((max(r.g) for r in records if r.g), default=2)
    rows = []
    for r in sorted(records, key=lambda r: (r.pump_rate, r.system)):
        rows.append(
            [r.pump_rate, r.system, r.mean_n]
            + [r.g.get(n, math.nan) for n in range(2, n_max + 1)]
            + [r.cutoff_s, r.cutoff_t, bool(r.converged)]
        )
    return write_table(path, record_header(n_max), rows)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
