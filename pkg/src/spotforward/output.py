"""Deterministic CSV and JSON emission."""

from __future__ import annotations

import io
import json
import math

import numpy as np

SIG_DIGITS = 12


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0.0:
            return "0"
        return np.format_float_positional(x, precision=SIG_DIGITS, unique=False,
                                          fractional=False, trim="-")
    return str(x)


def to_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows and not columns:
        return ""
    columns = columns or list(rows[0])
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_csv_cell(fmt(r.get(c))) for c in columns) + "\n")
    return buf.getvalue()


def _csv_cell(s: str) -> str:
    return f'"{s}"' if ("," in s or '"' in s) else s


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def to_json(command: str, rows: list[dict]) -> str:
    return json.dumps({"command": command, "rows": _jsonable(rows)}, indent=2, sort_keys=False) + "\n"


def paths_table(columns: dict) -> list[dict]:
    names = list(columns)
    n = len(next(iter(columns.values())))
    return [{k: columns[k][i] for k in names} for i in range(n)]
