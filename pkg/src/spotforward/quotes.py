"""Market quotes and per-tenor summary statistics of the forward differential."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ValidationError

log = logging.getLogger(__name__)

HEADER = ["date", "tenor_months", "fwd_onshore", "fwd_offshore", "spot_onshore", "spot_offshore"]
TENORS = (1, 2, 3, 6, 12)


@dataclass(frozen=True)
class QuoteRow:
    date: dt.date
    tenor_months: int
    forward_onshore: float
    forward_offshore: float
    spot_onshore: float
    spot_offshore: float

    def __post_init__(self):
        if self.tenor_months not in TENORS:
            raise ValidationError("tenor_months", f"must be one of {TENORS}")
        for name in ("forward_onshore", "forward_offshore", "spot_onshore", "spot_offshore"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(name, "price must be positive")


@dataclass(frozen=True)
class WedgeStats:
    tenor_months: int
    n: int
    mean: float
    std: float
    q25: float
    median: float
    q75: float
    spot_log_ratio_mean: float


def annualized_ratio(row: QuoteRow) -> float:
    """(12 / tenor) * ln(F_onshore / F_offshore)."""
    return 12.0 / row.tenor_months * math.log(row.forward_onshore / row.forward_offshore)


def read_quotes(path) -> list[QuoteRow]:
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise ValidationError("quotes", f"header must be exactly {','.join(HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not x.strip() for x in rec):
                continue
            if len(rec) != len(HEADER):
                raise ValidationError("quotes", f"line {lineno}: expected {len(HEADER)} fields")
            try:
                rows.append(QuoteRow(dt.date.fromisoformat(rec[0].strip()), int(rec[1]),
                                     *(float(x) for x in rec[2:])))
            except ValueError as e:
                if isinstance(e, ValidationError):
                    raise ValidationError(e.field, f"line {lineno}: {e.message}") from None
                raise ValidationError("quotes", f"line {lineno}: {e}") from None
    return rows


def wedge_stats(rows) -> list[WedgeStats]:
    """Mean, sample std, type-7 quartiles per tenor; empty tenors are skipped."""
    out = []
    for tenor in TENORS:
        group = [r for r in rows if r.tenor_months == tenor]
        if not group:
            log.warning("no quotes for tenor %d months; skipped", tenor)
            continue
        x = np.array([annualized_ratio(r) for r in group])
        q25, med, q75 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
        spot = np.mean([math.log(r.spot_onshore / r.spot_offshore) for r in group])
        out.append(WedgeStats(tenor, len(x), float(x.mean()),
                              float(x.std(ddof=1)) if len(x) > 1 else 0.0,
                              float(q25), float(med), float(q75), float(spot)))
    return out
