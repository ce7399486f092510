"""Status displays and period usage reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import fsum

from plantbus.errors import InvalidRange


@dataclass(frozen=True)
class StatusRow:
    variable: str
    value: float | None
    timestamp: int | None
    age_ms: int | None
    quality: str | None
    no_data: bool = False


@dataclass(frozen=True)
class StatusReport:
    generated_at: int
    rows: tuple

    def to_dict(self) -> dict:
        return {"report": "status", "generated_at": self.generated_at,
                "rows": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class UsageReport:
    variable: str
    t0: int
    t1: int
    total_count: int
    min: float | None
    max: float | None
    mean: float | None

    def to_dict(self) -> dict:
        return {"report": "usage", **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def status_snapshot(variables, store, now: int) -> StatusReport:
    rows = []
    for v in variables:
        name = v.name if hasattr(v, "name") else v
        s = store.latest(name)
        if s is None:
            rows.append(StatusRow(name, None, None, None, None, no_data=True))
        else:
            rows.append(StatusRow(name, s.value, s.timestamp, now - s.timestamp,
                                  s.quality.value))
    return StatusReport(now, tuple(rows))


def summarize(points, variable: str, t0: int, t1: int) -> UsageReport:
    points = list(points)
    total = sum(p.count for p in points)
    if total == 0:
        return UsageReport(variable, t0, t1, 0, None, None, None)
    lo = min(p.min for p in points)
    hi = max(p.max for p in points)
    mean = fsum(p.mean * p.count for p in points) / total
    mean = min(max(mean, lo), hi)
    return UsageReport(variable, t0, t1, total, lo, hi, mean)


def period_report(variable, t0: int, t1: int, store, trend_source=None) -> UsageReport:
    """Aggregate the trend points of ``[t0, t1)`` into one usage summary.

    The mean is weighted by each interval's sample count.
    """
    if t0 > t1:
        raise InvalidRange(f"t0={t0} > t1={t1}")
    name = variable.name if hasattr(variable, "name") else variable
    return summarize(store.query_trend(name, t0, t1, trend_source), name, t0, t1)
