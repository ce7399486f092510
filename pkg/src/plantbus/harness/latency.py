"""Latency reports built from recorded durations, and the RPC probe."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from plantbus.errors import SessionError

QUANTILES = (0.50, 0.90, 0.95, 0.99)


def nearest_rank(sorted_values, q: float):
    """Nearest-rank quantile of an ascending sequence."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(q * n))
    return sorted_values[min(rank, n) - 1]


@dataclass(frozen=True)
class LatencyReport:
    label: str
    sample_count: int
    quantiles: dict
    min: float
    max: float
    mean: float
    # wall-clock time the report was made; excluded from equality checks
    created_at: float = field(default=0.0, compare=False)

    @classmethod
    def from_durations_ns(cls, label: str, durations_ns) -> "LatencyReport":
        values = sorted(d / 1000.0 for d in durations_ns)
        if not values:
            raise ValueError(f"{label}: no samples recorded")
        qs = {q: nearest_rank(values, q) for q in QUANTILES}
        mean = math.fsum(values) / len(values)
        mean = min(max(mean, values[0]), values[-1])
        return cls(label, len(values), qs, values[0], values[-1], mean, time.time())

    def check(self):
        qs = [self.quantiles[q] for q in QUANTILES]
        assert self.sample_count >= 1
        assert all(a <= b for a, b in zip(qs, qs[1:])), "quantiles not monotone"
        assert self.min <= qs[0] <= qs[-1] <= self.max
        return self

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "sample_count": self.sample_count,
            "unit": "us",
            "quantiles": {f"p{round(q * 100)}": v for q, v in self.quantiles.items()},
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "created_at": self.created_at,
        }


def measure_rpc(channel, n: int, payload_size: int, method: str = "echo",
                timeout_ms: int = 5000, seed: int | None = None) -> LatencyReport:
    """Issue ``n`` sequential echo calls and report their round-trip times.

    A failing call re-raises its error with ``completed`` set to the number
    of calls that finished before it.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = random.Random(seed)
    durations = []
    clock = time.perf_counter_ns
    for i in range(n):
        payload = rng.randbytes(payload_size)
        t0 = clock()
        try:
            reply = channel.call(method, payload, timeout_ms)
        except Exception as exc:
            exc.completed = i
            raise
        durations.append(clock() - t0)
        if reply != payload:
            raise SessionError(f"echo mismatch on call {i}")
    return LatencyReport.from_durations_ns(f"rpc:{method}:{payload_size}B", durations)
