"""In-memory real-time store with bounded retention and interval rollups.

Each registered variable owns a buffer kept sorted by timestamp.  Samples
with equal timestamps stay in arrival order.  The store never reads a wall
clock: every time-dependent operation takes ``now`` from the caller.
"""

from __future__ import annotations

import enum
import struct
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, replace
from math import fsum, isfinite

from plantbus.errors import (
    DuplicateName,
    InvalidName,
    InvalidRange,
    NonFiniteValue,
    UnknownVariable,
)

DEFAULT_WINDOW_MS = 600_000
DEFAULT_MAX_SAMPLES = 1_000_000
DEFAULT_TREND_INTERVAL_MS = 60_000


class Kind(str, enum.Enum):
    RAW = "raw"
    COMPUTED = "computed"


class Quality(str, enum.Enum):
    GOOD = "good"
    UNCERTAIN = "uncertain"
    BAD = "bad"

    @property
    def rank(self) -> int:
        return _QUALITY_RANK[self]

    @classmethod
    def worst(cls, qualities) -> "Quality":
        return max(qualities, key=lambda q: _QUALITY_RANK[q], default=cls.GOOD)


_QUALITY_RANK = {Quality.GOOD: 0, Quality.UNCERTAIN: 1, Quality.BAD: 2}


def check_name(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise InvalidName("variable name must be a nonempty string")
    if "," in name or any(ch.isspace() for ch in name):
        raise InvalidName(f"variable name {name!r} contains whitespace or a comma")
    return name


@dataclass(frozen=True, slots=True)
class VariableId:
    name: str
    kind: Kind = Kind.RAW

    def __str__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Sample:
    variable: VariableId
    timestamp: int
    value: float
    quality: Quality = Quality.GOOD


@dataclass(frozen=True)
class RetentionPolicy:
    window_ms: int = DEFAULT_WINDOW_MS
    max_samples_per_variable: int = DEFAULT_MAX_SAMPLES

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if self.max_samples_per_variable <= 0:
            raise ValueError("max_samples_per_variable must be positive")


@dataclass(frozen=True, slots=True)
class TrendPoint:
    variable: VariableId
    interval_start_ms: int
    interval_len_ms: int
    min: float
    max: float
    mean: float
    count: int

    @property
    def key(self):
        return (self.variable.name, self.interval_start_ms)


class _Series:
    __slots__ = ("var", "ts", "vals", "samples")

    def __init__(self, var: VariableId):
        self.var = var
        self.ts: list[int] = []
        self.vals: list[float] = []
        self.samples: list[Sample] = []

    def add(self, sample: Sample):
        t = sample.timestamp
        if not self.ts or t >= self.ts[-1]:
            self.ts.append(t)
            self.vals.append(sample.value)
            self.samples.append(sample)
        else:
            i = bisect_right(self.ts, t)
            self.ts.insert(i, t)
            self.vals.insert(i, sample.value)
            self.samples.insert(i, sample)

    def drop_oldest(self, k: int) -> int:
        if k <= 0:
            return 0
        del self.ts[:k]
        del self.vals[:k]
        del self.samples[:k]
        return k


def aggregate(variable: VariableId, ts, vals, interval_len_ms: int) -> list[TrendPoint]:
    """Aggregate timestamp-sorted samples into epoch-aligned trend points.

    The mean uses correctly rounded summation and is clamped into
    ``[min, max]`` so that the ordering invariant survives the final division.
    """
    out = []
    i, n = 0, len(ts)
    L = interval_len_ms
    while i < n:
        start = (ts[i] // L) * L
        j = bisect_left(ts, start + L, i)
        chunk = vals[i:j]
        lo, hi = min(chunk), max(chunk)
        mean = fsum(chunk) / len(chunk)
        mean = lo if mean < lo else hi if mean > hi else mean
        out.append(TrendPoint(variable, start, L, lo, hi, mean, j - i))
        i = j
    return out


class Store:
    """Thread-safe, bounded-retention sample store.

    >>> store = Store()
    >>> v = store.register_variable("boiler.temp")
    >>> store.insert(Sample(v, 1_000, 81.5))
    True
    >>> store.latest(v).value
    81.5
    """

    def __init__(self, retention: RetentionPolicy | None = None,
                 trend_interval_ms: int = DEFAULT_TREND_INTERVAL_MS,
                 trend_file=None):
        if trend_interval_ms <= 0:
            raise ValueError("trend_interval_ms must be positive")
        self.retention = retention or RetentionPolicy()
        self.trend_interval_ms = trend_interval_ms
        # default source/sink for query_trend and persistence
        self.trend_file = trend_file
        self._series: dict[str, _Series] = {}
        self._lock = threading.RLock()
        # lifetime tallies
        self.accepted = 0
        self.rejected = 0
        self.evicted = 0

    # -- registry -------------------------------------------------------------

    def register_variable(self, name: str, kind: Kind | str = Kind.RAW) -> VariableId:
        check_name(name)
        var = VariableId(name, Kind(kind))
        with self._lock:
            if name in self._series:
                raise DuplicateName(f"variable {name!r} already registered")
            self._series[name] = _Series(var)
        return var

    def variable(self, name) -> VariableId:
        return self._get(name).var

    def variables(self) -> list[VariableId]:
        with self._lock:
            return [s.var for s in self._series.values()]

    def __contains__(self, name):
        if isinstance(name, VariableId):
            name = name.name
        return name in self._series

    def __len__(self):
        return len(self._series)

    def _get(self, variable) -> _Series:
        name = variable.name if isinstance(variable, VariableId) else variable
        try:
            return self._series[name]
        except KeyError:
            raise UnknownVariable(f"unknown variable {name!r}") from None

    # -- samples --------------------------------------------------------------

    def insert(self, sample: Sample) -> bool:
        """Store ``sample``; return False if it is older than the retention horizon."""
        value = sample.value
        if not isinstance(value, float):
            value = float(value)
            sample = replace(sample, value=value)
        if not isfinite(value):
            raise NonFiniteValue(f"{sample.variable.name}: value {value!r} is not finite")
        if sample.timestamp < 0:
            raise InvalidRange(f"negative timestamp {sample.timestamp}")
        with self._lock:
            series = self._get(sample.variable)
            if series.var != sample.variable:
                raise UnknownVariable(
                    f"{sample.variable.name!r} is registered as {series.var.kind.value}")
            if series.ts and sample.timestamp < series.ts[-1] - self.retention.window_ms:
                self.rejected += 1
                return False
            series.add(sample)
            self.accepted += 1
        return True

    def latest(self, variable) -> Sample | None:
        with self._lock:
            series = self._get(variable)
            return series.samples[-1] if series.samples else None

    def range(self, variable, t0: int, t1: int) -> list[Sample]:
        if t0 > t1:
            raise InvalidRange(f"t0={t0} > t1={t1}")
        with self._lock:
            series = self._get(variable)
            lo = bisect_left(series.ts, t0)
            hi = bisect_right(series.ts, t1)
            return series.samples[lo:hi]

    def count(self, variable) -> int:
        with self._lock:
            return len(self._get(variable).ts)

    def enforce_retention(self, now: int) -> int:
        horizon = now - self.retention.window_ms
        cap = self.retention.max_samples_per_variable
        evicted = 0
        with self._lock:
            for series in self._series.values():
                evicted += series.drop_oldest(bisect_left(series.ts, horizon))
                evicted += series.drop_oldest(len(series.ts) - cap)
            self.evicted += evicted
        return evicted

    # -- trends ---------------------------------------------------------------

    def rollup(self, variable, t0: int, t1: int,
               interval_len_ms: int | None = None) -> list[TrendPoint]:
        """Trend points for every aligned interval overlapping ``[t0, t1)``.

        Each point aggregates all retained samples of its whole interval, so
        rollups over adjacent aligned ranges concatenate exactly.
        """
        L = self.trend_interval_ms if interval_len_ms is None else interval_len_ms
        if L <= 0:
            raise ValueError("interval_len_ms must be positive")
        if t0 > t1:
            raise InvalidRange(f"t0={t0} > t1={t1}")
        with self._lock:
            series = self._get(variable)
            if t0 == t1:
                return []
            first = (t0 // L) * L
            end = ((t1 - 1) // L) * L + L
            lo = bisect_left(series.ts, first)
            hi = bisect_left(series.ts, end)
            ts = series.ts[lo:hi]
            vals = series.vals[lo:hi]
            var = series.var
        return aggregate(var, ts, vals, L)

    def query_trend(self, variable, t0: int, t1: int, source=None) -> list[TrendPoint]:
        """Persisted trend points merged with the in-memory rollup.

        ``source`` is anything :func:`plantbus.rtdb.trendfile.read_trends`
        accepts; it defaults to the store's own trend file.  For an interval
        present in both, the in-memory point wins.
        """
        from plantbus.rtdb.trendfile import read_trends

        if t0 > t1:
            raise InvalidRange(f"t0={t0} > t1={t1}")
        var = self.variable(variable)
        source = self.trend_file if source is None else source
        merged: dict[int, TrendPoint] = {}
        if source is not None:
            for p in read_trends(source):
                if p.variable.name != var.name:
                    continue
                s = p.interval_start_ms
                if s < t1 and s + p.interval_len_ms > t0:
                    merged[s] = p if p.variable == var else replace(p, variable=var)
        for p in self.rollup(var, t0, t1):
            merged[p.interval_start_ms] = p
        return [merged[k] for k in sorted(merged)]


# -- sample wire format ---------------------------------------------------------
# ts int64 | value float64 | quality u8 | kind u8 | name (utf-8, rest of payload)

_SAMPLE = struct.Struct(">qdBB")
_Q_CODES = {Quality.GOOD: 0, Quality.UNCERTAIN: 1, Quality.BAD: 2}
_Q_FROM = {v: k for k, v in _Q_CODES.items()}
_K_CODES = {Kind.RAW: 0, Kind.COMPUTED: 1}
_K_FROM = {v: k for k, v in _K_CODES.items()}


def encode_sample(sample: Sample) -> bytes:
    return _SAMPLE.pack(sample.timestamp, sample.value, _Q_CODES[sample.quality],
                        _K_CODES[sample.variable.kind]) + sample.variable.name.encode()


def decode_sample(data: bytes) -> Sample:
    ts, value, q, k = _SAMPLE.unpack_from(data)
    name = bytes(data[_SAMPLE.size:]).decode()
    return Sample(VariableId(name, _K_FROM[k]), ts, value, _Q_FROM[q])


def sample_to_json(sample: Sample | None) -> dict | None:
    if sample is None:
        return None
    return {"variable": sample.variable.name, "kind": sample.variable.kind.value,
            "timestamp": sample.timestamp, "value": sample.value,
            "quality": sample.quality.value}


def sample_from_json(obj) -> Sample | None:
    if obj is None:
        return None
    return Sample(VariableId(obj["variable"], Kind(obj["kind"])), int(obj["timestamp"]),
                  float(obj["value"]), Quality(obj["quality"]))


def trend_to_json(p: TrendPoint) -> dict:
    return {"variable": p.variable.name, "kind": p.variable.kind.value,
            "interval_start_ms": p.interval_start_ms, "interval_len_ms": p.interval_len_ms,
            "min": p.min, "max": p.max, "mean": p.mean, "count": p.count}


def trend_from_json(obj) -> TrendPoint:
    return TrendPoint(VariableId(obj["variable"], Kind(obj["kind"])),
                      int(obj["interval_start_ms"]), int(obj["interval_len_ms"]),
                      float(obj["min"]), float(obj["max"]), float(obj["mean"]),
                      int(obj["count"]))


__all__ = [
    "Kind", "Quality", "VariableId", "Sample", "RetentionPolicy", "TrendPoint",
    "Store", "aggregate", "check_name", "encode_sample", "decode_sample",
    "sample_to_json", "sample_from_json", "trend_to_json", "trend_from_json",
    "DEFAULT_WINDOW_MS", "DEFAULT_MAX_SAMPLES", "DEFAULT_TREND_INTERVAL_MS",
]
