"""Append-only text persistence for trend points.

One record per LF-terminated line::

    variable,interval_start_ms,interval_len_ms,min,max,mean,count

Reals use 17 significant digits so a write/read cycle is exact.  Lines that
start with ``#`` are comments.
"""

from __future__ import annotations

import io
import os
from pathlib import Path

from plantbus.errors import DuplicateTrendKey, InvalidName, MalformedTrendRecord, SinkWriteFailure
from plantbus.rtdb.store import Kind, TrendPoint, VariableId, check_name


def format_real(x: float) -> str:
    return format(x, ".17g")


def format_record(p: TrendPoint) -> str:
    return ",".join((
        p.variable.name,
        str(p.interval_start_ms),
        str(p.interval_len_ms),
        format_real(p.min),
        format_real(p.max),
        format_real(p.mean),
        str(p.count),
    )) + "\n"


def _int(field, what):
    # base-10 integers without padding or sign decoration
    if not field or not (field.isdigit() or (field[0] == "-" and field[1:].isdigit())):
        raise ValueError(f"{what} is not a base-10 integer: {field!r}")
    return int(field)


def parse_record(line: str, line_no: int) -> TrendPoint:
    fields = line.rstrip("\n").split(",")
    if len(fields) != 7:
        raise MalformedTrendRecord(line_no, f"expected 7 fields, got {len(fields)}")
    name, start, length, lo, hi, mean, count = fields
    try:
        check_name(name)
        start = _int(start, "interval_start_ms")
        length = _int(length, "interval_len_ms")
        count = _int(count, "count")
        lo, hi, mean = float(lo), float(hi), float(mean)
    except (ValueError, InvalidName) as exc:
        raise MalformedTrendRecord(line_no, str(exc)) from None
    if length <= 0:
        raise MalformedTrendRecord(line_no, "interval_len_ms must be positive")
    if start % length:
        raise MalformedTrendRecord(line_no, "interval_start_ms is not aligned")
    if count < 1:
        raise MalformedTrendRecord(line_no, "count must be at least 1")
    if not (lo <= mean <= hi):
        raise MalformedTrendRecord(line_no, "expected min <= mean <= max")
    return TrendPoint(VariableId(name, Kind.RAW), start, length, lo, hi, mean, count)


def iter_records(lines):
    for line_no, line in enumerate(lines, start=1):
        if line.startswith("#"):
            continue
        yield parse_record(line, line_no)


def read_trends(source) -> list[TrendPoint]:
    """Read every trend point from a path, a :class:`TrendLog`, or lines of text.

    Points come back labelled ``raw``: the file does not record the kind.
    """
    if isinstance(source, TrendLog):
        return source.points()
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        if not path.exists():
            return []
        with path.open("r", encoding="utf-8", newline="\n") as fh:
            return list(iter_records(fh))
    if isinstance(source, io.TextIOBase) and source.seekable():
        source.seek(0)
    return list(iter_records(source))


class TrendLog:
    """An append-only trend sink backed by a file path or an open text stream.

    Keys already present (read from the file on first use, or written through
    this object) cannot be appended again.
    """

    def __init__(self, target):
        if isinstance(target, (str, os.PathLike)):
            self.path: Path | None = Path(target)
            self.stream = None
        else:
            self.path = None
            self.stream = target
        self._keys: set | None = None

    def __repr__(self):
        return f"TrendLog({self.path or self.stream!r})"

    def keys(self) -> set:
        if self._keys is None:
            self._keys = {p.key for p in self.points()}
        return self._keys

    def points(self) -> list[TrendPoint]:
        if self.path is not None:
            return read_trends(self.path)
        if self.stream.seekable() and self.stream.readable():
            pos = self.stream.tell()
            try:
                self.stream.seek(0)
                return list(iter_records(self.stream))
            finally:
                self.stream.seek(pos)
        return []

    def append(self, points) -> int:
        points = list(points)
        if not points:
            return 0
        keys = self.keys()
        batch = set()
        prev = None
        for p in points:
            k = p.key
            if k in keys or k in batch:
                raise DuplicateTrendKey(f"trend for {k[0]!r} at {k[1]} already persisted")
            if prev is not None and k < prev:
                raise ValueError("points must be sorted by (variable, interval_start)")
            batch.add(k)
            prev = k
        text = "".join(format_record(p) for p in points)
        try:
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
            else:
                if self.stream.seekable():
                    self.stream.seek(0, io.SEEK_END)
                self.stream.write(text)
                self.stream.flush()
        except OSError as exc:
            raise SinkWriteFailure(str(exc)) from exc
        keys.update(batch)
        return len(points)


def persist_trends(points, sink) -> int:
    """Append ``points`` to ``sink`` (a :class:`TrendLog`, path, or text stream)."""
    if not isinstance(sink, TrendLog):
        sink = TrendLog(sink)
    return sink.append(points)
