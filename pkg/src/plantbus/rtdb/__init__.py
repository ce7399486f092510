"""Data organization level: the real-time store and trend persistence."""

from plantbus.rtdb.store import (
    DEFAULT_MAX_SAMPLES,
    DEFAULT_TREND_INTERVAL_MS,
    DEFAULT_WINDOW_MS,
    Kind,
    Quality,
    RetentionPolicy,
    Sample,
    Store,
    TrendPoint,
    VariableId,
    aggregate,
    decode_sample,
    encode_sample,
)
from plantbus.rtdb.trendfile import TrendLog, format_record, parse_record, persist_trends, read_trends

__all__ = [
    "DEFAULT_MAX_SAMPLES", "DEFAULT_TREND_INTERVAL_MS", "DEFAULT_WINDOW_MS",
    "Kind", "Quality", "RetentionPolicy", "Sample", "Store", "TrendPoint", "VariableId",
    "aggregate", "decode_sample", "encode_sample",
    "TrendLog", "format_record", "parse_record", "persist_trends", "read_trends",
]
