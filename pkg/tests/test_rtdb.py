import io
import math
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rel_close, rollup_oracle
from plantbus.errors import (
    DuplicateName,
    DuplicateTrendKey,
    InvalidName,
    InvalidRange,
    MalformedTrendRecord,
    NonFiniteValue,
    SinkWriteFailure,
    UnknownVariable,
)
from plantbus.rtdb import (
    Kind,
    Quality,
    RetentionPolicy,
    Sample,
    Store,
    TrendLog,
    TrendPoint,
    VariableId,
    decode_sample,
    encode_sample,
    format_record,
    parse_record,
    persist_trends,
    read_trends,
)


def fill(store, var, pairs):
    for t, v in pairs:
        store.insert(Sample(var, t, v))


# -- registerVariable ----------------------------------------------------------

def test_register_returns_variable_id():
    assert Store().register_variable("boiler.temp", Kind.RAW) == VariableId("boiler.temp", Kind.RAW)


def test_register_twice_is_duplicate():
    s = Store()
    s.register_variable("boiler.temp")
    with pytest.raises(DuplicateName):
        s.register_variable("boiler.temp", Kind.COMPUTED)


@pytest.mark.parametrize("name", ["a b", "", "a,b", "tab\there", "new\nline"])
def test_register_rejects_bad_names(name):
    with pytest.raises(InvalidName):
        Store().register_variable(name)


def test_registered_variable_starts_empty():
    s = Store()
    v = s.register_variable("x")
    assert s.latest(v) is None and s.range(v, 0, 10**12) == []


# -- insert / latest / range ---------------------------------------------------

def test_insert_in_order_and_range():
    s = Store()
    v = s.register_variable("x")
    assert s.insert(Sample(v, 1, 1.0)) and s.insert(Sample(v, 2, 2.0))
    assert [x.timestamp for x in s.range(v, 0, 10)] == [1, 2]


def test_insert_older_than_window_is_rejected():
    s = Store(RetentionPolicy(600_000))
    v = s.register_variable("x")
    assert s.insert(Sample(v, 700_000, 1.0))
    assert s.insert(Sample(v, 50_000, 2.0)) is False
    assert [x.timestamp for x in s.range(v, 0, 10**9)] == [700_000]
    assert s.rejected == 1


def test_insert_exactly_at_horizon_is_accepted():
    s = Store(RetentionPolicy(600_000))
    v = s.register_variable("x")
    s.insert(Sample(v, 700_000, 1.0))
    assert s.insert(Sample(v, 100_000, 2.0))


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_insert_non_finite(bad):
    s = Store()
    v = s.register_variable("x")
    with pytest.raises(NonFiniteValue):
        s.insert(Sample(v, 1, bad))
    assert s.count(v) == 0


def test_insert_unknown_variable():
    with pytest.raises(UnknownVariable):
        Store().insert(Sample(VariableId("ghost"), 1, 1.0))


def test_insert_rejects_kind_mismatch():
    s = Store()
    s.register_variable("x", Kind.RAW)
    with pytest.raises(UnknownVariable):
        s.insert(Sample(VariableId("x", Kind.COMPUTED), 1, 1.0))


def test_latest_empty_is_none():
    s = Store()
    assert s.latest(s.register_variable("x")) is None


def test_latest_is_max_timestamp_not_arrival():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(1, 1.0), (2, 2.0)])
    assert s.latest(v).timestamp == 2
    w = s.register_variable("y")
    fill(s, w, [(5, 5.0), (4, 4.0)])
    assert s.latest(w).timestamp == 5


def test_latest_unknown_variable():
    with pytest.raises(UnknownVariable):
        Store().latest("nope")


def test_range_closed_interval_examples():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(1, 1.0), (2, 2.0), (3, 3.0), (10, 10.0)])
    assert [x.timestamp for x in s.range(v, 2, 3)] == [2, 3]
    assert [x.timestamp for x in s.range(v, 10, 10)] == [10]
    with pytest.raises(InvalidRange):
        s.range(v, 5, 1)


def test_duplicate_timestamps_keep_arrival_order():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(5, 1.0), (3, 0.0), (5, 2.0), (5, 3.0)])
    assert [x.value for x in s.range(v, 0, 10)] == [0.0, 1.0, 2.0, 3.0]


def test_range_is_a_snapshot():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(1, 1.0), (2, 2.0)])
    snap = s.range(v, 0, 100)
    fill(s, v, [(3, 3.0)])
    assert [x.timestamp for x in snap] == [1, 2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.floats(-1e6, 1e6)), max_size=60),
       st.randoms(use_true_random=False))
def test_range_sorted_for_any_insertion_order(pairs, rnd):
    pairs = list(enumerate(pairs))
    rnd.shuffle(pairs)
    s = Store()
    v = s.register_variable("x")
    for seq, (t, val) in pairs:
        s.insert(Sample(v, t, val))
    out = s.range(v, 0, 1000)
    ts = [x.timestamp for x in out]
    assert ts == sorted(ts) and len(out) == len(pairs)
    # ties keep arrival order
    arrival = [(t, val) for _, (t, val) in pairs]
    expected = sorted(arrival, key=lambda p: p[0])
    assert [(x.timestamp, x.value) for x in out] == expected


def test_concurrent_inserts_are_all_kept():
    s = Store()
    v = s.register_variable("x")

    def worker(base):
        for i in range(2000):
            s.insert(Sample(v, base + i * 4, float(i)))

    threads = [threading.Thread(target=worker, args=(b,)) for b in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    ts = [x.timestamp for x in s.range(v, 0, 10**9)]
    assert len(ts) == 8000 and ts == sorted(ts)


# -- enforceRetention ------------------------------------------------------------

def test_retention_ten_minutes_at_1hz():
    s = Store(RetentionPolicy(600_000))
    v = s.register_variable("x")
    fill(s, v, [(t * 1000, float(t)) for t in range(0, 901)])
    evicted = s.enforce_retention(900_000)
    kept = s.range(v, 0, 10**9)
    assert kept[0].timestamp >= 300_000
    assert len(kept) == 601 and evicted == 300


def test_retention_now_before_all_samples():
    s = Store(RetentionPolicy(1000))
    v = s.register_variable("x")
    fill(s, v, [(5000, 1.0), (6000, 2.0)])
    assert s.enforce_retention(10) == 0


def test_retention_cap_evicts_oldest():
    s = Store(RetentionPolicy(10**9, max_samples_per_variable=5))
    v = s.register_variable("x")
    fill(s, v, [(t, float(t)) for t in range(10)])
    assert s.enforce_retention(10) == 5
    assert [x.timestamp for x in s.range(v, 0, 100)] == [5, 6, 7, 8, 9]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 10_000), max_size=80), st.integers(1, 5000),
       st.integers(0, 20_000))
def test_retention_property(ts, window, now):
    s = Store(RetentionPolicy(window))
    v = s.register_variable("x")
    for t in ts:
        s.insert(Sample(v, t, 1.0))
    s.enforce_retention(now)
    assert all(x.timestamp >= now - window for x in s.range(v, 0, 10**9))


def test_retention_policy_validation():
    with pytest.raises(ValueError):
        RetentionPolicy(0)
    with pytest.raises(ValueError):
        RetentionPolicy(10, 0)
    assert RetentionPolicy().window_ms == 600_000


# -- rollup --------------------------------------------------------------------

def test_rollup_single_interval():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(1, 1.0), (2, 2.0), (3, 3.0)])
    (p,) = s.rollup(v, 0, 60_000, 60_000)
    assert (p.min, p.max, p.mean, p.count, p.interval_start_ms) == (1.0, 3.0, 2.0, 3, 0)


def test_rollup_omits_empty_intervals():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(5, 1.0), (25, 2.0)])
    pts = s.rollup(v, 0, 30, 10)
    assert [p.interval_start_ms for p in pts] == [0, 20]


def test_rollup_errors():
    s = Store()
    v = s.register_variable("x")
    with pytest.raises(InvalidRange):
        s.rollup(v, 5, 1, 10)
    with pytest.raises(UnknownVariable):
        s.rollup("nope", 0, 1, 10)
    with pytest.raises(ValueError):
        s.rollup(v, 0, 1, 0)


def _check_against_oracle(store, v, samples, L, t0, t1):
    got = store.rollup(v, t0, t1, L)
    want = rollup_oracle(samples, L, t0, t1)
    assert len(got) == len(want)
    for p, (start, lo, hi, mean, count) in zip(got, want):
        assert (p.interval_start_ms, p.min, p.max, p.count) == (start, lo, hi, count)
        assert rel_close(p.mean, mean, 1e-12)
        assert p.min <= p.mean <= p.max


def test_rollup_1000_uniform_samples_over_10_intervals():
    rnd = random.Random(7)
    L = 60_000
    samples = [(rnd.randrange(0, 10 * L), rnd.uniform(-100, 100)) for _ in range(1000)]
    s = Store(RetentionPolicy(10**12))
    v = s.register_variable("x")
    fill(s, v, samples)
    assert len(s.rollup(v, 0, 10 * L, L)) == 10
    _check_against_oracle(s, v, samples, L, 0, 10 * L)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 100_000), st.floats(-1e9, 1e9)), min_size=0, max_size=300),
       st.integers(1, 20_000), st.integers(0, 100_000), st.integers(0, 100_000))
def test_rollup_matches_oracle(samples, L, a, b):
    t0, t1 = min(a, b), max(a, b)
    s = Store(RetentionPolicy(10**12))
    v = s.register_variable("x")
    fill(s, v, samples)
    _check_against_oracle(s, v, samples, L, t0, t1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50_000), st.floats(-1e6, 1e6)), max_size=200),
       st.integers(1, 5_000), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_rollup_concatenation(samples, L, i, j, k):
    a, b, c = sorted((i, j, k))
    t0, t1, t2 = a * L, b * L, c * L + 7
    s = Store(RetentionPolicy(10**12))
    v = s.register_variable("x")
    fill(s, v, samples)
    assert s.rollup(v, t0, t2, L) == s.rollup(v, t0, t1, L) + s.rollup(v, t1, t2, L)


def test_rollup_mean_stays_within_bounds_for_constant_values():
    s = Store()
    v = s.register_variable("x")
    fill(s, v, [(i, 0.1) for i in range(10_000)])
    (p,) = s.rollup(v, 0, 60_000, 60_000)
    assert p.min == p.mean == p.max == 0.1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3_000), st.floats(-1e6, 1e6),
                          st.sampled_from(list(Quality))), max_size=60))
def test_queries_are_indifferent_to_kind(seq):
    s = Store(RetentionPolicy(10**9), trend_interval_ms=500)
    raw = s.register_variable("twin.raw", Kind.RAW)
    comp = s.register_variable("twin.comp", Kind.COMPUTED)
    for t, val, q in seq:
        assert s.insert(Sample(raw, t, val, q)) == s.insert(Sample(comp, t, val, q))

    def strip(xs):
        return [(x.timestamp, x.value, x.quality) for x in xs]

    def strip_t(ps):
        return [(p.interval_start_ms, p.interval_len_ms, p.min, p.max, p.mean, p.count) for p in ps]

    lr, lc = s.latest(raw), s.latest(comp)
    assert (lr is None) == (lc is None)
    if lr is not None:
        assert strip([lr]) == strip([lc])
    assert strip(s.range(raw, 0, 5000)) == strip(s.range(comp, 0, 5000))
    assert strip_t(s.rollup(raw, 0, 5000)) == strip_t(s.rollup(comp, 0, 5000))
    assert s.enforce_retention(2000) % 2 == 0
    assert strip(s.range(raw, 0, 5000)) == strip(s.range(comp, 0, 5000))


# -- trend persistence ---------------------------------------------------------

def _tp(name, start, lo=1.0, hi=3.0, mean=2.0, count=3, L=60_000):
    return TrendPoint(VariableId(name), start, L, lo, hi, mean, count)


def test_persist_three_points_adds_three_lines(tmp_path):
    path = tmp_path / "t.trends"
    path.write_text("# header comment\n")
    assert persist_trends([_tp("a", 0), _tp("a", 60_000), _tp("b", 0)], path) == 3
    assert len(path.read_text().splitlines()) == 1 + 3


def test_persist_empty_list_leaves_sink_unchanged(tmp_path):
    path = tmp_path / "t.trends"
    path.write_text("a,0,60000,1,3,2,3\n")
    before = path.read_bytes()
    assert persist_trends([], path) == 0
    assert path.read_bytes() == before


def test_persist_duplicate_key(tmp_path):
    path = tmp_path / "t.trends"
    persist_trends([_tp("a", 0)], path)
    with pytest.raises(DuplicateTrendKey):
        persist_trends([_tp("a", 0, mean=2.5)], path)
    with pytest.raises(DuplicateTrendKey):
        persist_trends([_tp("b", 0), _tp("b", 0)], tmp_path / "other.trends")


def test_persist_to_stream_and_read_back():
    buf = io.StringIO()
    log = TrendLog(buf)
    log.append([_tp("a", 0)])
    log.append([_tp("a", 60_000)])
    assert buf.getvalue() == "a,0,60000,1,3,2,3\na,60000,60000,1,3,2,3\n"
    assert [p.interval_start_ms for p in read_trends(log)] == [0, 60_000]


def test_persist_sink_failure(tmp_path):
    class Broken(io.StringIO):
        def write(self, _):
            raise OSError("disk full")

    with pytest.raises(SinkWriteFailure):
        persist_trends([_tp("a", 0)], Broken())


def test_persist_requires_sorted_points(tmp_path):
    with pytest.raises(ValueError):
        persist_trends([_tp("b", 0), _tp("a", 0)], tmp_path / "x.trends")


def test_record_format_is_exact():
    p = TrendPoint(VariableId("boiler.temp"), 120_000, 60_000, 0.1, 2.5, 1.0 / 3.0, 4)
    assert format_record(p) == ("boiler.temp,120000,60000,0.10000000000000001,2.5,"
                                "0.33333333333333331,4\n")


@pytest.mark.parametrize("line,reason", [
    ("a,0,60000,1,3,2", "fields"),
    ("a,0,60000,1,3,2,3,9", "fields"),
    ("a,x,60000,1,3,2,3", "integer"),
    ("a,0,0,1,3,2,3", "positive"),
    ("a,10,60000,1,3,2,3", "aligned"),
    ("a,0,60000,1,3,2,0", "count"),
    ("a,0,60000,1,3,5,3", "min <= mean"),
    ("a b,0,60000,1,3,2,3", "whitespace"),
    ("a,0,60000,one,3,2,3", "could not convert"),
    ("", "fields"),
])
def test_malformed_records(line, reason):
    with pytest.raises(MalformedTrendRecord) as err:
        parse_record(line, 9)
    assert err.value.line_no == 9
    assert reason in str(err.value)


def test_malformed_line_number_is_one_based_and_counts_comments(tmp_path):
    path = tmp_path / "t.trends"
    path.write_text("# c\na,0,60000,1,3,2,3\nbroken\n")
    with pytest.raises(MalformedTrendRecord) as err:
        read_trends(path)
    assert err.value.line_no == 3


def test_query_trend_merges_with_in_memory_winning():
    s = Store(RetentionPolicy(10**9))
    v = s.register_variable("x")
    persisted = [_tp("x", 0, 1, 1, 1, 1), _tp("x", 60_000, 9, 9, 9, 9)]
    fill(s, v, [(60_000, 5.0), (120_000, 6.0)])
    buf = io.StringIO()
    persist_trends(persisted, buf)
    out = s.query_trend(v, 0, 180_000, source=buf)
    assert [p.interval_start_ms for p in out] == [0, 60_000, 120_000]
    assert out[1].mean == 5.0 and out[1].count == 1
    assert all(p.variable == v for p in out)


def test_query_trend_empty():
    s = Store()
    v = s.register_variable("x")
    assert s.query_trend(v, 0, 10**9, source=io.StringIO()) == []


def test_query_trend_errors(tmp_path):
    s = Store()
    v = s.register_variable("x")
    with pytest.raises(UnknownVariable):
        s.query_trend("nope", 0, 1, source=[])
    with pytest.raises(InvalidRange):
        s.query_trend(v, 2, 1, source=[])
    with pytest.raises(MalformedTrendRecord) as err:
        s.query_trend(v, 0, 1, source=["x,0,60000,1,3,2,3\n", "garbage\n"])
    assert err.value.line_no == 2


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(1, 10**5), finite, finite, finite,
                          st.integers(1, 10**9)), max_size=30))
def test_persist_then_query_round_trip_is_exact(raw):
    points = {}
    for k, L, a, b, c, n in raw:
        lo, mean, hi = sorted((a, b, c))
        points[("x", k * L)] = TrendPoint(VariableId("x"), k * L, L, lo, hi, mean, n)
    ordered = [points[k] for k in sorted(points)]
    buf = io.StringIO()
    persist_trends(ordered, buf)
    s = Store()
    s.register_variable("x")
    back = s.query_trend("x", 0, 2**62, source=buf)
    want = sorted(ordered, key=lambda p: p.interval_start_ms)
    # intervals with the same start but different lengths collapse to one key
    assert [(p.interval_start_ms, p.min, p.max, p.mean, p.count) for p in back] == \
        [(p.interval_start_ms, p.min, p.max, p.mean, p.count) for p in want]


def test_store_persist_round_trip_through_file(tmp_path):
    s = Store(RetentionPolicy(10**9))
    v = s.register_variable("x")
    rnd = random.Random(3)
    fill(s, v, [(rnd.randrange(0, 600_000), rnd.gauss(0, 1e3)) for _ in range(500)])
    pts = s.rollup(v, 0, 600_000)
    path = tmp_path / "x.trends"
    persist_trends(pts, path)
    fresh = Store()
    fresh.register_variable("x")
    assert fresh.query_trend("x", 0, 600_000, source=path) == pts


# -- sample wire format ----------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**63 - 1), finite, st.sampled_from(list(Quality)), st.sampled_from(list(Kind)),
       st.from_regex(r"[a-z][a-z0-9._]{0,20}", fullmatch=True))
def test_sample_codec_round_trip(ts, value, q, kind, name):
    s = Sample(VariableId(name, kind), ts, value, q)
    assert decode_sample(encode_sample(s)) == s
