"""The real-time store: ingest, retention, trend rollups and trend files.

A 1 Hz feed runs for 15 simulated minutes against a 10 minute window.
Closed one-minute intervals are written to a trend file before they age
out, so long-range trend queries still see them.
"""

import tempfile
from pathlib import Path

from plantbus.rtdb import RetentionPolicy, Sample, Store, TrendLog, read_trends

with tempfile.TemporaryDirectory() as tmp:
    log = TrendLog(Path(tmp) / "rtdb.trends")
    store = Store(RetentionPolicy(600_000), trend_interval_ms=60_000, trend_file=log)
    temp = store.register_variable("boiler.temp")

    for t in range(0, 900_001, 1000):
        store.insert(Sample(temp, t, 80.0 + (t // 1000) % 7))
        if t % 60_000 == 0 and t:
            # persist the interval that just closed, then drop what is too old
            log.append(store.rollup(temp, t - 60_000, t))
            store.enforce_retention(t)

    kept = store.range(temp, 0, 10**9)
    print(f"retained {len(kept)} samples from t={kept[0].timestamp} to t={kept[-1].timestamp}")
    print(f"latest: {store.latest(temp)}")

    print("in-memory rollup of the last three minutes:")
    for p in store.rollup(temp, 720_000, 900_000):
        print(f"  [{p.interval_start_ms:>7}, +{p.interval_len_ms}) min={p.min} max={p.max} "
              f"mean={p.mean:.3f} n={p.count}")

    # evicted minutes come back from the trend file
    full = store.query_trend(temp, 0, 900_000)
    print(f"trend query over 15 minutes: {len(full)} points, "
          f"{sum(p.count for p in full)} samples summarised")
    print(f"trend file holds {len(read_trends(log.path))} records; first line:")
    print("  " + log.path.read_text().splitlines()[0])
