"""Whole-plan scenarios and latency measurement.

The same plan runs once with every component on one node and once split
across two loopback nodes.  Functional results match exactly; only the
measured latencies differ.
"""

import json
import tempfile
from pathlib import Path

from plantbus.harness import measure_rpc, run_scenario
from plantbus.session import Binding, LocalHub, Session
from plantbus.topology import load_plan

split = load_plan(Path(__file__).with_name("plant.json"))
single = split.collapsed("control-room")

with tempfile.TemporaryDirectory() as tmp:
    runs = {name: run_scenario(plan, 120, Path(tmp) / name)
            for name, plan in (("single", single), ("split", split))}
    for name, r in runs.items():
        print(f"{name:>6}: {r.tallies()}")
        for rep in r.latency:
            print(f"        {rep.label} latency p50={rep.quantiles[0.5]:.1f}us "
                  f"p99={rep.quantiles[0.99]:.1f}us over {rep.sample_count} samples")

    def functional(r):
        d = r.to_dict()
        d.pop("latency")
        return json.dumps(d, sort_keys=True)

    print("reports identical:", functional(runs["single"]) == functional(runs["split"]))
    trend = {n: Path(r.trend_files["rtdb"]).read_text() for n, r in runs.items()}
    print("trend files identical:", trend["single"] == trend["split"])

with LocalHub(lambda c: c.open_channel(5).serve("echo", lambda p: p)) as hub, \
        Session(hub=hub) as s:
    report = measure_rpc(s.open_channel(Binding.in_process(), 5), 1000, 256).check()
    print("in-process rpc:", json.dumps({k: v for k, v in report.to_dict().items()
                                          if k != "created_at"}))
