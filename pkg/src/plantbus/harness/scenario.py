"""Whole-plan scenario runs under a simulated clock.

Every node of the plan is booted inside this process; channels between
nodes still go over TCP loopback when the plan puts their endpoints on
different nodes.  Ticks follow a fixed order: acquire, evaluate computed
variables, enforce retention, persist closed trend intervals.  Because
the orchestrator waits for each tick's samples to be ingested before
evaluating, tallies and store contents do not depend on the transport.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from plantbus.appmods.reports import period_report, status_snapshot
from plantbus.errors import BootFailure, PlantbusError
from plantbus.gateway import splitmix64
from plantbus.harness.latency import LatencyReport
from plantbus.harness.runtime import NodeRuntime, plan_computed, plan_signals
from plantbus.topology import derive_bindings, validate_plan

TREND_DIR_ENV = "PLANTBUS_TREND_DIR"


def default_trend_dir() -> Path:
    return Path(os.environ.get(TREND_DIR_ENV, "./trends"))


@dataclass
class ScenarioResult:
    ticks: int
    duration_ms: int
    emitted: int
    stored: int
    evicted: int
    trend_points_persisted: int
    computed_evaluations: int
    computed_errors: int = 0
    latency: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    # live objects for inspection; not serialized
    stores: dict = field(default_factory=dict, repr=False, compare=False)
    trend_files: dict = field(default_factory=dict, repr=False, compare=False)

    def tallies(self) -> dict:
        return {k: getattr(self, k) for k in (
            "ticks", "duration_ms", "emitted", "stored", "evicted",
            "trend_points_persisted", "computed_evaluations", "computed_errors")}

    def to_dict(self) -> dict:
        return {**self.tallies(),
                "latency": [r.to_dict() for r in self.latency],
                "reports": list(self.reports)}


def reseed(signals, seed: int):
    """Mix ``seed`` into every random-walk seed, leaving other signals alone."""
    out = []
    for i, s in enumerate(signals):
        if s.generator == "random_walk":
            mixed = s.params["seed"] ^ splitmix64(seed, i + 1)
            s = replace(s, params={**s.params, "seed": mixed})
        out.append(s)
    return out


def _tcp_nodes(plan, bindings) -> set:
    addrs = {b.address for b in bindings.values() if b.mode == "network"}
    return {n.name for n in plan.nodes if n.address in addrs}


def run_scenario(plan, ticks: int, trend_dir=None, *, seed: int | None = None,
                 clock_start_ms: int = 0, ingest_timeout_s: float = 30.0) -> ScenarioResult:
    if ticks <= 0:
        raise ValueError("ticks must be positive")
    violations = validate_plan(plan)
    if violations:
        v = violations[0]
        raise BootFailure(v.element, "; ".join(str(x) for x in violations))
    bindings = derive_bindings(plan)
    trend_dir = Path(trend_dir) if trend_dir is not None else default_trend_dir()
    trend_dir.mkdir(parents=True, exist_ok=True)

    signals = plan_signals(plan)
    if seed is not None:
        signals = reseed(signals, seed)
    computed = plan_computed(plan)

    emit_ns: dict = {}

    def on_emit(sample):
        emit_ns[(sample.variable.name, sample.timestamp)] = time.perf_counter_ns()

    node_names = [n.name for n in plan.nodes if plan.components_on(n.name)]
    runtimes = {n: NodeRuntime(plan, n, bindings, trend_dir, clock_start_ms=clock_start_ms,
                               fresh_trends=True, signals=signals, computed=computed,
                               on_emit=on_emit, record_visibility=True)
                for n in node_names}
    ingest_home = {comp: rt for rt in runtimes.values() for comp in rt.ingest}
    tcp = _tcp_nodes(plan, bindings)
    try:
        for n, rt in runtimes.items():
            rt.start_servers(listen_tcp=n in tcp)
        for rt in runtimes.values():
            rt.start_gateways(tick_count=ticks)
        for rt in runtimes.values():
            rt.start_apps()

        period = plan.acquisition_period_ms or 1000
        expected: dict[str, int] = {}
        evicted = 0
        emitted_raw = 0
        now = clock_start_ms
        for k in range(ticks):
            now = clock_start_ms + k * period
            for rt in runtimes.values():
                for comp, n in rt.acquire(k).items():
                    expected[comp] = expected.get(comp, 0) + n
                    emitted_raw += n
            for comp, n in expected.items():
                if not ingest_home[comp].ingest[comp].wait_processed(n, ingest_timeout_s):
                    raise PlantbusError(f"tick {k}: {comp} did not ingest {n} samples in time")
            for rt in runtimes.values():
                rt.evaluate(now)
            for rt in runtimes.values():
                evicted += rt.housekeep(now)

        reports = _reports(runtimes, clock_start_ms, now)
        apps = [a for rt in runtimes.values() for a in rt.apps.values()]
        stores = {c: s for rt in runtimes.values() for c, s in rt.stores.items()}
        evaluations = sum(a.evaluations for a in apps)
        latency = []
        ingest = [ingest_home[c].ingest[c].visible_ns for c in ingest_home]
        pairs = [vis[key] - t for key, t in emit_ns.items()
                 for vis in ingest if key in vis]
        if pairs:
            latency.append(LatencyReport.from_durations_ns("ingest", pairs))
        eval_ns = [d for a in apps for d in a.eval_ns]
        if eval_ns:
            latency.append(LatencyReport.from_durations_ns("compute", eval_ns))
        return ScenarioResult(
            ticks=ticks,
            duration_ms=ticks * period,
            emitted=emitted_raw + evaluations,
            stored=sum(s.accepted for s in stores.values()),
            evicted=evicted,
            trend_points_persisted=sum(rt.trend_points_persisted for rt in runtimes.values()),
            computed_evaluations=evaluations,
            computed_errors=sum(a.errors for a in apps),
            latency=latency,
            reports=reports,
            stores=stores,
            trend_files={c: log.path for rt in runtimes.values() for c, log in rt.trend_logs.items()},
        )
    finally:
        for rt in runtimes.values():
            rt.close()


def _reports(runtimes, t0: int, now: int) -> list[dict]:
    """Status and usage reports for every variable, read through an app's store
    proxy when one points at the store, else from the store directly."""
    out = []
    for rt in runtimes.values():
        for comp, store in rt.stores.items():
            reader = store
            for other in runtimes.values():
                for app in other.apps.values():
                    decl = next((d for d in rt.plan.channels
                                 if d.from_ == app.name and d.pattern == "rpc"
                                 and rt.levels.get(d.to) == "data_organization"), None)
                    if decl is not None and decl.to == comp:
                        reader = app.store
            names = sorted(v.name for v in store.variables())
            out.append({"component": comp, **status_snapshot(names, reader, now).to_dict()})
            for name in names:
                out.append({"component": comp,
                            **period_report(name, t0, now + 1, reader).to_dict()})
    return out


def measure_ingest_latency(plan, ticks: int, trend_dir=None, **kw) -> LatencyReport:
    """Ingest-visibility latency (emission to ``latest``-visible) over a scenario run."""
    result = run_scenario(plan, ticks, trend_dir, **kw)
    for r in result.latency:
        if r.label == "ingest":
            return r
    raise PlantbusError("scenario emitted no samples")
