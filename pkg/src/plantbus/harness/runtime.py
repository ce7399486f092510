"""Booting one node's components from a deployment plan.

A node runs every component the plan places on it:

* data-organization components own a :class:`~plantbus.rtdb.Store` and a
  trend file, and serve incoming channels (streams/events are ingested,
  RPC channels expose the store);
* data-stream components run simulated acquisition into outgoing streams;
* application-processing components evaluate computed variables through a
  store proxy on an outgoing RPC channel.

Each node listens on an in-process hub and, when needed, on its TCP
address.  Every connection also gets a control channel (id ``0xFFFFFFFF``)
with ``echo`` and read access to the node's stores.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from plantbus.appmods.computed import ComputedVariableDef, define_computed, eval_computed
from plantbus.errors import BootFailure, EvalError, PlantbusError, UnknownInput
from plantbus.gateway import Acquisition, AcquisitionConfig, SignalSpec
from plantbus.harness.services import IngestServer, NodeStoreView, RemoteStore, StoreService
from plantbus.rtdb.store import DEFAULT_TREND_INTERVAL_MS, RetentionPolicy, Store
from plantbus.rtdb.trendfile import TrendLog, read_trends
from plantbus.session.channel import Session
from plantbus.session.transport import LocalHub, TcpListener, parse_address

log = logging.getLogger(__name__)

CONTROL_CHANNEL = 0xFFFFFFFF
DEFAULT_PERIOD_MS = 1000


def plan_signals(plan) -> list[SignalSpec]:
    return [SignalSpec.from_dict(s) for s in plan.signals]


def plan_computed(plan) -> list[ComputedVariableDef]:
    return [ComputedVariableDef.from_dict(c) for c in plan.computed]


def host_of(items, plan, level):
    """Assign each signal/computed definition to a component of ``level``."""
    hosts = [c.name for c in plan.components if c.level == level]
    out = {}
    for item in items:
        name = getattr(item, "variable", None)
        label = name.name if name is not None else item.output
        if item.component is not None:
            try:
                comp = plan.component(item.component)
            except KeyError:
                raise BootFailure(item.component, f"{label} is assigned to an unknown component") from None
            if comp.level != level:
                raise BootFailure(comp.name, f"{label} needs a {level} component")
            out[label] = comp.name
        elif hosts:
            out[label] = hosts[0]
        else:
            raise BootFailure(label, f"no {level} component to host it")
    return out


class _EventSink:
    def __init__(self, channel):
        self.channel = channel

    def send(self, payload):
        self.channel.publish(payload)


@dataclass
class GatewayRuntime:
    name: str
    acquisition: Acquisition
    targets: dict  # variable -> receiving data-organization component
    streams: list = field(default_factory=list)


@dataclass
class AppRuntime:
    name: str
    store: object
    handles: list = field(default_factory=list)
    evaluations: int = 0
    errors: int = 0
    eval_ns: list = field(default_factory=list)


class NodeRuntime:
    def __init__(self, plan, node: str, bindings, trend_dir, *, clock_start_ms: int = 0,
                 fresh_trends: bool = False, signals=None, computed=None,
                 on_emit=None, record_visibility: bool = False):
        self.plan = plan
        self.node = node
        self.bindings = bindings
        self.trend_dir = Path(trend_dir)
        self.clock_start_ms = clock_start_ms
        self.period_ms = plan.acquisition_period_ms or DEFAULT_PERIOD_MS
        self.on_emit = on_emit
        self.components = {c.name: c for c in plan.components_on(node)}
        self.levels = {c.name: c.level for c in plan.components}
        self.placement = {c.name: c.node for c in plan.components}
        self._signals = plan_signals(plan) if signals is None else signals
        self._computed = plan_computed(plan) if computed is None else computed

        retention = RetentionPolicy(plan.retention_window_ms or RetentionPolicy().window_ms)
        interval = plan.trend_interval_ms or DEFAULT_TREND_INTERVAL_MS
        self.stores: dict[str, Store] = {}
        self.trend_logs: dict[str, TrendLog] = {}
        self.ingest: dict[str, IngestServer] = {}
        self.persisted_until: dict[str, dict] = {}
        self.trend_points_persisted = 0
        for name, c in self.components.items():
            if c.level != "data_organization":
                continue
            path = self.trend_dir / f"{name}.trends"
            if fresh_trends and path.exists():
                path.unlink()
            log_ = TrendLog(path)
            store = Store(retention, interval, trend_file=log_)
            self.stores[name] = store
            self.trend_logs[name] = log_
            self.ingest[name] = IngestServer(store, record_visibility)
            until = {}
            for p in read_trends(path):
                end = p.interval_start_ms + p.interval_len_ms
                until[p.variable.name] = max(until.get(p.variable.name, 0), end)
            self.persisted_until[name] = until

        self.view = NodeStoreView(self.stores.values())
        self.hub: LocalHub | None = None
        self.listener: TcpListener | None = None
        self.session: Session | None = None
        self.gateways: dict[str, GatewayRuntime] = {}
        self.apps: dict[str, AppRuntime] = {}
        self.inbox: list = []

    # -- servers --------------------------------------------------------------

    def start_servers(self, listen_tcp: bool):
        if any(ch.id == CONTROL_CHANNEL for ch in self.plan.channels):
            raise BootFailure(self.node, f"channel id {CONTROL_CHANNEL} is reserved")
        self.hub = LocalHub(self._on_connection, name=self.node)
        if listen_tcp:
            host, port = parse_address(self.plan.node(self.node).address)
            try:
                self.listener = TcpListener(host, port, self._on_connection)
            except OSError as exc:
                raise BootFailure(self.node, f"cannot listen on {host}:{port}: {exc}") from exc

    def _on_connection(self, conn):
        for decl in self.plan.channels:
            if decl.to not in self.components:
                continue
            ch = conn.open_channel(decl.id)
            level = self.levels[decl.to]
            if level == "data_organization":
                if decl.pattern in ("stream", "event"):
                    self.ingest[decl.to].bind(ch)
                elif decl.pattern == "rpc":
                    StoreService(self.stores[decl.to]).bind(ch)
                else:
                    ch.on_file(self.inbox.append)
            elif decl.pattern == "rpc":
                ch.serve("echo", lambda p: p)
            elif decl.pattern == "event":
                ch.subscribe(self.inbox.append)
            elif decl.pattern == "stream":
                ch.on_stream(self.inbox.append)
            else:
                ch.on_file(self.inbox.append)
        StoreService(self.view).bind(conn.open_channel(CONTROL_CHANNEL))

    # -- clients --------------------------------------------------------------

    def _session(self) -> Session:
        if self.session is None:
            self.session = Session(hub=self.hub)
        return self.session

    def _open(self, decl, retry_s: float):
        binding = self.bindings[decl.id]
        deadline = time.monotonic() + retry_s
        while True:
            try:
                return self._session().open_channel(binding, decl.id)
            except PlantbusError as exc:
                if time.monotonic() >= deadline:
                    raise BootFailure(decl.from_, f"channel {decl.id}: {exc}") from exc
                time.sleep(0.05)

    def start_gateways(self, retry_s: float = 0.0, tick_count: int = 1, signal_origin_ms: int = 0):
        """Open outgoing streams for every data-stream component on this node."""
        hosts = host_of(self._signals, self.plan, "data_stream")
        for name, comp in self.components.items():
            if comp.level != "data_stream":
                continue
            specs = [s for s in self._signals if hosts[s.variable.name] == name]
            if not specs:
                continue
            outgoing = [d for d in self.plan.channels
                        if d.from_ == name and d.pattern in ("stream", "event")
                        and self.levels.get(d.to) == "data_organization"]
            if not outgoing:
                raise BootFailure(name, "no outgoing stream channel to a data_organization component")
            by_id = {d.id: d for d in outgoing}
            routes = {}
            for s in specs:
                wanted = s.channel
                if wanted is not None and wanted not in by_id:
                    raise BootFailure(name, f"{s.variable.name}: channel {wanted} is not an outgoing stream")
                routes[s.variable.name] = by_id[wanted] if wanted is not None else outgoing[0]
            sinks, streams, targets = {}, [], {}
            for decl in {d.id: d for d in routes.values()}.values():
                ch = self._open(decl, retry_s)
                names = [v for v, d in routes.items() if d.id == decl.id]
                if decl.pattern == "stream":
                    meta = json.dumps([{"name": v, "kind": "raw"} for v in names]).encode()
                    sink = ch.open_stream(meta)
                    streams.append(sink)
                else:
                    sink = _EventSink(ch)
                for v in names:
                    sinks[v] = sink
                    targets[v] = decl.to
            config = AcquisitionConfig(specs, self.period_ms, tick_count)
            acq = Acquisition(config, self.clock_start_ms, sinks, self.on_emit, signal_origin_ms)
            self.gateways[name] = GatewayRuntime(name, acq, targets, streams)

    def start_apps(self, retry_s: float = 10.0):
        """Connect application components and register their computed variables."""
        hosts = host_of(self._computed, self.plan, "application_processing")
        for name, comp in self.components.items():
            if comp.level != "application_processing":
                continue
            defs = [d for d in self._computed if hosts[d.output] == name]
            rpc = [d for d in self.plan.channels if d.from_ == name and d.pattern == "rpc"
                   and self.levels.get(d.to) == "data_organization"]
            if not rpc:
                if defs:
                    raise BootFailure(name, "computed variables need an rpc channel to a data_organization component")
                continue
            app = AppRuntime(name, RemoteStore(self._open(rpc[0], retry_s)))
            for d in defs:
                deadline = time.monotonic() + retry_s
                while True:
                    try:
                        app.handles.append(define_computed(d, app.store))
                        break
                    except UnknownInput as exc:
                        # raw inputs appear once the gateway's stream is opened
                        if time.monotonic() >= deadline:
                            raise BootFailure(name, str(exc)) from exc
                        time.sleep(0.01)
                    except PlantbusError as exc:
                        raise BootFailure(name, f"{d.output}: {exc}") from exc
            self.apps[name] = app

    # -- per-tick work ---------------------------------------------------------

    def acquire(self, k: int) -> dict:
        """Run tick ``k`` on every gateway; returns samples sent per target component."""
        sent: dict[str, int] = {}
        for gw in self.gateways.values():
            for s in gw.acquisition.tick(k):
                target = gw.targets[s.variable.name]
                sent[target] = sent.get(target, 0) + 1
        return sent

    def evaluate(self, now: int):
        for app in self.apps.values():
            for h in app.handles:
                t0 = time.perf_counter_ns()
                try:
                    if eval_computed(h, now) is not None:
                        app.evaluations += 1
                except EvalError as exc:
                    app.errors += 1
                    log.warning("%s: %s at %d: %s", app.name, h.definition.output, now, exc)
                app.eval_ns.append(time.perf_counter_ns() - t0)

    def housekeep(self, now: int) -> int:
        """Enforce retention, then persist every trend interval closed by ``now``."""
        evicted = 0
        for comp, store in self.stores.items():
            evicted += store.enforce_retention(now)
            L = store.trend_interval_ms
            boundary = (now // L) * L
            until = self.persisted_until[comp]
            batch = []
            for var in sorted(store.variables(), key=lambda v: v.name):
                start = until.get(var.name, 0)
                if boundary > start:
                    batch.extend(store.rollup(var, start, boundary))
                    until[var.name] = boundary
            if batch:
                self.trend_points_persisted += self.trend_logs[comp].append(batch)
        return evicted

    # -- live mode -------------------------------------------------------------

    def run_live(self, clock, stop, retry_s: float = 30.0):
        """Serve and tick against ``clock`` until ``stop`` (an Event) is set."""
        start = (clock.now() // self.period_ms) * self.period_ms
        self.clock_start_ms = start
        self.start_gateways(retry_s=retry_s, signal_origin_ms=start)
        self.start_apps(retry_s=retry_s)
        k = 0
        while not stop.is_set():
            now = start + k * self.period_ms
            clock.sleep_until(now)
            self.acquire(k)
            self.evaluate(now)
            self.housekeep(now)
            k += 1

    def close(self):
        for gw in self.gateways.values():
            for h in gw.streams:
                if not h.closed and not h.channel.closed:
                    try:
                        h.close()
                    except PlantbusError:
                        pass
        if self.session is not None:
            self.session.close()
        if self.listener is not None:
            self.listener.close()
        if self.hub is not None:
            self.hub.close()
