"""Store services exposed over session channels, and their client proxy.

Store queries travel as JSON (floats survive through ``repr``); samples on
data streams use the compact binary encoding from :mod:`plantbus.rtdb.store`.
"""

from __future__ import annotations

import json
import logging
import threading
import time

from plantbus import errors
from plantbus.errors import PlantbusError, RemoteError, UnknownVariable
from plantbus.rtdb.store import (
    Kind,
    VariableId,
    decode_sample,
    sample_from_json,
    sample_to_json,
    trend_from_json,
    trend_to_json,
)

log = logging.getLogger(__name__)


def _dump(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode()


def _load(data: bytes):
    return json.loads(data) if data else None


class NodeStoreView:
    """Read-mostly facade over several stores, routed by variable name."""

    def __init__(self, stores):
        self.stores = list(stores)

    def _find(self, name):
        for s in self.stores:
            if name in s:
                return s
        raise UnknownVariable(f"unknown variable {name!r}")

    def __contains__(self, name):
        return any(name in s for s in self.stores)

    def variables(self):
        return [v for s in self.stores for v in s.variables()]

    def register_variable(self, name, kind=Kind.RAW):
        if not self.stores:
            raise UnknownVariable("no store on this node")
        return self.stores[0].register_variable(name, kind)

    def __getattr__(self, op):
        if op in ("latest", "range", "rollup", "query_trend", "count", "variable"):
            return lambda name, *a, **kw: getattr(self._find(name), op)(name, *a, **kw)
        if op == "insert":
            return lambda sample: self._find(sample.variable.name).insert(sample)
        raise AttributeError(op)


class StoreService:
    """Serves a store's operations as RPC methods on a channel."""

    def __init__(self, store):
        self.store = store

    def bind(self, channel):
        s = self.store
        channel.serve("echo", lambda p: p)
        channel.serve("register", lambda p: self._register(_load(p)))
        channel.serve("has", lambda p: _dump(_load(p)["name"] in s))
        channel.serve("variables", lambda p: _dump(
            [{"name": v.name, "kind": v.kind.value} for v in s.variables()]))
        channel.serve("insert", lambda p: _dump({"accepted": s.insert(sample_from_json(_load(p)))}))
        channel.serve("latest", lambda p: _dump(sample_to_json(s.latest(_load(p)["name"]))))
        channel.serve("range", self._range)
        channel.serve("rollup", self._rollup)
        channel.serve("query_trend", self._query_trend)
        return channel

    def _register(self, req):
        v = self.store.register_variable(req["name"], Kind(req.get("kind", "raw")))
        return _dump({"name": v.name, "kind": v.kind.value})

    def _range(self, p):
        r = _load(p)
        return _dump([sample_to_json(x) for x in self.store.range(r["name"], r["t0"], r["t1"])])

    def _rollup(self, p):
        r = _load(p)
        pts = self.store.rollup(r["name"], r["t0"], r["t1"], r.get("interval_len_ms"))
        return _dump([trend_to_json(x) for x in pts])

    def _query_trend(self, p):
        r = _load(p)
        return _dump([trend_to_json(x) for x in self.store.query_trend(r["name"], r["t0"], r["t1"])])


def _reraise(exc: RemoteError):
    cls = getattr(errors, getattr(exc, "remote_type", ""), None)
    if isinstance(cls, type) and issubclass(cls, PlantbusError):
        try:
            err = cls(exc.remote_message)
        except TypeError:
            raise exc from None
        raise err from exc
    raise exc


class RemoteStore:
    """Store-shaped proxy over a channel served by :class:`StoreService`.

    Application modules use it exactly like a local :class:`~plantbus.rtdb.Store`.
    """

    def __init__(self, channel, timeout_ms: int = 10_000):
        self.channel = channel
        self.timeout_ms = timeout_ms

    def _call(self, method, obj=None):
        try:
            return _load(self.channel.call(method, _dump(obj), self.timeout_ms))
        except RemoteError as exc:
            _reraise(exc)

    def __contains__(self, name):
        return bool(self._call("has", {"name": getattr(name, "name", name)}))

    def register_variable(self, name, kind=Kind.RAW):
        r = self._call("register", {"name": name, "kind": Kind(kind).value})
        return VariableId(r["name"], Kind(r["kind"]))

    def variables(self):
        return [VariableId(v["name"], Kind(v["kind"])) for v in self._call("variables")]

    def insert(self, sample) -> bool:
        return self._call("insert", sample_to_json(sample))["accepted"]

    def latest(self, variable):
        return sample_from_json(self._call("latest", {"name": getattr(variable, "name", variable)}))

    def range(self, variable, t0, t1):
        r = self._call("range", {"name": getattr(variable, "name", variable), "t0": t0, "t1": t1})
        return [sample_from_json(x) for x in r]

    def rollup(self, variable, t0, t1, interval_len_ms=None):
        r = self._call("rollup", {"name": getattr(variable, "name", variable), "t0": t0,
                                  "t1": t1, "interval_len_ms": interval_len_ms})
        return [trend_from_json(x) for x in r]

    def query_trend(self, variable, t0, t1, source=None):
        if source is not None:
            raise ValueError("a remote store always reads its own trend file")
        r = self._call("query_trend", {"name": getattr(variable, "name", variable),
                                       "t0": t0, "t1": t1})
        return [trend_from_json(x) for x in r]


class IngestServer:
    """Inserts samples arriving on data streams into a store.

    A stream's open message may carry a JSON list of ``{name, kind}`` to
    pre-register.  ``visible_ns`` records, per ``(name, timestamp)``, when the
    sample became visible to ``latest``.
    """

    def __init__(self, store, record_visibility: bool = False):
        self.store = store
        self.processed = 0
        self.record_visibility = record_visibility
        self.visible_ns: dict = {}
        self._cond = threading.Condition()

    def bind(self, channel):
        channel.on_stream(self._on_message)
        channel.subscribe(self._on_event)
        return channel

    def _ensure(self, name, kind):
        if name not in self.store:
            try:
                self.store.register_variable(name, kind)
            except errors.DuplicateName:
                pass

    def _on_message(self, msg):
        if msg.kind == "open":
            for v in _load(msg.payload) or []:
                self._ensure(v["name"], Kind(v.get("kind", "raw")))
        elif msg.kind == "data":
            self._ingest(msg.payload)

    def _on_event(self, payload):
        self._ingest(payload)

    def _ingest(self, payload):
        try:
            sample = decode_sample(payload)
            self._ensure(sample.variable.name, sample.variable.kind)
            self.store.insert(sample)
            if self.record_visibility:
                self.visible_ns[(sample.variable.name, sample.timestamp)] = time.perf_counter_ns()
        except (PlantbusError, ValueError) as exc:
            log.warning("dropping sample: %s", exc)
        finally:
            with self._cond:
                self.processed += 1
                self._cond.notify_all()

    def wait_processed(self, count: int, timeout: float = 30.0) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self.processed >= count, timeout)
