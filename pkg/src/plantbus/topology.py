"""Logical component graph, deployment plans and transport binding derivation.

A plan is written in two layers.  The logical layer (components with their
application level, channels with their session pattern) knows nothing about
hardware.  The physical layer assigns each component to a node.  Only
:func:`derive_bindings` looks at both, deciding per channel whether the two
ends can talk in-process or need the network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from plantbus.errors import ParseError, SchemaError, UnvalidatedPlan
from plantbus.session.transport import Binding, parse_address

LEVELS = ("data_stream", "data_organization", "application_processing")
PATTERNS = ("rpc", "event", "stream", "file")
DEFAULT_PATTERN = "stream"


@dataclass(frozen=True)
class NodeDecl:
    name: str
    address: str


@dataclass(frozen=True)
class ComponentDecl:
    name: str
    level: str
    node: str


@dataclass(frozen=True)
class ChannelDecl:
    id: int
    from_: str
    to: str
    pattern: str = DEFAULT_PATTERN


@dataclass(frozen=True)
class Violation:
    rule: str
    element: str
    detail: str = ""

    def __str__(self):
        return f"{self.rule}: {self.element}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class DeploymentPlan:
    nodes: list[NodeDecl]
    components: list[ComponentDecl]
    channels: list[ChannelDecl]
    allow_level_skip: bool = False
    retention_window_ms: int | None = None
    trend_interval_ms: int | None = None
    # carried through for the gateway / appmods layers, kept as plain dicts
    signals: list[dict] = field(default_factory=list)
    computed: list[dict] = field(default_factory=list)
    acquisition_period_ms: int | None = None

    def node(self, name: str) -> NodeDecl:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def component(self, name: str) -> ComponentDecl:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def components_on(self, node: str) -> list[ComponentDecl]:
        return [c for c in self.components if c.node == node]

    def collapsed(self, node: str | None = None) -> "DeploymentPlan":
        """Same logical layer with every component placed on one node."""
        target = node or self.nodes[0].name
        return replace(self, components=[replace(c, node=target) for c in self.components])

    def to_dict(self) -> dict:
        doc = {
            "nodes": [{"name": n.name, "address": n.address} for n in self.nodes],
            "components": [{"name": c.name, "level": c.level, "node": c.node}
                           for c in self.components],
            "channels": [{"id": ch.id, "from": ch.from_, "to": ch.to, "pattern": ch.pattern}
                         for ch in self.channels],
        }
        if self.allow_level_skip:
            doc["allow_level_skip"] = True
        for key in ("retention_window_ms", "trend_interval_ms", "acquisition_period_ms"):
            if getattr(self, key) is not None:
                doc[key] = getattr(self, key)
        if self.signals:
            doc["signals"] = list(self.signals)
        if self.computed:
            doc["computed"] = list(self.computed)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _require(obj, key, where):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing key {key!r}")
    return obj[key]


def _list(doc, key, required=True):
    if key not in doc:
        if required:
            raise SchemaError(f"missing key {key!r}")
        return []
    value = doc[key]
    if not isinstance(value, list):
        raise SchemaError(f"{key!r} must be a list")
    return value


def _opt_int(doc, key):
    value = doc.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise SchemaError(f"{key!r} must be a positive integer")
    return value


def parse_plan(text: str) -> DeploymentPlan:
    """Parse a JSON plan document, applying defaults.

    Syntax errors raise :class:`ParseError` with a line/column; structural
    problems raise :class:`SchemaError`.  Rule checks live in
    :func:`validate_plan`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError("plan must be a JSON object")

    nodes = []
    for i, n in enumerate(_list(doc, "nodes")):
        where = f"nodes[{i}]"
        nodes.append(NodeDecl(str(_require(n, "name", where)), str(_require(n, "address", where))))

    components, seen = [], set()
    for i, c in enumerate(_list(doc, "components")):
        where = f"components[{i}]"
        name = str(_require(c, "name", where))
        level = _require(c, "level", where)
        if level not in LEVELS:
            raise SchemaError(f"{where}: unknown level {level!r}")
        if name in seen:
            raise SchemaError(f"duplicate component name {name!r}")
        seen.add(name)
        components.append(ComponentDecl(name, level, str(_require(c, "node", where))))

    channels = []
    for i, ch in enumerate(_list(doc, "channels")):
        where = f"channels[{i}]"
        cid = _require(ch, "id", where)
        if isinstance(cid, bool) or not isinstance(cid, int):
            raise SchemaError(f"{where}: id must be an integer")
        pattern = ch.get("pattern", DEFAULT_PATTERN)
        if pattern not in PATTERNS:
            raise SchemaError(f"{where}: unknown pattern {pattern!r}")
        channels.append(ChannelDecl(cid, str(_require(ch, "from", where)),
                                    str(_require(ch, "to", where)), pattern))

    skip = doc.get("allow_level_skip", False)
    if not isinstance(skip, bool):
        raise SchemaError("'allow_level_skip' must be a boolean")
    signals = _list(doc, "signals", required=False)
    computed = _list(doc, "computed", required=False)
    for key, items in (("signals", signals), ("computed", computed)):
        for i, item in enumerate(items):
            if not isinstance(item, dict):
                raise SchemaError(f"{key}[{i}]: expected an object")
    return DeploymentPlan(
        nodes=nodes, components=components, channels=channels, allow_level_skip=skip,
        retention_window_ms=_opt_int(doc, "retention_window_ms"),
        trend_interval_ms=_opt_int(doc, "trend_interval_ms"),
        signals=signals, computed=computed,
        acquisition_period_ms=_opt_int(doc, "acquisition_period_ms"),
    )


def load_plan(path) -> DeploymentPlan:
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())


def _level_rule(a: str, b: str) -> str | None:
    """Name of the ordering rule a channel between levels ``a`` and ``b`` breaks."""
    outer = {"data_stream", "application_processing"}
    if a in outer and b in outer:
        return "level-skip" if a != b else "level-order"
    return None


def validate_plan(plan: DeploymentPlan) -> list[Violation]:
    """Every broken plan invariant as a :class:`Violation`; empty means valid.

    Application-processing and data-stream components may only talk to
    data-organization components.  ``allow_level_skip`` lifts that rule.
    """
    out: list[Violation] = []
    node_names = set()
    for n in plan.nodes:
        if n.name in node_names:
            out.append(Violation("duplicate-node", n.name))
        node_names.add(n.name)
        try:
            parse_address(n.address)
        except ValueError as exc:
            out.append(Violation("bad-address", n.name, str(exc)))

    levels: dict[str, str] = {}
    for c in plan.components:
        if not c.name:
            out.append(Violation("empty-name", "component"))
        if c.name in levels:
            out.append(Violation("duplicate-component", c.name))
        if c.level not in LEVELS:
            out.append(Violation("unknown-level", c.name, c.level))
        if c.node not in node_names:
            out.append(Violation("unknown-node", c.name, f"node {c.node!r}"))
        levels.setdefault(c.name, c.level)

    ids = set()
    for ch in plan.channels:
        label = f"channel {ch.id}"
        if not 0 <= ch.id < 1 << 32:
            out.append(Violation("bad-channel-id", label))
        if ch.id in ids:
            out.append(Violation("duplicate-channel-id", label))
        ids.add(ch.id)
        if ch.pattern not in PATTERNS:
            out.append(Violation("unknown-pattern", label, ch.pattern))
        missing = [e for e in (ch.from_, ch.to) if e not in levels]
        for e in missing:
            out.append(Violation("unknown-endpoint", label, f"component {e!r}"))
        if ch.from_ == ch.to:
            out.append(Violation("self-loop", label, ch.from_))
        if not missing and not plan.allow_level_skip:
            rule = _level_rule(levels[ch.from_], levels[ch.to])
            if rule:
                out.append(Violation(rule, label,
                                     f"{levels[ch.from_]} -> {levels[ch.to]}"))
    return out


def derive_bindings(plan: DeploymentPlan) -> dict[int, Binding]:
    """Map every channel id to an in-process or network binding.

    Channels whose endpoints share a node stay in-process; the rest go to the
    address of the node hosting the receiving (``to``) component.
    """
    violations = validate_plan(plan)
    if violations:
        raise UnvalidatedPlan(violations)
    placement = {c.name: c.node for c in plan.components}
    addresses = {n.name: n.address for n in plan.nodes}
    out = {}
    for ch in plan.channels:
        src, dst = placement[ch.from_], placement[ch.to]
        out[ch.id] = Binding.in_process() if src == dst else Binding.network(addresses[dst])
    return out
