"""Computed ("secondary") variables.

A computed variable is registered in the store like any measured one and
its values go in through the ordinary ``insert`` path, so every consumer
treats it exactly like raw data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from plantbus.appmods.expr import Node, bind, evaluate, parse_expr
from plantbus.errors import DuplicateName, UnknownInput
from plantbus.rtdb.store import Kind, Quality, Sample, VariableId, check_name


@dataclass(frozen=True)
class ComputedVariableDef:
    output: str
    inputs: tuple
    expr: str
    # application component evaluating the definition; None means "any"
    component: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        check_name(self.output)

    @classmethod
    def from_dict(cls, obj: dict) -> "ComputedVariableDef":
        return cls(obj["output"], tuple(obj["inputs"]), obj["expr"], obj.get("component"))

    def to_dict(self) -> dict:
        out = {"output": self.output, "inputs": list(self.inputs), "expr": self.expr}
        if self.component is not None:
            out["component"] = self.component
        return out


@dataclass
class ComputedHandle:
    definition: ComputedVariableDef
    tree: Node
    output: VariableId
    store: object
    evaluations: int = field(default=0)


def define_computed(definition: ComputedVariableDef, store) -> ComputedHandle:
    tree = bind(parse_expr(definition.expr), definition.inputs)
    missing = [name for name in definition.inputs if name not in store]
    if missing:
        raise UnknownInput(f"input {missing[0]!r} is not registered")
    if definition.output in store:
        raise DuplicateName(f"variable {definition.output!r} already registered")
    output = store.register_variable(definition.output, Kind.COMPUTED)
    return ComputedHandle(definition, tree, output, store)


def eval_computed(handle: ComputedHandle, now: int) -> Sample | None:
    """Evaluate over the latest input values and insert the result at ``now``.

    Returns None, inserting nothing, while any input is still empty (or if
    the store rejects the sample as too old).
    """
    env = {}
    qualities = []
    for name in handle.definition.inputs:
        s = handle.store.latest(name)
        if s is None:
            return None
        env[name] = s.value
        qualities.append(s.quality)
    value = evaluate(handle.tree, env)
    sample = Sample(handle.output, now, value, Quality.worst(qualities))
    if not handle.store.insert(sample):
        return None
    handle.evaluations += 1
    return sample
