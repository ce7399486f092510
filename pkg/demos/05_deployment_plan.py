"""Deployment plans: the logical hierarchy mapped onto physical nodes.

Channels whose endpoints share a node bind in-process; the rest bind to the
receiving node's network address.  Collapsing a plan to one node keeps the
logical layer and makes every binding in-process.
"""

import json
from pathlib import Path

from plantbus.topology import derive_bindings, load_plan, parse_plan, validate_plan

plan = load_plan(Path(__file__).with_name("plant.json"))
print("violations:", validate_plan(plan))
for cid, binding in sorted(derive_bindings(plan).items()):
    ch = next(c for c in plan.channels if c.id == cid)
    print(f"  channel {cid} {ch.from_} -> {ch.to} ({ch.pattern}): {binding.mode} {binding.address}")

flat = plan.collapsed("control-room")
print("collapsed onto control-room:",
      {cid: b.mode for cid, b in derive_bindings(flat).items()})

# a gateway wired straight to an application skips the data organization level
bad = plan.to_dict()
bad["channels"].append({"id": 3, "from": "dcs-gw", "to": "calc", "pattern": "event"})

for v in validate_plan(parse_plan(json.dumps(bad))):
    print(f"violation: {v}")
