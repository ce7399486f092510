"""Application level: computed variables and reports.

A computed variable is evaluated from the latest input values and stored
like any raw variable, so every query and report treats both alike.
"""

import io
import json

from plantbus.appmods import (
    ComputedVariableDef,
    define_computed,
    eval_computed,
    parse_expr,
    period_report,
    status_snapshot,
    to_text,
)
from plantbus.errors import EvalError, ExprSyntaxError
from plantbus.rtdb import Quality, RetentionPolicy, Sample, Store

print("parsed:", to_text(parse_expr("boiler.temp × steam.flow ÷ 1000 - -2")))
try:
    parse_expr("a + ")
except ExprSyntaxError as exc:
    print(f"syntax error at position {exc.position}")

store = Store(RetentionPolicy(10**9), trend_interval_ms=10_000)
temp = store.register_variable("boiler.temp")
flow = store.register_variable("steam.flow")
duty = define_computed(ComputedVariableDef(
    "boiler.duty", ["boiler.temp", "steam.flow"], "boiler.temp * steam.flow / 1000"), store)

for k in range(30):
    t = k * 1000
    store.insert(Sample(temp, t, 80.0 + k % 5))
    quality = Quality.UNCERTAIN if k == 29 else Quality.GOOD
    store.insert(Sample(flow, t, 100.0 - k, quality))
    eval_computed(duty, t)

print(json.dumps(status_snapshot(["boiler.temp", "steam.flow", "boiler.duty"], store, 30_500)
                 .to_dict(), indent=1))
print(json.dumps(period_report("boiler.duty", 0, 30_000, store, io.StringIO()).to_dict()))

divide = define_computed(ComputedVariableDef("ratio", ["steam.flow"], "1 / (steam.flow - 71)"),
                         store)
try:
    eval_computed(divide, 31_000)
except EvalError as exc:
    print(f"evaluation refused: {exc}; stored ratio samples: {store.count('ratio')}")
