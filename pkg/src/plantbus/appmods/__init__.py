"""Application processing level: computed variables and reports."""

from plantbus.appmods.computed import (
    ComputedHandle,
    ComputedVariableDef,
    define_computed,
    eval_computed,
)
from plantbus.appmods.expr import BinOp, Neg, Num, Var, evaluate, parse_expr, to_text
from plantbus.appmods.reports import (
    StatusReport,
    StatusRow,
    UsageReport,
    period_report,
    status_snapshot,
    summarize,
)

__all__ = [
    "ComputedHandle", "ComputedVariableDef", "define_computed", "eval_computed",
    "BinOp", "Neg", "Num", "Var", "evaluate", "parse_expr", "to_text",
    "StatusReport", "StatusRow", "UsageReport", "period_report", "status_snapshot",
    "summarize",
]
