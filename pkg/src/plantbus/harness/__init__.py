"""Node runtime, whole-plan scenarios, latency measurement and the CLI."""

from plantbus.harness.latency import QUANTILES, LatencyReport, measure_rpc, nearest_rank
from plantbus.harness.runtime import CONTROL_CHANNEL, NodeRuntime
from plantbus.harness.scenario import (
    TREND_DIR_ENV,
    ScenarioResult,
    default_trend_dir,
    measure_ingest_latency,
    run_scenario,
)
from plantbus.harness.services import IngestServer, NodeStoreView, RemoteStore, StoreService

__all__ = [
    "CONTROL_CHANNEL", "IngestServer", "LatencyReport", "NodeRuntime", "NodeStoreView",
    "QUANTILES", "RemoteStore", "ScenarioResult", "StoreService", "TREND_DIR_ENV",
    "default_trend_dir", "measure_ingest_latency", "measure_rpc", "nearest_rank",
    "run_scenario",
]
