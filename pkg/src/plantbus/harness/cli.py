"""``plantbus`` command line.

Exit codes: 0 success, 2 validation or parse error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading

from plantbus.clock import WallClock
from plantbus.errors import (
    BootFailure,
    ParseError,
    PlantbusError,
    SchemaError,
    UnknownVariable,
    UnvalidatedPlan,
)
from plantbus.harness.latency import measure_rpc
from plantbus.harness.runtime import CONTROL_CHANNEL, NodeRuntime
from plantbus.harness.scenario import default_trend_dir, run_scenario
from plantbus.harness.services import RemoteStore
from plantbus.rtdb.store import sample_to_json, trend_to_json
from plantbus.rtdb.trendfile import read_trends
from plantbus.session.channel import Session
from plantbus.session.transport import Binding
from plantbus.topology import derive_bindings, load_plan, validate_plan

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
FAR_FUTURE = 1 << 62

log = logging.getLogger("plantbus")


class _Invalid(Exception):
    pass


def _u64(text):
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("expected an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plantbus", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    node = sub.add_parser("run-node", help="boot one node's components and serve until interrupted")
    node.add_argument("--plan", required=True)
    node.add_argument("--node", required=True)

    sc = sub.add_parser("scenario", help="run the whole plan in this process")
    sc.add_argument("--plan", required=True)
    sc.add_argument("--ticks", required=True, type=_positive)
    sc.add_argument("--seed", type=_u64)

    q = sub.add_parser("query", help="query a running node (trend falls back to trend files)")
    q.add_argument("what", choices=("latest", "range", "trend"))
    q.add_argument("--plan", required=True)
    q.add_argument("--var", required=True)
    q.add_argument("--from", dest="t0", type=int)
    q.add_argument("--to", dest="t1", type=int)

    perf = sub.add_parser("perf", help="latency measurements")
    perf_sub = perf.add_subparsers(dest="perf_command", required=True)
    rpc = perf_sub.add_parser("rpc", help="echo round-trip latency against a node")
    rpc.add_argument("--target", required=True, help="host:port of a running node")
    rpc.add_argument("--n", required=True, type=_positive)
    rpc.add_argument("--payload", required=True, type=int)
    return p


def _load_valid_plan(path):
    plan = load_plan(path)
    violations = validate_plan(plan)
    if violations:
        raise UnvalidatedPlan(violations)
    return plan


def cmd_run_node(args, out) -> int:
    plan = _load_valid_plan(args.plan)
    try:
        plan.node(args.node)
    except KeyError:
        raise _Invalid(f"no node named {args.node!r} in the plan") from None
    rt = NodeRuntime(plan, args.node, derive_bindings(plan), default_trend_dir())
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        rt.start_servers(listen_tcp=True)
        print(json.dumps({"node": args.node, "address": plan.node(args.node).address,
                          "components": sorted(rt.components)}), file=out, flush=True)
        rt.run_live(WallClock(), stop)
    except KeyboardInterrupt:
        pass
    finally:
        rt.close()
    return EXIT_OK


def cmd_scenario(args, out) -> int:
    plan = _load_valid_plan(args.plan)
    result = run_scenario(plan, args.ticks, default_trend_dir(), seed=args.seed)
    print(json.dumps(result.to_dict()), file=out)
    return EXIT_OK


def _query_live(plan, args, out) -> bool:
    """Ask each node hosting a store; False if none could be reached."""
    reached = False
    nodes = {c.node for c in plan.components if c.level == "data_organization"}
    for n in plan.nodes:
        if n.name not in nodes:
            continue
        with Session() as session:
            try:
                ch = session.open_channel(Binding.network(n.address), CONTROL_CHANNEL)
            except PlantbusError:
                continue
            reached = True
            store = RemoteStore(ch)
            if args.var not in store:
                continue
            if args.what == "latest":
                print(json.dumps(sample_to_json(store.latest(args.var))), file=out)
            elif args.what == "range":
                for s in store.range(args.var, args.t0, args.t1):
                    print(json.dumps(sample_to_json(s)), file=out)
            else:
                for p in store.query_trend(args.var, args.t0, args.t1):
                    print(json.dumps(trend_to_json(p)), file=out)
            return True
    if reached:
        raise UnknownVariable(f"no running node holds {args.var!r}")
    return False


def _query_files(plan, args, out):
    trend_dir = default_trend_dir()
    points = []
    for c in plan.components:
        if c.level == "data_organization":
            points += [p for p in read_trends(trend_dir / f"{c.name}.trends")
                       if p.variable.name == args.var
                       and p.interval_start_ms < args.t1
                       and p.interval_start_ms + p.interval_len_ms > args.t0]
    for p in sorted(points, key=lambda p: p.interval_start_ms):
        print(json.dumps(trend_to_json(p)), file=out)


def cmd_query(args, out) -> int:
    plan = _load_valid_plan(args.plan)
    if args.what == "range" and (args.t0 is None or args.t1 is None):
        raise _Invalid("query range needs --from and --to")
    if args.t0 is None:
        args.t0 = 0
    if args.t1 is None:
        args.t1 = FAR_FUTURE
    if args.t0 > args.t1:
        raise _Invalid("--from must not exceed --to")
    if _query_live(plan, args, out):
        return EXIT_OK
    if args.what == "trend":
        _query_files(plan, args, out)
        return EXIT_OK
    raise PlantbusError("no data_organization node is reachable")


def cmd_perf(args, out) -> int:
    try:
        binding = Binding.network(args.target)
    except ValueError as exc:
        raise _Invalid(str(exc)) from None
    if args.payload < 0:
        raise _Invalid("--payload must be >= 0")
    with Session() as session:
        ch = session.open_channel(binding, CONTROL_CHANNEL)
        report = measure_rpc(ch, args.n, args.payload).check()
    print(json.dumps(report.to_dict()), file=out)
    return EXIT_OK


COMMANDS = {"run-node": cmd_run_node, "scenario": cmd_scenario, "query": cmd_query,
            "perf": cmd_perf}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args, out)
    except (_Invalid, ParseError, SchemaError, UnvalidatedPlan) as exc:
        print(f"plantbus: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BootFailure as exc:
        print(f"plantbus: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PlantbusError, OSError) as exc:
        print(f"plantbus: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
