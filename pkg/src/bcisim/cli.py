"""Command line entry point.

Exit status is 0 on success, 1 when a schedule or plan is infeasible or a
schedule fails validation, and 2 on any usage or input error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import ClusterConfig, ExperimentSpec, resolve_path
from .errors import BciSimError, InfeasibleError, PlanningError, ScheduleViolation

OK, INFEASIBLE, ERROR = 0, 1, 2


def _cmd_run(args) -> int:
    from .experiments import run
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec.seeds = [args.seed]
    summary = run(spec, args.out)
    print(json.dumps(summary, sort_keys=True))
    return OK


def _load_graph(ref: str, cfg: ClusterConfig):
    from .scheduler import GRAPHS, TaskGraph
    if ref in GRAPHS:
        return GRAPHS[ref](budget_mw=float(cfg.doc["cluster"]["budget_mw"]))
    path = resolve_path(ref, suffixes=(".yaml", ".yml", ".json"))
    if path is None:
        raise BciSimError(f"task graph {ref!r} is neither a built-in ({', '.join(GRAPHS)}) nor a file")
    return TaskGraph.load(path)


def _cmd_schedule(args) -> int:
    from .scheduler import reduced_solve, solve
    cfg = ClusterConfig.load(args.config)
    cluster = cfg.cluster(args.nodes)
    graph = _load_graph(args.taskgraph, cfg)
    try:
        sched = reduced_solve(graph, cluster) if args.reduced else solve(graph, cluster)
    except InfeasibleError as exc:
        print(json.dumps({"status": "infeasible", "reason": str(exc), "row": exc.row}), file=sys.stderr)
        return INFEASIBLE
    text = sched.dumps()
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return OK


def _cmd_validate(args) -> int:
    from .scheduler import Schedule, validate_schedule
    sched = Schedule.load(args.schedule)
    cluster = ClusterConfig.load(args.config).cluster(sched.n_nodes) if args.config else None
    if cluster is not None:
        cluster.budgets_mw = list(sched.budgets_mw)
    rep = validate_schedule(sched, cluster, strict=False)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return OK if rep.ok else INFEASIBLE


def _cmd_query(args) -> int:
    from .experiments import burst_recording
    from .query import QuerySession, run_query
    cfg = ClusterConfig.load(args.cluster)
    n = args.nodes or cfg.n_nodes
    electrodes = args.electrodes or int(cfg.doc["cluster"]["electrodes"])
    cluster, truth = burst_recording(n, electrodes, args.seconds, cfg.seed, burst_node=min(1, n - 1), cfg=cfg)
    if args.expr is not None:
        try:
            res = run_query(args.expr, cluster)
        except PlanningError as exc:
            print(json.dumps({"error": str(exc), "constraint": exc.constraint}))
            return INFEASIBLE
        print(res.to_jsonl())
        return OK
    session = QuerySession(cluster)
    prompt = "bcisim> " if sys.stdin.isatty() else ""
    print(json.dumps({"ready": True, "nodes": n, "electrodes": electrodes, "ground_truth": truth}), flush=True)
    while True:
        try:
            line = input(prompt)
        except EOFError:
            break
        go, out = session.handle(line)
        if out:
            print(out, flush=True)
        if not go:
            break
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bcisim", description="Multi-implant BCI cluster simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec and write metrics")
    r.add_argument("spec")
    r.add_argument("--out", help="output directory (default: the spec's)")
    r.add_argument("--seed", type=int, help="override the spec's seeds with one seed")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("schedule", help="solve a task graph and print the schedule")
    s.add_argument("taskgraph", help="built-in graph name or task graph document")
    s.add_argument("--config", default=None, help="cluster config (default: packaged)")
    s.add_argument("--nodes", type=int, default=None)
    s.add_argument("--reduced", action="store_true", help="single-node formulation for identical nodes")
    s.add_argument("-o", "--output")
    s.set_defaults(func=_cmd_schedule)

    v = sub.add_parser("validate", help="replay a schedule document against budgets and deadlines")
    v.add_argument("schedule")
    v.add_argument("--config", default=None)
    v.set_defaults(func=_cmd_validate)

    q = sub.add_parser("query", help="query a simulated cluster")
    q.add_argument("cluster", help="cluster config reference ('default' for the packaged one)")
    mode = q.add_mutually_exclusive_group()
    mode.add_argument("--repl", action="store_true", help="interactive session (the default)")
    mode.add_argument("-e", dest="expr", help="run one query and exit")
    q.add_argument("--nodes", type=int)
    q.add_argument("--electrodes", type=int)
    q.add_argument("--seconds", type=float, default=6.0, help="recorded history per node")
    q.set_defaults(func=_cmd_query)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ERROR if exc.code else OK
    try:
        return args.func(args)
    except ScheduleViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INFEASIBLE
    except (BciSimError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
