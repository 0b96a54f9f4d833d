"""Command-line front end: ``aspo decide|replay|campaign|report|validate-catalog``.

Exit codes: 0 for any completed run (gate rejections and fail-safe epochs
are data, not errors), 2 for usage/config/dataset errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agents import FaultInjectionBackend
from .catalog import CatalogError, load_catalog
from .context import TelemetryVector
from .engine import (
    EngineConfig, NodeConfig, build_backend, dump_trace, read_traces, render_trace, run_epoch, run_replay,
    write_traces,
)
from .flows import ATTACK_CLASSES, DatasetError, read_flows, synthesize_flows
from .stats import (
    EmptyLogError, compare_runs, export_epochs_csv, render_comparison, render_summary, summarize_run,
)

WORKLOADS = {500: (10, 50), 1000: (10, 100)}  # total -> (nodes, epochs per node)
CAMPAIGN_PROFILES = ("order_swap", "set_tamper", "budget_blind", "out_of_catalogue")
TOKEN_ENV = "ASPO_BACKEND_TOKEN"


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _existing(text: str) -> Path:
    p = Path(text)
    if not p.exists():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", type=_existing, help="pattern catalogue JSON (default: shipped)")
    common.add_argument("--config", type=_existing, help="engine config JSON")
    common.add_argument("--seed", type=_seed, default=None, help="unsigned 64-bit run seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    backend = argparse.ArgumentParser(add_help=False)
    backend.add_argument("--backend", default=None,
                         help=f"mock | remote | fault:<profile>[@rate]; remote reads its bearer "
                              f"token from ${TOKEN_ENV}")

    p = argparse.ArgumentParser(prog="aspo", description="Runtime security-pattern orchestration.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decide", parents=[common, backend], help="run one decision epoch")
    d.add_argument("telemetry", type=_existing, help="telemetry JSON object")

    r = sub.add_parser("replay", parents=[common, backend], help="multi-node replay of labelled flows")
    r.add_argument("--dataset", type=_existing, help="flow CSV (default: seeded synthetic flows)")
    r.add_argument("--workload", type=int, default=500,
                   help="total decisions; 500 and 1000 map to 10 nodes x 50/100 epochs")
    r.add_argument("--nodes", type=int, default=None, help="node count for non-preset workloads")
    r.add_argument("--csv", action="store_true", help="also write per-epoch CSV")

    c = sub.add_parser("campaign", parents=[common], help="fault-injection campaign over planner faults")
    c.add_argument("--dataset", type=_existing)
    c.add_argument("--workload", type=int, default=100, help="decisions per fault profile")
    c.add_argument("--profiles", default=",".join(CAMPAIGN_PROFILES))

    rep = sub.add_parser("report", parents=[common], help="summarise one or two trace logs")
    rep.add_argument("traces", nargs="+", type=_existing)
    rep.add_argument("--csv", action="store_true")

    v = sub.add_parser("validate-catalog", parents=[common], help="check catalogue invariants")
    v.add_argument("path", nargs="?", type=_existing)
    return p


def _config(args) -> EngineConfig:
    cfg = EngineConfig.load(args.config) if args.config else EngineConfig()
    if args.catalog:
        cfg.catalog = str(args.catalog)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "backend", None):
        cfg.backend = args.backend
    return cfg


def _outdir(args, default: str) -> Path:
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _layout(workload: int, nodes: int | None) -> tuple[int, int]:
    if workload < 1:
        raise UsageError(f"--workload must be positive, got {workload}")
    if nodes is None and workload in WORKLOADS:
        return WORKLOADS[workload]
    n = nodes or 10
    if workload % n:
        raise UsageError(f"--workload {workload} is not divisible by {n} nodes")
    return n, workload // n


def _rows(args, total: int, seed: int) -> list[dict]:
    if args.dataset:
        return read_flows(args.dataset)
    per_class = -(-total // len(ATTACK_CLASSES))
    return synthesize_flows(per_class, seed=seed)


def cmd_decide(args) -> int:
    cfg = _config(args)
    catalog = cfg.load_catalog()
    backend = build_backend(cfg, catalog)
    raw = json.loads(Path(args.telemetry).read_text())
    x = TelemetryVector.from_mapping(raw)
    caps = raw.get("capabilities", cfg.encoder.capabilities)
    node = NodeConfig(str(raw.get("node", "node-01")), frozenset(caps))
    trace = run_epoch(x, catalog, cfg.weights, backend, node=node, seed=cfg.seed, config=cfg)
    print(render_trace(trace, catalog, cfg.weights))
    if args.out:
        out = _outdir(args, ".")
        (out / "trace.json").write_text(dump_trace(trace) + "\n")
    return 0


def cmd_replay(args) -> int:
    cfg = _config(args)
    n_nodes, epochs = _layout(args.workload, args.nodes)
    catalog = cfg.load_catalog()
    backend = build_backend(cfg, catalog)
    rows = _rows(args, n_nodes * epochs, cfg.seed)
    traces = [t.to_dict() for t in run_replay(rows, n_nodes, epochs, catalog, cfg.weights, backend,
                                              seed=cfg.seed, config=cfg)]
    out = _outdir(args, f"runs/replay-{args.workload}")
    write_traces(out / "traces.jsonl", traces)
    summary = summarize_run(traces, catalog.ids)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = render_summary(summary, f"{args.workload} runs")
    (out / "summary.txt").write_text(text + "\n")
    if args.csv:
        export_epochs_csv(traces, out / "epochs.csv")
    print(text)
    print(f"\ntraces written to {out / 'traces.jsonl'}")
    return 0


def cmd_campaign(args) -> int:
    cfg = _config(args)
    n_nodes, epochs = _layout(args.workload, None if args.workload in WORKLOADS else 5)
    catalog = cfg.load_catalog()
    profiles = [p.strip() for p in args.profiles.split(",") if p.strip()]
    rows = _rows(args, n_nodes * epochs, cfg.seed)
    out = _outdir(args, "runs/campaign")
    all_traces = []
    for profile in profiles:
        try:
            backend = FaultInjectionBackend(catalog, profile, cfg.weights, cfg.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        traces = [t.to_dict() for t in run_replay(rows, n_nodes, epochs, catalog, cfg.weights,
                                                  backend, seed=cfg.seed, config=cfg)]
        for t in traces:
            t["fault_profile"] = profile
        write_traces(out / f"{profile}.jsonl", traces)
        all_traces.extend(traces)
    summary = summarize_run(all_traces, catalog.ids)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = render_summary(summary, "fault campaign")
    print(text)
    return 0


def cmd_report(args) -> int:
    catalog = load_catalog(args.catalog) if args.catalog else load_catalog()
    logs = [read_traces(p) for p in args.traces]
    for p, log_ in zip(args.traces, logs):
        if not log_:
            raise EmptyLogError(f"{p}: trace log is empty")
    parts = []
    for p, log_ in zip(args.traces, logs):
        parts.append(render_summary(summarize_run(log_, catalog.ids), str(p)))
    payload: dict = {"runs": {str(p): summarize_run(l, catalog.ids) for p, l in zip(args.traces, logs)}}
    if len(logs) == 2:
        cmp_ = compare_runs(logs[0], logs[1], catalog.ids)
        payload["comparison"] = {k: v for k, v in cmp_.items() if not k.startswith("summary_")}
        parts.append(render_comparison(cmp_, (str(args.traces[0]), str(args.traces[1]))))
    elif len(logs) > 2:
        parts.append("(comparison block needs exactly two logs)")
    text = "\n\n".join(parts)
    print(text)
    if args.out:
        out = _outdir(args, ".")
        (out / "report.txt").write_text(text + "\n")
        (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if args.csv:
            for p, l in zip(args.traces, logs):
                export_epochs_csv(l, out / f"{Path(p).stem}.csv")
    return 0


def cmd_validate_catalog(args) -> int:
    path = args.path or args.catalog
    catalog = load_catalog(path) if path else load_catalog()
    print(f"catalogue OK: {catalog.m} patterns, {len(catalog.baselines())} baseline(s), "
          f"{int(catalog.conflict_matrix.sum()) // 2} conflict pair(s), "
          f"{int(catalog.synergy_matrix.sum()) // 2} synergy pair(s), "
          f"{len(catalog.precedence)} precedence edge(s)")
    return 0


COMMANDS = {
    "decide": cmd_decide,
    "replay": cmd_replay,
    "campaign": cmd_campaign,
    "report": cmd_report,
    "validate-catalog": cmd_validate_catalog,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, CatalogError, DatasetError, EmptyLogError, ValueError, KeyError,
            OSError, json.JSONDecodeError) as exc:
        print(f"aspo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
