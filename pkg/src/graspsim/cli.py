"""Command line entry points.

    graspsim run --scenario <file> --seed <n> --trace <path> [--realtime|--fast]
    graspsim replay --trace <path>
    graspsim metrics --trace <path> [--report <dir>]
    graspsim serve --port <p> --scenario <file> [--realtime] [--trace <path>]

Exit code 0 on success, 1 with a one-line reason on stderr otherwise.
Environment: GRASPSIM_PORT overrides the default serve port and
GRASPSIM_LOG_LEVEL the log level (e.g. DEBUG, INFO, WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .gateway import SessionConfig, load_config_file, run_session
from .metrics import compute_metrics, load_latency_sidecar
from .scenario import load_scenario_file
from .trace import load_trace, replay



def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graspsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scripted scenario and write a trace")
    run_p.add_argument("--scenario", required=True, help="scenario file")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--trace", required=True, help="trace output path")
    run_p.add_argument("--config", default=None, help="JSON session config file")
    mode = run_p.add_mutually_exclusive_group()
    mode.add_argument("--realtime", action="store_true", help="pace against the wall clock")
    mode.add_argument("--fast", action="store_true", help="free-run (default)")

    replay_p = sub.add_parser("replay", help="re-run a trace through the controller")
    replay_p.add_argument("--trace", required=True)

    metrics_p = sub.add_parser("metrics", help="compute session metrics from a trace")
    metrics_p.add_argument("--trace", required=True)
    metrics_p.add_argument(
        "--report", default=None, metavar="DIR", help="also write CSVs and figures here"
    )

    serve_p = sub.add_parser("serve", help="serve the teleop session over websocket")
    serve_p.add_argument("--port", type=int, default=None)
    serve_p.add_argument("--scenario", required=True)
    serve_p.add_argument("--seed", type=int, default=None)
    serve_p.add_argument("--realtime", action="store_true", help="accepted; serve always paces")
    serve_p.add_argument("--trace", default=None, help="trace output path (default: temp file)")
    serve_p.add_argument("--config", default=None, help="JSON session config file")
    serve_p.add_argument("--ui-dir", default=None, help="static UI bundle directory")
    serve_p.add_argument(
        "--paused", action="store_true", help="start paused at t=0 (advance with step messages)"
    )
    return parser


def _session_config(args: argparse.Namespace, mode: str) -> SessionConfig:
    cfg = load_config_file(args.config) if args.config else SessionConfig()
    updates: dict = {"mode": mode}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "trace", None) is not None:
        updates["trace_path"] = args.trace
    return replace(cfg, **updates)


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario_file(args.scenario)
    mode = "realtime" if args.realtime else "fast"
    cfg = _session_config(args, mode)
    result = run_session(cfg, scenario)
    print(
        f"run: {result.exit_reason}, {result.ticks} ticks, "
        f"{result.commands} commands, trace={result.trace_path}"
    )
    return 0 if result.exit_reason == "completed" else 1


def _cmd_replay(args: argparse.Namespace) -> int:
    records = load_trace(args.trace)
    result = replay(records)
    if result.ok:
        print(
            f"replay: ok, {result.ticks} ticks, {len(result.transitions)} transitions, "
            f"{len(result.commands)} commands, zero divergences"
        )
        return 0
    first = result.divergences[0]
    print(f"replay: divergence at seq {first.seq}", file=sys.stderr)
    print(f"  expected: {first.expected}", file=sys.stderr)
    print(f"  actual:   {first.actual}", file=sys.stderr)
    return 1


def _cmd_metrics(args: argparse.Namespace) -> int:
    records = load_trace(args.trace)
    latencies = load_latency_sidecar(args.trace + ".timing")
    if args.report:
        from .report import write_report

        metrics = write_report(records, args.report, latencies)
        print(f"report written to {args.report}")
    else:
        metrics = compute_metrics(records, latencies)
    for key, value in metrics.as_rows():
        print(f"{key}={value}")
    for i, ep in enumerate(metrics.episodes):
        print(
            f"episode{i}: close={ep.close_t_ms}ms open={ep.open_t_ms}ms "
            f"time_to_grasp={ep.time_to_grasp_ms}ms valid={ep.grasp_valid} "
            f"release_latency={ep.release_latency_ms}ms"
        )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve

    scenario = load_scenario_file(args.scenario)
    cfg = _session_config(args, "realtime")
    port = args.port
    if port is None:
        port = int(os.environ.get("GRASPSIM_PORT", cfg.port))
    serve(cfg, scenario, port=port, ui_dir=args.ui_dir, start_paused=args.paused)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("GRASPSIM_LOG_LEVEL", "INFO"),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "replay": _cmd_replay,
        "metrics": _cmd_metrics,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one-line reason, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
