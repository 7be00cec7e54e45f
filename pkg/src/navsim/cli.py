"""Command-line entry points.

  navsim run    --config <file> --scenario <file> --log <path> [--headless] [--seed N]
  navsim replay --log <path> --metrics
  navsim serve  --config <file> --port N [--scenario <file>] [--rtf X]

Exit codes: 0 success, 2 mission failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from .runtime import (
    SchemaMismatchError,
    Simulator,
    TruncatedLogError,
    load_scenario,
    log_metrics,
    replay_metrics,
)

EXIT_OK = 0
EXIT_MISSION_FAILURE = 2
EXIT_CONFIG_ERROR = 3


def _print_report(report: dict):
    print(f"verdict: {report['verdict']}")
    print(f"simulated {report['sim_elapsed']:.2f} s in {report['wall_elapsed']:.2f} s wall "
          f"(real-time factor {report['real_time_factor']:.2f})")
    if report.get("stage_ms"):
        print("mean stage times:")
        for stage, ms in report["stage_ms"].items():
            print(f"  {stage:16s} {ms:8.2f} ms")


def cmd_run(args) -> int:
    try:
        config = load_config(args.config, overrides={"rng_seed": args.seed} if args.seed is not None else None)
        script = load_scenario(args.scenario)
    except (ConfigError, ValueError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    sim = Simulator(config, script, log_points=args.log_points)
    log, verdict, report = sim.run(time_scale=None if args.headless else 1.0)
    if args.log:
        log.save(args.log)
        print(f"log written to {args.log}")
    if args.timings:
        with open(args.timings, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    _print_report(report)
    metrics = log_metrics(log)
    for key in ("max_speed", "min_clearance", "ate_rmse", "distance_traveled"):
        if key in metrics:
            print(f"{key}: {metrics[key]:.4f}")
    if verdict == "success" or not script.events:
        return EXIT_OK
    return EXIT_MISSION_FAILURE


def cmd_replay(args) -> int:
    try:
        metrics = replay_metrics(args.log)
    except (TruncatedLogError, SchemaMismatchError, OSError) as e:
        print(f"replay error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    if args.metrics:
        print(json.dumps(metrics, indent=2, sort_keys=True))
    else:
        print(f"verdict: {metrics.get('verdict')}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    from .service import SimServer

    script = load_scenario(args.scenario) if args.scenario else None
    server = SimServer(config, script, time_scale=args.rtf)
    try:
        server.serve_forever(args.host, args.port)
    except OSError as e:
        print(f"cannot bind {args.host}:{args.port}: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="navsim", description="quadrotor navigation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario headless and write a log")
    run.add_argument("--config", default=None, help="YAML config overrides")
    run.add_argument("--scenario", required=True, help="scenario YAML")
    run.add_argument("--log", default=None, help="output log path")
    run.add_argument("--timings", default=None, help="write the timing report JSON here")
    run.add_argument("--headless", action="store_true", help="run free of the wall clock")
    run.add_argument("--seed", type=int, default=None, help="override rng_seed")
    run.add_argument("--log-points", action="store_true", help="record point clouds in the side file")
    run.set_defaults(fn=cmd_run)

    rep = sub.add_parser("replay", help="recompute metrics from a recorded log")
    rep.add_argument("--log", required=True)
    rep.add_argument("--metrics", action="store_true", help="print the full metrics JSON")
    rep.set_defaults(fn=cmd_replay)

    srv = sub.add_parser("serve", help="serve the live operator websocket endpoint")
    srv.add_argument("--config", default=None)
    srv.add_argument("--scenario", default=None, help="optional scripted events")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8765)
    srv.add_argument("--rtf", type=float, default=1.0,
                     help="time scale; 0 runs unthrottled")
    srv.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
