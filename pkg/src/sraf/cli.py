"""Command-line interface.

    sraf run --config <file> [--agent <endpoint> ...] --out <dir>
             [--seed <u64>] [--workers N] [--region CODE]
    sraf report --in <dir>
    sraf replay <trace>
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config, with_overrides
from .errors import AgentError, ReportError, SrafError
from .orchestrator import emit_report, replay_trace, run_benchmark


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sraf",
        description="Closed-loop robustness benchmark for driving agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a benchmark config")
    run.add_argument("--config", required=True, help="benchmark config file")
    run.add_argument("--agent", action="append", default=None,
                     help="agent endpoint (builtin:privileged, builtin:sensor, "
                          "cmd:<command>, tcp:<host>:<port>); repeatable, "
                          "overrides the config's agent list")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="master seed override")
    run.add_argument("--workers", type=int, default=1, help="parallel run workers")
    run.add_argument("--region", default=None, help="energy region code override")

    report = sub.add_parser("report", help="regenerate reports from a results log")
    report.add_argument("--in", dest="results_dir", required=True,
                        help="directory containing results.log")

    replay = sub.add_parser("replay", help="re-verify a recorded run trace")
    replay.add_argument("trace", help="trace file to replay")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            cfg = with_overrides(
                cfg,
                agents=tuple(args.agent) if args.agent else None,
                seed=args.seed,
                region=args.region,
            )
            rows, out = run_benchmark(cfg, args.out, workers=args.workers)
            print(f"wrote {out / 'leaderboard.csv'}")
            for row in rows:
                rds = "-" if row.rds is None else f"{row.rds:.3f}"
                print(f"  {row.agent}: DS={row.ds:.3f} RDS={rds}")
            return 0
        if args.command == "report":
            path = emit_report(args.results_dir)
            print(f"wrote {path}")
            return 0
        if args.command == "replay":
            result = replay_trace(args.trace)
            print(f"trace verified: {result.agent} {result.route_id}/"
                  f"{result.condition_id.name} D={result.driving_score:.3f}")
            return 0
    except (AgentError, ReportError, SrafError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
