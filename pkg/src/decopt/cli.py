"""Command-line entry points: run, sweep and verify."""

from __future__ import annotations

import argparse
import json
import sys

from .algorithms import ConfigError
from .harness import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, EXIT_SUITE, \
    VERIFY_SUITES, default_out_dir, load_config, run, sweep, verify
from .metrics import STATUS_DIVERGED


def _parse_values(raw: str):
    values = []
    for item in raw.split(","):
        item = item.strip()
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return values


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="decopt",
        description="Decentralized non-convex optimization experiment runner")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None,
                       help=f"output directory (default $DECOPT_OUT or ./out)")

    p_sweep = sub.add_parser("sweep", help="run a config across an axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, each parsed as JSON when possible")
    p_sweep.add_argument("--out", default=None)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("--suite", required=True, choices=VERIFY_SUITES)
    p_verify.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            summary = run(config, out_dir=default_out_dir(args.out))
            for s in summary["runs"]:
                print(f"replicate {s['replicate']}: status={s['status']} "
                      f"final_gap={s['final_gap']:.6e} "
                      f"comm_rounds={s['comm_rounds']} "
                      f"grad_rounds={s['grad_eval_rounds']} "
                      f"csv={s.get('csv')}")
            print(f"median_final_gap={summary['median_final_gap']:.6e}")
            unexpected = (STATUS_DIVERGED in summary["statuses"]
                          and config.get("expect") != STATUS_DIVERGED)
            return EXIT_DIVERGED if unexpected else EXIT_OK

        if args.command == "sweep":
            config = load_config(args.config)
            report = sweep(config, args.axis, _parse_values(args.values),
                           out_dir=default_out_dir(args.out))
            for e in report["entries"]:
                print(f"{report['axis']}={e['value']}: "
                      f"median_final_gap={e['median_final_gap']:.6e} "
                      f"comm_to_target={e['median_comm_to_target']} "
                      f"grad_to_target={e['median_grad_to_target']}")
            print(f"ranking by comm rounds: {report['ranking_by_comm_rounds']}")
            print(f"ranking by grad rounds: {report['ranking_by_grad_rounds']}")
            return EXIT_OK

        if args.command == "verify":
            report = verify(args.suite, seed=args.seed)
            for line in report.lines():
                print(line)
            print(f"suite {report.suite}: "
                  f"{'PASS' if report.passed else 'FAIL'}")
            return EXIT_OK if report.passed else EXIT_SUITE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
