"""Command-line entry points.

Subcommands: rollout, attack, evaluate, verify-report, grad-check, and
make-fixtures (writes the in-repo fixture scenes to disk so the other
commands have something to chew on).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import fixtures, runner

__all__ = ["main"]


def _add_common(parser, scenario=True, config=True, out=True):
    if scenario:
        parser.add_argument("--scenario", required=True, help="scenario JSON file")
    if config:
        parser.add_argument("--config", required=True, help="run config JSON file")
    if out:
        parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="root seed override (default: config value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advtex",
        description="Adversarial vertex-color attacks on a toy manipulation policy.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="clean rollout: observations, actions, weights")
    _add_common(p)

    p = sub.add_parser("attack", help="optimize a texture and write the run report")
    _add_common(p)
    p.add_argument("--trials", type=int, default=None, help="evaluation trial count")
    p.add_argument("--level", choices=["L0", "L1", "L2", "L3"], default=None,
                   help="perturbation level override")
    p.add_argument("--mode", choices=["untargeted", "targeted"], default=None,
                   help="attack mode override")

    p = sub.add_parser("evaluate", help="evaluate a saved texture")
    _add_common(p)
    p.add_argument("--colors", required=True, help="VCOL file from a previous attack")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--sweep", action="append", default=None,
                   choices=["camera", "rotation", "position"],
                   help="geometric sweep(s) to run; default: all configured")
    p.add_argument("--defense", default=None,
                   choices=["additive-noise", "median-blur", "bit-depth-reduction"],
                   help="restrict the defense table to one kind")

    p = sub.add_parser("verify-report", help="recheck report stats against raw trials")
    p.add_argument("--out", required=True, help="directory holding report.json")

    sub.add_parser("grad-check", help="run all finite-difference gradient audits")

    p = sub.add_parser("make-fixtures", help="write a fixture scenario to disk")
    p.add_argument("--out", required=True)
    p.add_argument("--name", choices=["tabletop", "micro"], default="tabletop")
    p.add_argument("--frames", type=int, default=None, help="trajectory length override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "rollout":
        report = runner.run_rollout(args.scenario, args.config, args.out, seed=args.seed)
        print(json.dumps(report, indent=2))
        return 0

    if args.command == "attack":
        overrides = {}
        if args.level is not None:
            overrides["level"] = args.level
        if args.mode is not None:
            overrides["mode"] = args.mode
        report = runner.run_attack(args.scenario, args.config, args.out,
                                   seed=args.seed, trials=args.trials,
                                   overrides=overrides or None)
        print(json.dumps({k: report[k] for k in
                          ("adversarial", "control", "threshold", "fidelity")}, indent=2))
        print(f"report written to {args.out}/report.json")
        return 0

    if args.command == "evaluate":
        report = runner.run_evaluate(args.scenario, args.config, args.colors, args.out,
                                     seed=args.seed, trials=args.trials,
                                     sweeps=args.sweep, defense=args.defense)
        print(json.dumps(report["tables"], indent=2))
        return 0

    if args.command == "verify-report":
        result = runner.verify_report(args.out)
        print(json.dumps(result, indent=2))
        return 0 if result["ok"] else 1

    if args.command == "grad-check":
        results = runner.run_grad_check(verbose=True)
        return 0 if all(ok for _, _, _, ok in results) else 1

    if args.command == "make-fixtures":
        path = fixtures.write_fixture(args.out, name=args.name, t_len=args.frames)
        print(path)
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
