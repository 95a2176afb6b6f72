"""Command-line entry point.

Subcommands map to scenarios: profile (cutoff_profile), critical
(critical_scaling), restricted (restricted_scaling), properties
(property_suite), kernel (kernel_export), couple (couple_trace). Flags
--seed/--workers/--out/--format override the config file; SCANMIX_WORKERS
provides the default worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import harness

_SUBCOMMANDS = {
    "kernel": "kernel_export",
    "profile": "cutoff_profile",
    "critical": "critical_scaling",
    "restricted": "restricted_scaling",
    "properties": "property_suite",
    "couple": "couple_trace",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanmix",
        description="Experiments on randomized systematic-scan Glauber dynamics "
        "for the complete-graph Ising model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument(
            "--config",
            required=name != "properties",
            help="JSON experiment configuration",
        )
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=["csv", "json"], default=None)
        if name == "properties":
            p.add_argument(
                "--mutation",
                choices=["self_spin"],
                default=None,
                help="fault injection: include the updated vertex's own spin in the threshold",
            )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = _build_parser().parse_args(argv)
    scenario = _SUBCOMMANDS[args.command]
    if args.config is not None:
        cfg = harness.load_config(args.config)
        if cfg.scenario != scenario:
            raise SystemExit(
                f"config declares scenario {cfg.scenario!r} but subcommand {args.command!r} "
                f"runs {scenario!r}"
            )
    else:
        cfg = harness.config_from_dict({"scenario": scenario})
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if getattr(args, "mutation", None) is not None:
        overrides["mutation"] = args.mutation
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    result = harness.run_scenario(cfg, cli_workers=args.workers)
    for path in result["paths"]:
        print(path)
    return 0 if result["ok"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
