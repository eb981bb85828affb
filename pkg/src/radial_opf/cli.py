"""Command line entry point: ``opf run`` and ``opf validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .hierarchy import ClusteringError, parse_clustering, validate_clustering
from .network import NetworkError, parse_network
from .scenario import (
    EXIT_INVALID,
    EXIT_OK,
    MODES,
    OpfConfig,
    Scenario,
    resolve_input,
    run_scenario,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opf", description="Voltage-constrained OPF on radial feeders.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write CSV/JSON results")
    run.add_argument("--network", required=True, help="network JSON, CSV directory, or shipped feeder name")
    run.add_argument("--clustering", help="clustering JSON (needed with --hierarchical)")
    run.add_argument("--mode", choices=MODES, help="gradient mode; 'none' applies nominal loads only")
    run.add_argument("--hierarchical", action="store_true", help="assemble gradients through the CC/RC hierarchy")
    run.add_argument("--load-scale", type=float, help="multiply all nominal loads (default 1)")
    run.add_argument("--config", help="JSON file with OPF settings")
    run.add_argument("--out", required=True, help="output directory")

    val = sub.add_parser("validate", help="check a network file and optionally a clustering")
    val.add_argument("--network", required=True)
    val.add_argument("--clustering")
    return parser


def _cmd_run(args) -> int:
    try:
        config = OpfConfig.load(args.config) if args.config else OpfConfig()
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    mode = args.mode or config.mode
    if mode is None:
        print("error: --mode is required (or set 'mode' in the config)", file=sys.stderr)
        return EXIT_INVALID
    scale = args.load_scale if args.load_scale is not None else (config.load_scale or 1.0)
    scenario = Scenario(
        network=args.network,
        mode=mode,
        out=args.out,
        clustering=args.clustering,
        hierarchical=args.hierarchical,
        load_scale=scale,
        config=config,
    )
    result = run_scenario(scenario)
    if "error" in result.summary and result.summary["error"]:
        print(f"error: {result.summary['error']}", file=sys.stderr)
    keys = ("mode", "termination", "iterations", "min_voltage", "max_voltage", "nodes_below_min", "wall_time_s")
    print(json.dumps({k: result.summary[k] for k in keys if k in result.summary}))
    return result.exit_code


def _cmd_validate(args) -> int:
    try:
        net = parse_network(resolve_input(args.network))
    except (NetworkError, OSError) as exc:
        print(f"network invalid: {exc}")
        return EXIT_INVALID
    print(f"network ok: {net.n} non-root nodes, root {net.names[0]}, {int(net.controllable[1:].sum())} flagged controllable")
    if not args.clustering:
        return EXIT_OK
    try:
        clustering = parse_clustering(resolve_input(args.clustering), net)
    except (ClusteringError, OSError) as exc:
        print(f"clustering invalid: {exc}")
        return EXIT_INVALID
    report = validate_clustering(net, clustering)
    if report.ok:
        print(f"clustering ok: {clustering.k} subtrees, {len(clustering.unclustered)} backbone nodes")
        return EXIT_OK
    print(report)
    return EXIT_INVALID


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
