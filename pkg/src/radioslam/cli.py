"""Command-line entry point: ``radioslam --scenario FILE [overrides]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import METHODS, export, run_monte_carlo, summary_csv
from .scenario import ScenarioError, parse_scenario, validate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("radioslam")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radioslam", description="Seeded Monte Carlo runs of the radio SLAM filter.")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--seed", type=int, help="master seed (overrides the file)")
    p.add_argument("--runs", type=int, help="Monte Carlo runs")
    p.add_argument("--particles", type=int, help="particles per agent")
    p.add_argument("--measurements", nargs="+", choices=("aoa", "toa", "rss"), help="enabled categories")
    p.add_argument("--crowdsourcing", choices=("on", "off"), help="cloud map sharing")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS),
                   help="which filters to run (default: both)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def apply_overrides(sc, args):
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.runs is not None:
        kw["runs"] = args.runs
    if args.measurements:
        kw["measurements"] = tuple(args.measurements)
        kw["agents"] = tuple(replace(a, measurements=None) for a in sc.agents)
    if args.particles is not None:
        kw["slam"] = replace(sc.slam, n_particles=args.particles)
    if args.crowdsourcing is not None:
        kw["crowdsourcing"] = replace(sc.crowdsourcing, enabled=args.crowdsourcing == "on")
    out = replace(sc, **kw)
    validate(out)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        sc = apply_overrides(parse_scenario(args.scenario), args)
    except (OSError, ScenarioError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_monte_carlo(sc, methods=tuple(args.methods))
        export(result, args.out)
    except OSError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # any abort inside the filter
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for m in args.methods:
        log.info("%s: %d failed run(s)", m, result.failures(m))
    sys.stdout.write(summary_csv(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
