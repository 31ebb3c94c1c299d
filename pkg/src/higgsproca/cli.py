"""Command line entry point.

    higgsproca run CONFIG [--scenario NAME] [--seed N] [--out DIR]
    higgsproca list

Exit codes: 0 when every flag of the record passes, 1 when a flag fails,
2 for usage errors (bad arguments, unknown scenario, invalid config) and 3
for numerical failures.  ``HIGGSPROCA_THREADS`` sets the number of worker
processes used for independent chains (and numba's thread count).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="higgsproca", description="Run lattice Higgs / Proca experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario from a config file")
    r.add_argument("config", help="path to an INI experiment config")
    r.add_argument("--scenario", help="override [experiment] scenario")
    r.add_argument("--seed", type=int, help="override [experiment] seed")
    r.add_argument("--out", help="output directory for CSV/JSON artifacts")
    sub.add_parser("list", help="list the available scenarios")
    return p


def _apply_threads():
    n = os.environ.get("HIGGSPROCA_THREADS")
    if n and "NUMBA_NUM_THREADS" not in os.environ:
        os.environ["NUMBA_NUM_THREADS"] = n


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    _apply_threads()

    from . import config, scenarios
    from .errors import IntegrityError, InvalidParameterError, NumericalError, PoleError

    if args.command == "list":
        print("\n".join(scenarios.SCENARIOS))
        return EXIT_OK
    try:
        cfg = config.load(args.config).with_overrides(scenario=args.scenario, seed=args.seed, out=args.out)
        if cfg.scenario not in scenarios.SCENARIOS:
            raise scenarios.UnknownScenarioError(
                f"unknown scenario {cfg.scenario!r}; choose from {', '.join(scenarios.SCENARIOS)}")
        rec = scenarios.run_scenario(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, IntegrityError, PoleError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, fl in rec.flags.items():
        print(f"{'PASS' if fl['pass'] else 'FAIL'}  {name}: {fl['invariant']}")
    print(json.dumps({"scenario": rec.scenario, "passed": rec.passed,
                      "wall_clock": round(rec.wall_clock, 3)}))
    return EXIT_OK if rec.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
