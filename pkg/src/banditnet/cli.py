"""Command line: run experiments, audit superarm grids, check config files."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .combinatorial import DEFAULT_CAP, EnumerationTooLarge, WeightGrid, enumerate_superarms, write_superarms_csv
from .config import EXPERIMENTS, ConfigError, load_config
from .data import simulate_prices, write_panel
from .harness import emit_report, run_experiment

log = logging.getLogger("banditnet")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="banditnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write its report")
    run.add_argument("--config", required=True, help="TOML experiment file or config.resolved.json")
    run.add_argument("--experiment", choices=EXPERIMENTS, help="override the experiment type")
    run.add_argument("--out", help="output directory (overrides 'out' in the config)")
    run.add_argument("--seeds", type=int, help="number of seeds")
    run.add_argument("--seed-base", type=int, help="first seed; replication i uses seed_base + i")
    run.add_argument("--workers", type=int, help="worker processes")

    enum = sub.add_parser("enumerate-superarms", help="list the discrete weight grid for K assets")
    enum.add_argument("--assets", type=int, required=True, help="number of assets K")
    enum.add_argument("--max-nonzero", type=int, help="cap on non-zero weights per superarm")
    enum.add_argument("--cap", type=int, default=DEFAULT_CAP, help="refuse grids larger than this")
    enum.add_argument("--names", help="comma-separated asset names for the header")
    enum.add_argument("--out", help="CSV destination (default: stdout)")

    val = sub.add_parser("validate-config", help="check a config file and print it with defaults filled in")
    val.add_argument("config")

    sim = sub.add_parser("simulate-prices", help="write a toy wide price CSV for trying things out")
    sim.add_argument("--assets", type=int, default=6)
    sim.add_argument("--days", type=int, default=500)
    sim.add_argument("--regimes", type=int, default=2)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    return p


def _run(args) -> int:
    config = load_config(args.config).with_overrides(
        experiment=args.experiment, out=args.out, n_seeds=args.seeds,
        seed_base=args.seed_base, workers=args.workers)
    if config.out is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    report = run_experiment(config)
    path = emit_report(report, config.out)
    for note in report.notes:
        log.info("note: %s", note)
    print(path)
    return 0


def _enumerate(args) -> int:
    names = None if args.names is None else [s.strip() for s in args.names.split(",")]
    if names is not None and len(names) != args.assets:
        raise ValueError(f"--names lists {len(names)} assets, expected {args.assets}")
    superarms = enumerate_superarms(WeightGrid(args.assets), args.max_nonzero, args.cap)
    if args.out is None:
        sys.stdout.write(write_superarms_csv(superarms, None, names))
    else:
        write_superarms_csv(superarms, args.out, names)
        print(f"{len(superarms)} superarms -> {args.out}")
    return 0


def _validate(args) -> int:
    config = load_config(args.config)
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return 0


def _simulate(args) -> int:
    write_panel(simulate_prices(args.assets, args.days, args.seed, args.regimes), args.out)
    print(args.out)
    return 0


COMMANDS = {"run": _run, "enumerate-superarms": _enumerate,
            "validate-config": _validate, "simulate-prices": _simulate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, EnumerationTooLarge, ValueError, KeyError, OSError) as exc:
        print(f"banditnet: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
