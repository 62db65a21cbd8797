"""Command line entry point: ``dpmarket <experiment> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import run_experiment, run_suite
from .config import EXPERIMENTS, ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _rho_list(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid rho list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpmarket", description="Run a data-market experiment and write CSV results.")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS + ("all",):
        p = sub.add_parser(name, help="every experiment in turn" if name == "all" else f"run {name}")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", default=f"results/{name}", help="output directory")
        p.add_argument("--seed", type=int, help="master seed (nonnegative)")
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--family", help="gaussian, uniform or exponential")
        p.add_argument("--rho", type=_rho_list, help="comma list from -1,0,1")
        p.add_argument("--delta", type=float, help="Hoeffding confidence level")
        p.add_argument("--population", choices=("finite", "infinite"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = "proc-exo" if args.experiment == "all" else args.experiment
    try:
        config = load_config(
            args.config,
            experiment=experiment,
            seed=args.seed,
            trials=args.trials,
            workers=args.workers,
            family=args.family,
            rho=args.rho,
            delta=args.delta,
            population=args.population,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.experiment == "all":
            timings = run_suite(config, args.out)
            for name, secs in timings.items():
                print(f"{name}: {secs:.1f}s")
        else:
            _, manifest = run_experiment(config, args.out)
            print(f"wrote {manifest.parent}")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
