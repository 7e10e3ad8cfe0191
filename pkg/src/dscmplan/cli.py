"""Command line entry point.

``dscmplan [global flags] <subcommand> [options]``. On failure the last
line on stderr is ``error: <category>: <message>`` and the exit status
identifies the category (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__, reporting
from .config import LUT_MODELS, MODES, load_config
from .errors import DscmError

EXIT_CODES = {
    "usage": 2,
    "configuration": 3,
    "invalid-parameter": 3,
    "invalid-index": 3,
    "insufficient-data": 4,
    "fit-failure": 4,
    "convergence": 5,
    "bracketing": 5,
    "infeasible": 6,
    "infeasible-leaf": 6,
    "lut": 7,
    "lut-range": 7,
    "consistency": 7,
    "unit-mismatch": 7,
    "io": 8,
    "error": 1,
}


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CODES["usage"], f"error: usage: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dscmplan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dscmplan {__version__}")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--mode", choices=MODES, help="theory only, simulation, or both")
    p.add_argument("--lut-model", choices=LUT_MODELS, help="clipping-noise model behind the table")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("capacity-sweep", help="capacity and ESNR versus clipping ratio")
    sub.add_parser("esnr-validate", help="theoretical against simulated ESNR")
    fit = sub.add_parser("fit-noise", help="harvest and fit the clipping-noise model")
    fit.add_argument("--ses", type=_floats, help="loading to harvest under (default: self-consistent)")
    fit.add_argument("--ratio-db", type=float, help="clipping ratio (default: optimal)")
    lut = sub.add_parser("build-lut", help="tabulate BER over spectral efficiency and loss")
    lut.add_argument("--noise-model", help="fitted noise model to use instead of fitting one")
    sub.add_parser("optimize", help="baseline, Gaussian-table and piecewise-table loadings")
    sim = sub.add_parser("simulate", help="Monte-Carlo BER with and without clipping")
    sim.add_argument("--ses", type=_floats, help="per-leaf spectral efficiencies")
    sim.add_argument("--ratio-db", type=float, help="clipping ratio (default: optimal)")
    sim.add_argument("--dump-waveform", action="store_true", help="write the first clipped block")
    return p


def run(argv: Optional[List[str]] = None) -> List[str]:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = dict(seed=args.seed, output_dir=args.out, mode=args.mode, lut_model=args.lut_model)
    if args.command == "simulate":
        sim = {}
        if args.ses is not None:
            sim["ses"] = args.ses
        if args.ratio_db is not None:
            sim["ratio_db"] = args.ratio_db
        if args.dump_waveform:
            sim["dump_waveform"] = True
        overrides["simulation"] = sim or None
    cfg = load_config(args.config, **overrides)
    if args.command == "capacity-sweep":
        return reporting.run_capacity_sweep(cfg)
    if args.command == "esnr-validate":
        return reporting.run_esnr_validation(cfg)
    if args.command == "fit-noise":
        return reporting.run_fit_noise(cfg, args.ses, args.ratio_db)
    if args.command == "build-lut":
        return reporting.run_build_lut(cfg, args.noise_model)
    if args.command == "optimize":
        return reporting.run_full_optimization(cfg)
    return reporting.run_simulation(cfg)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        paths = run(argv)
    except DscmError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
