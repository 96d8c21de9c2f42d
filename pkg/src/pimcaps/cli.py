"""pimcaps command line: plan, simulate, calibrate, compare, sweep.

Exit codes: 0 success, 2 config error, 3 simulation error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import report
from .config import BUNDLED, BenchmarkConfig, ConfigError, load_config
from .planner import DEFAULT_SWEEP_HZ

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIM = 3
EXIT_IO = 4

OUT_DIR_ENV = "PIMCAPS_OUT_DIR"

log = logging.getLogger("pimcaps")


class _IOFailure(Exception):
    pass


def _parse_freq(text: str) -> float:
    t = text.strip().lower()
    for suffix, scale in (("ghz", 1e9), ("mhz", 1e6), ("khz", 1e3), ("hz", 1.0)):
        if t.endswith(suffix):
            return float(t[: -len(suffix)]) * scale
    value = float(t)
    # bare numbers below 1e5 are taken as MHz
    return value * 1e6 if value < 1e5 else value


def _split(values: Optional[Sequence[str]]) -> List[str]:
    out: List[str] = []
    for v in values or ():
        out.extend(x.strip() for x in v.split(",") if x.strip())
    return out


def _configs(names: Sequence[str]) -> List[BenchmarkConfig]:
    names = _split(names)
    if not names:
        raise ConfigError("no --config given")
    expanded: List[str] = []
    for n in names:
        expanded.extend(BUNDLED if n == "all" else [n])
    try:
        return [load_config(n) for n in expanded]
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from None


def _one_config(names) -> BenchmarkConfig:
    cfgs = _configs(names)
    if len(cfgs) != 1:
        raise ConfigError("this command takes exactly one --config")
    return cfgs[0]


def _emit(text: str, args, default_name: str, bc: Optional[BenchmarkConfig] = None) -> None:
    target: Optional[Path] = None
    if args.out:
        target = Path(args.out)
        if target.is_dir():
            target = target / default_name
    else:
        out_dir = (bc.output_dir if bc and bc.output_dir else None) or os.environ.get(OUT_DIR_ENV)
        if out_dir:
            target = Path(out_dir) / default_name
    if target is None:
        sys.stdout.write(text)
        return
    try:
        report.write_atomic(target, text)
    except OSError as e:
        raise _IOFailure(f"cannot write {target}: {e.strerror or e}") from None
    log.info("wrote %s", target)


def _cmd_plan(args) -> None:
    bc = _one_config(args.config)
    hw = report.hardware(bc, args.freq)
    _, text = report.cmd_plan(bc, report.cost_params(hw))
    _emit(text, args, f"{bc.name}.plan.csv", bc)


def _cmd_simulate(args) -> None:
    bc = _one_config(args.config)
    scenarios = _split(args.scenario) or ["PIMCapsNet"]
    if len(scenarios) != 1:
        raise ConfigError("simulate takes exactly one --scenario")
    trace = [] if args.trace else None
    out, text = report.cmd_simulate(bc, scenarios[0], args.seed, args.freq, args.dim, trace)
    _emit(text, args, f"{bc.name}.{out['scenario']}.json", bc)
    if args.trace:
        try:
            report.write_atomic(Path(args.trace), report.trace_csv(trace))
        except OSError as e:
            raise _IOFailure(f"cannot write {args.trace}: {e.strerror or e}") from None


def _cmd_calibrate(args) -> None:
    _, text = report.cmd_calibrate(args.seed, args.samples)
    _emit(text, args, "calibration.json")


def _cmd_compare(args) -> None:
    cfgs = _configs(args.config)
    scenarios = _split(args.scenario) or list(cfgs[0].scenarios)
    _, text = report.cmd_compare(cfgs, scenarios, args.seed, args.freq)
    _emit(text, args, "compare.csv")


def _cmd_sweep(args) -> None:
    cfgs = _configs(args.config)
    freqs = args.freqs or list(DEFAULT_SWEEP_HZ)
    texts = []
    for i, bc in enumerate(cfgs):
        _, text = report.cmd_sweep(bc, freqs, args.seed)
        texts.append(text if i == 0 else text.split("\n", 1)[1])
    name = f"{cfgs[0].name}.sweep.csv" if len(cfgs) == 1 else "sweep.csv"
    _emit("".join(texts), args, name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pimcaps", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config=True, freq=True):
        if config:
            sp.add_argument("--config", action="append", metavar="PATH|NAME",
                            help="config file, bundled name (caps-mn1 ...) or 'all'; repeatable")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help=f"output file or directory (default: ${OUT_DIR_ENV} or stdout)")
        if freq:
            sp.add_argument("--freq", type=_parse_freq, help="vault clock, e.g. 625MHz")

    sp = sub.add_parser("plan", help="cost model per distribution dimension (CSV)")
    common(sp)
    sp.set_defaults(func=_cmd_plan)

    sp = sub.add_parser("simulate", help="simulate one scenario (JSON)")
    common(sp)
    sp.add_argument("--scenario", action="append")
    sp.add_argument("--dim", choices=("B", "L", "H"), help="override the planner's dimension")
    sp.add_argument("--trace", metavar="CSV", help="also write per-vault execution intervals")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("calibrate", help="fit the exponential recovery factor (JSON)")
    common(sp, config=False, freq=False)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.set_defaults(func=_cmd_calibrate)

    sp = sub.add_parser("compare", help="scenarios normalized to BaselineModel (CSV)")
    common(sp)
    sp.add_argument("--scenario", action="append", help="comma-separated or repeatable")
    sp.set_defaults(func=_cmd_compare)

    sp = sub.add_parser("sweep", help="speedup per (frequency, dimension) cell (CSV)")
    common(sp, freq=False)
    sp.add_argument("--freq", dest="freqs", type=_parse_freq, action="append",
                    help="repeatable; default 312.5, 625 and 937.5 MHz")
    sp.set_defaults(func=_cmd_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except report.SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM
    except _IOFailure as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
