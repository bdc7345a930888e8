"""Command-line entry point: ``falconn {falsify,monitor,simulate,distill}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

EXIT_FALSIFIED = 0
EXIT_SATISFIED = 0
EXIT_VIOLATED = 1
EXIT_ERROR = 2
EXIT_NOT_FALSIFIED = 3


class CliError(Exception):
    pass


def _falsify(args) -> int:
    from .falsify import FALSIFIED, load_config, persist_run, run_campaign

    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.budget is not None:
        config = replace(config, budget=args.budget)
    out = args.out or config.out
    result = run_campaign(config)
    if out:
        persist_run(result, out)
    print(json.dumps(result.summary(), sort_keys=True))
    return EXIT_FALSIFIED if result.outcome == FALSIFIED else EXIT_NOT_FALSIFIED


def read_signal_csv(path):
    """Every non-time column of a CSV as a channel; ``u_``/``y_`` prefixes are dropped."""
    from .stl import SampledSignal

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0] != "time":
        raise CliError(f"{path}: header must start with 'time'")
    names = [h[2:] if h[:2] in ("u_", "y_") else h for h in rows[0][1:]]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))
    return SampledSignal(data[:, 0], {n: data[:, j + 1] for j, n in enumerate(names)})


def _monitor(args) -> int:
    from .stl import parse_formula, robustness_exact

    spec = parse_formula(args.spec)
    rho = robustness_exact(spec, read_signal_csv(args.trace))
    print(f"{rho:.6f}")
    return EXIT_SATISFIED if rho >= 0 else EXIT_VIOLATED


def read_input_csv(path, names, horizon):
    """Piecewise-constant input from a ``time,<channel>...`` CSV (``u_`` prefixes allowed)."""
    from .sim import InputSignal

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "time":
        raise CliError(f"{path}: header must start with 'time'")
    header = [h[2:] if h.startswith("u_") else h for h in rows[0][1:]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    cols = []
    for n in names:
        if n not in header:
            raise CliError(f"{path}: missing input column {n!r}")
        cols.append(header.index(n) + 1)
    return InputSignal.from_samples(data[:, 0], data[:, cols], names, horizon)


def _simulate(args) -> int:
    from .sim import get_plant, run_experiment, write_trace

    plant = get_plant(args.plant)
    horizon = args.horizon or plant.horizon
    u = read_input_csv(args.input, plant.input_names, horizon)
    write_trace(run_experiment(plant, u, horizon), args.out)
    return 0


def _distill(args) -> int:
    from .falsify import load_dataset
    from .surrogate import load_checkpoint
    from .symreg import SrConfig, distill

    model = load_checkpoint(args.model)
    data = load_dataset(args.dataset)
    sym, _ = distill(model, data.traces, SrConfig(seed=args.seed))
    text = json.dumps(sym.to_dict(), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="falconn", description="Neural-symbolic falsification with optimal control.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("falsify", help="run a falsification campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=_falsify)

    p = sub.add_parser("monitor", help="exact robustness of a trace at t=0")
    p.add_argument("--trace", required=True)
    p.add_argument("--spec", required=True)
    p.set_defaults(func=_monitor)

    p = sub.add_parser("simulate", help="run a built-in plant on an input CSV")
    p.add_argument("--plant", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=float)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("distill", help="symbolic model from a surrogate checkpoint and a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_distill)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
