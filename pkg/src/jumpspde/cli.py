"""Command line entry point: ``jumpspde run`` and ``jumpspde plot``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import run_experiment
from .integrator import DivergenceError
from .results import ResultTable, UnknownQuantityError, emit_plot_data

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
THREADS_ENV = "JUMPSPDE_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jumpspde", description="Jump-driven SPDE numerical lab.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides output.directory)")
    run.add_argument("--seed", type=int, help="master seed (overrides mc.seed)")
    run.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    plot = sub.add_parser("plot", help="extract plot columns for one quantity")
    plot.add_argument("csv")
    plot.add_argument("quantity")
    plot.add_argument("--out", help="write to this file instead of stdout")
    return p


def _threads(flag) -> int:
    if flag is not None:
        k = flag
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            k = int(raw)
        except ValueError:
            raise ConfigError(f"not an integer: {raw!r}", THREADS_ENV) from None
    if k < 1:
        raise ConfigError("must be >= 1", "threads")
    return k


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("must lie in [0, 2^64)", "mc.seed")
            cfg["mc"]["seed"] = args.seed
        if args.out is not None:
            cfg["output"]["directory"] = args.out
        threads = _threads(args.threads)
        table = run_experiment(cfg, threads=threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    out = Path(cfg["output"]["directory"])
    csv_path = table.write(out / f"{cfg['experiment']}.csv")
    resolved = out / f"{cfg['experiment']}.config.json"
    resolved.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    failed = [r for r in table.rows if not r.passed]
    for r in failed:
        print(f"FAIL {r.experiment} {r.quantity} param={r.param} value={r.value} bound={r.bound}",
              file=sys.stderr)
    print(f"{csv_path}: {len(table.rows)} rows, {len(failed)} failed")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_plot(args) -> int:
    try:
        table = ResultTable.read(args.csv)
    except (OSError, ValueError) as exc:
        print(f"cannot read {args.csv}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = emit_plot_data(table, args.quantity, args.out)
    except UnknownQuantityError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_CONFIG
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return cmd_run(args) if args.command == "run" else cmd_plot(args)


if __name__ == "__main__":
    sys.exit(main())
