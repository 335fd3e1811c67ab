"""``entrod`` command line: estimate, predict, sweep, selftest.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from entrod.core import DomainError
from entrod.harness.config import ConfigError, build_spec, read_config_file
from entrod.harness.io import write_records
from entrod.harness.runner import NumericalError, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2, which we reserve
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--source", help="iid(p..) | markov(file) | geom(q) | gauss(m,s) | ar1(phi,s)")
    p.add_argument("--input", help="external sequence: text (one value per line) or binary")
    p.add_argument("--scheme", help="finite[(D)] | dyadic | quantile | incremental")
    p.add_argument("--ref", help="counting | uniform | geom(q) | gauss(m,s) | points(p1,..)")
    p.add_argument("--n-max", dest="n_max")
    p.add_argument("--replicates")
    p.add_argument("--seed")
    p.add_argument("--window", help="Cesaro window cap, or 'exact'")
    p.add_argument("--exact-below", dest="exact_below")
    p.add_argument("--margin")
    p.add_argument("--level-cap", dest="level_cap")
    p.add_argument("--units", choices=("nats", "bits"))
    p.add_argument("--format", choices=("csv", "jsonl"))
    p.add_argument("--jobs", help="worker processes for replicates")
    p.add_argument("--output", default="-", help="output path ('-' for stdout)")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="entrod", description="Universal entropy-rate estimation and prediction.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("estimate", "predict"):
        _common(sub.add_parser(name))
    sw = sub.add_parser("sweep")
    _common(sw)
    sw.add_argument("--sweep", help="parameter grid, e.g. margin=0,2,4,8;window=256,512")
    sw.add_argument("--task", dest="sweep_task", choices=("estimate", "predict"))
    st = sub.add_parser("selftest")
    st.add_argument("--quick", action="store_true", help="only the fast criteria")
    st.add_argument("--output", default="-")
    return ap


_SPEC_KEYS = ("source", "input", "scheme", "ref", "n_max", "replicates", "seed", "window",
              "exact_below", "margin", "level_cap", "units", "format", "jobs", "sweep", "sweep_task")


def _selftest(args) -> int:
    from entrod.acceptance import run_all

    results = run_all(quick=args.quick)
    lines = []
    for r in results:
        print(r.line(), file=sys.stderr)
        lines.append(f"{r.number}\t{r.title}\t{'pass' if r.passed else 'fail'}\t{r.summary}\n")
    data = "".join(lines).encode()
    if args.output == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(args.output).write_bytes(data)
    return EXIT_OK if all(r.passed and r.in_time for r in results) else EXIT_NUMERICAL


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="entrod: %(message)s")
    try:
        args = make_parser().parse_args(argv)
        if args.command == "selftest":
            return _selftest(args)
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k: getattr(args, k, None) for k in _SPEC_KEYS}
        overrides["task"] = args.command
        spec = build_spec(file_values, overrides)
        records = run(spec)
        write_records(records, None if args.output == "-" else args.output, spec.format)
        return EXIT_OK
    except ConfigError as e:
        print(f"entrod: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DomainError, FloatingPointError, ArithmeticError) as e:
        print(f"entrod: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
