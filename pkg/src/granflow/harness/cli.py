"""Command line front end.

Exit codes: 0 when every asserted envelope holds, 2 when one is violated,
1 on a runtime or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .. import io
from .config import ConfigError, load_scenario
from .experiments import SUMMARY_HEADER, envelope_status, run_scenario, summary_table

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

COMMANDS = {
    "simulate": "simulate",
    "stationary": "stationary_only",
    "contract": "contract_pair",
    "converge": "converge",
    "wj-probe": "wj_probe",
    "counterexample": "counterexample",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="granflow", description="Granular media flow experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in [*COMMANDS, "report"]:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "report", help="scenario INI file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seeds with one seed")
        p.add_argument("--threads", type=int, default=1, help="concurrent scenario cells")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _print_rows(rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    w.writerows(rows)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "report":
            rows = summary_table(args.out)
            if not rows:
                raise ConfigError(f"no summary tables under {args.out}")
            io.write_table(args.out / "report.csv", SUMMARY_HEADER, rows)
            _print_rows(rows)
            return EXIT_OK if envelope_status(rows) else EXIT_VIOLATION
        s = load_scenario(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be unsigned")
            s = replace(s, seeds=[args.seed])
        mode = COMMANDS[args.command]
        if mode != "simulate" and mode != s.experiment:
            raise ConfigError(f"{args.config} declares experiment {s.experiment!r}, not {mode!r}")
        bundle = run_scenario(s, args.out, threads=args.threads, mode=mode)
    except Exception as e:  # noqa: BLE001 - any failure maps to exit code 1
        if getattr(args, "verbose", False):
            logging.exception("run failed")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    _print_rows(bundle.summary)
    if not bundle.envelopes_ok:
        for v in bundle.violations:
            print(f"violated: {v}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
