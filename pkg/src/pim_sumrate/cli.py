"""``pim-sumrate`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (EXPERIMENTS, aggregate, convergence_report, rows_to_csv, rows_to_json, run_experiment,
                          spec_from_dict)
from .phase_mm import SURROGATE_KINDS
from .scenario import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

log = logging.getLogger("pim_sumrate")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pim-sumrate", description="Mirror-assisted MISO sum-rate experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="JSON experiment config; omitted keys use desk-scale defaults")
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--realizations", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, dest="output_path")
    p.add_argument("--format", choices=("csv", "json"), dest="output_format")
    p.add_argument("--surrogate", choices=SURROGATE_KINDS)
    p.add_argument("--weighting", choices=("weighted", "paper_literal"))
    p.add_argument("--waterfill", choices=("exact", "paper"))
    p.add_argument("--anchor", choices=("current", "pinv"), help="right inverse used in the weighted phase map")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_config(path: Path) -> dict:
    text = path.read_text()  # OSError propagates to the I/O exit path
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _summary_text(summary) -> str:
    lines = []
    for g in summary:
        lines.append(
            f"K={g['K']} M={g['M']} N={g['N']} snr={g['snr_db']:g}dB {g['method']:<13} "
            f"mean={g['mean']:.4f} std={g['std']:.4f} n={g['count']} infeasible={g['infeasible']} skipped={g['skipped']}"
        )
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = _load_config(args.config) if args.config else {}
        spec = spec_from_dict(
            raw, args.experiment,
            master_seed=args.master_seed, realizations=args.realizations, workers=args.workers,
            output_path=str(args.output_path) if args.output_path else None,
            output_format=args.output_format, surrogate=args.surrogate, weighting=args.weighting,
            waterfill=args.waterfill, anchor=args.anchor,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    rows = run_experiment(spec)
    extra = {}
    if spec.experiment == "convergence":
        report = convergence_report(spec, rows)
        extra["median_iterations"] = report.median_iterations
        extra["unconverged"] = report.unconverged
        summary = aggregate(rows, value="mm_iterations")
        print("median MM iterations to tolerance: "
              + ", ".join(f"N={n}: {m:g}" for n, m in report.median_iterations.items()), file=sys.stderr)
    else:
        summary = aggregate(rows)
        print(_summary_text(summary), file=sys.stderr)

    text = rows_to_csv(rows) if spec.output_format == "csv" else rows_to_json(spec, rows, {"groups": summary, **extra})
    try:
        if spec.output_path:
            out = Path(spec.output_path)
            out.write_text(text, newline="")
            if spec.experiment == "convergence" and spec.output_format == "csv":
                out.with_name(out.stem + "_mse.csv").write_text(report.table_csv(), newline="")
            log.info("wrote %d rows to %s", len(rows), out)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
