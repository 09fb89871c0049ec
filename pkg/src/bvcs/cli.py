"""Command-line entry point: ``bvcs schema|validate|batch|report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .batch import emit_dashboard_html, emit_summary_csv, load_manifest, run_batch, summary_from_runs
from .errors import BvcsError, ManifestError
from .schema import emit_schema, generate_schema, parse_schema
from .sources import load_bindings
from .validator import ERROR, FAILED, PASSED, validate_policy
from .workbook import load_workbook

log = logging.getLogger("bvcs")

EXIT = {PASSED: 0, FAILED: 1, ERROR: 2}
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("BVCS_LOG", "warn").strip().lower(), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _add_timestamp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--no-timestamp",
        dest="timestamp",
        action="store_false",
        help="omit generation times and durations so output is byte-reproducible",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bvcs", description="Validate system outputs against spreadsheet calculation specifications.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schema", help="extract the input/output schema CSV from a workbook")
    p.add_argument("workbook", type=Path)
    p.add_argument("--root", required=True, help="CS sheet (tab) to start from")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--compat-neighbor-annotations", action="store_true", help="read a missing data source from the text cell right of an input")

    p = sub.add_parser("validate", help="validate one policy")
    p.add_argument("--workbook", type=Path, required=True)
    p.add_argument("--schema", type=Path, help="schema CSV; generated from --root when omitted")
    p.add_argument("--root", help="root sheet when no schema is given")
    p.add_argument("--bindings", type=Path, required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epsilon", type=float, help="compare raw numbers within this tolerance instead of rounding at format precision")
    _add_timestamp_flags(p)

    p = sub.add_parser("batch", help="validate every policy of a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--jobs", type=int, help="parallel policy tasks (overrides the manifest)")
    p.add_argument("--out", type=Path, help="output directory (overrides the manifest)")
    p.add_argument("--progress", action="store_true", help="ticker on stderr")
    _add_timestamp_flags(p)

    p = sub.add_parser("report", help="rebuild the dashboard from stored evidence")
    p.add_argument("--runs", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="dashboard HTML path")
    _add_timestamp_flags(p)
    return parser


def cmd_schema(args) -> int:
    try:
        wb = load_workbook(args.workbook)
        extraction = generate_schema(wb, args.root, neighbor_annotations=args.compat_neighbor_annotations)
        emit_schema(extraction, args.output)
    except (BvcsError, OSError) as exc:
        log.error("%s", exc)
        return 2
    print(f"{args.output}: {len(extraction.input_records)} inputs, {len(extraction.output_records)} outputs")
    return 0


def cmd_validate(args) -> int:
    try:
        wb = load_workbook(args.workbook)
        if args.schema is not None:
            schema = parse_schema(args.schema)
        elif args.root:
            schema = generate_schema(wb, args.root)
        else:
            log.error("either --schema or --root is required")
            return 2
        bindings = load_bindings(args.bindings)
        run = validate_policy(wb, schema, bindings, args.policy, args.out, epsilon=args.epsilon, timestamp=args.timestamp)
    except (BvcsError, OSError) as exc:
        log.error("%s", exc)
        return 2
    for issue in run.issues:
        log.warning("%s", issue)
    for line in run.diagnostics:
        log.info("%s", line)
    print(run.verdict_line())
    return EXIT[run.status]


def cmd_batch(args) -> int:
    try:
        manifest = load_manifest(args.manifest)
        if args.jobs is not None and args.jobs < 1:
            raise ManifestError("--jobs must be >= 1")
        out = args.out or manifest.out_dir
        summary = run_batch(manifest, jobs=args.jobs, out_dir=out, timestamp=args.timestamp, progress=args.progress)
        emit_summary_csv(summary, Path(out) / "summary.csv", timestamp=args.timestamp)
        emit_dashboard_html(summary, out, timestamp=args.timestamp)
    except (BvcsError, OSError) as exc:
        log.error("%s", exc)
        return 2
    for row in summary.rows:
        line = f"{row.cs_sheet} {row.policy_id} {row.status}"
        if row.status == FAILED:
            line += f" ({row.mismatches} mismatch{'es' if row.mismatches != 1 else ''})"
        print(line)
    counts = summary.counts()
    log.info("totals: %s", ", ".join(f"{k}={v}" for k, v in counts.items()))
    return summary.exit_code()


def cmd_report(args) -> int:
    try:
        summary = summary_from_runs(args.runs)
        from .report import render_dashboard_html

        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(render_dashboard_html(summary, args.out, args.timestamp), encoding="utf-8")
    except (BvcsError, OSError) as exc:
        log.error("%s", exc)
        return 2
    print(f"{args.out}: {len(summary.rows)} runs")
    return 0


COMMANDS = {"schema": cmd_schema, "validate": cmd_validate, "batch": cmd_batch, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
