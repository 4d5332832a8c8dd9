"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 strict-mode pipeline error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .ingest import dumps_grid, grid_from_json, load_grid
from .metrics import evaluate
from .pipeline import (
    PipelineConfig,
    PipelineError,
    compute_stats,
    dumps_jsonl,
    load_answers,
    load_docs,
    load_questions,
    run_pipeline,
)
from .qa import linearize
from .structure import Algorithm, HierarchyOptions, StructuredTable, build_structured, dumps_table

LOGGER = logging.getLogger("tabqa")

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE, EXIT_IO = 0, 1, 2, 3

# Values used when neither a flag nor the config file sets an option.
DEFAULTS = {
    "algo": 1,
    "indent_threshold": 10.0,
    "separator": " - ",
    "keep_label_rows": False,
    "answerer": "lookup",
    "external_cmd": None,
    "workers": 1,
    "strict": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _add_hierarchy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", type=int, choices=(1, 2), default=None, help="flattening algorithm (2 uses bboxes)")
    p.add_argument("--indent-threshold", type=float, default=None, help="indent threshold in pixels")
    p.add_argument("--separator", default=None, help="text inserted between child and parent label")
    p.add_argument("--keep-label-rows", action="store_true", default=None, help="keep label-only rows")
    p.add_argument("--config", default=None, help="JSON file with option defaults; flags win")


def _settings(args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        file_values = _read_json(args.config)
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(file_values)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _hierarchy(settings: dict) -> HierarchyOptions:
    try:
        return HierarchyOptions(
            algorithm=Algorithm.V2 if int(settings["algo"]) == 2 else Algorithm.V1,
            indent_threshold=float(settings["indent_threshold"]),
            separator=settings["separator"],
            drop_label_rows=not settings["keep_label_rows"],
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_parse(args) -> int:
    html = Path(args.html).read_text(encoding="utf-8")
    _write(dumps_grid(load_grid(html)) + "\n", args.out)
    return EXIT_OK


def cmd_structure(args) -> int:
    grid = grid_from_json(_read_json(args.grid))
    table = build_structured(grid, _hierarchy(_settings(args)))
    _write(dumps_table(table) + "\n", args.out)
    if args.csv:
        Path(args.csv).write_text(table.to_csv(), encoding="utf-8", newline="")
    return EXIT_OK


def cmd_linearize(args) -> int:
    table = StructuredTable.from_json(_read_json(args.table))
    _write(linearize(table).text + "\n", None)
    return EXIT_OK


def cmd_answer(args) -> int:
    settings = _settings(args)
    try:
        config = PipelineConfig(
            hierarchy=_hierarchy(settings),
            answerer=settings["answerer"],
            external_cmd=settings["external_cmd"],
            strict=bool(settings["strict"]),
            workers=int(settings["workers"]),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    docs = load_docs(args.docs)
    questions = load_questions(args.questions)
    try:
        answers = run_pipeline(docs, questions, config)
    except PipelineError as exc:
        LOGGER.error("%s", exc)
        return EXIT_PIPELINE
    _write(dumps_jsonl(answers), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate(load_answers(args.pred), load_questions(args.gt))
    _write(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    if args.per_question:
        Path(args.per_question).write_text(report.per_question_csv(), encoding="utf-8", newline="")
    return EXIT_OK


def cmd_stats(args) -> int:
    docs = load_docs(args.docs)
    questions = load_questions(args.questions) if args.questions else None
    report = compute_stats(docs, questions)
    _write(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tabqa", description="Structure recognized HTML tables and answer questions over them.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="HTML table -> grid JSON")
    p.add_argument("--html", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("structure", help="grid JSON -> structured table JSON")
    p.add_argument("--grid", required=True)
    _add_hierarchy_flags(p)
    p.add_argument("--out")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser("linearize", help="print the linearized table")
    p.add_argument("--table", required=True)
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("answer", help="run the pipeline over a document batch")
    p.add_argument("--docs", required=True, help="directory of <doc_id>.html files")
    p.add_argument("--questions", required=True, help="questions JSONL")
    p.add_argument("--answerer", choices=("zero", "lookup", "external"), default=None)
    p.add_argument("--external-cmd", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--strict", action="store_true", default=None)
    _add_hierarchy_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("eval", help="score predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.add_argument("--per-question", help="write per-question CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--docs", required=True)
    p.add_argument("--questions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tabqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        # unreadable files and malformed JSON/HTML/record contents
        print(f"tabqa: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
