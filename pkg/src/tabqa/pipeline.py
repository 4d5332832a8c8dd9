"""Batch orchestration: documents in, answers out, plus corpus statistics.

Canonical on-disk layout is a directory of ``<doc_id>.html`` files and one
questions JSONL whose records carry a ``doc_id``.  Dataset-specific layouts
plug in through the ``adapter`` arguments of the loaders.
"""

from __future__ import annotations

import json
import logging
import multiprocessing.util
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .ingest import detect_blank, normalize_grid, parse_table_html
from .qa import ExternalAnswerer, answer_external, answer_lookup, answer_zero
from .records import ZERO, AnswerRecord, QuestionRecord
from .structure import HierarchyOptions, build_structured

LOGGER = logging.getLogger(__name__)

ANSWERERS = ("zero", "lookup", "external")


class PipelineError(RuntimeError):
    """A document failed while running in strict mode."""


@dataclass(frozen=True)
class PipelineConfig:
    hierarchy: HierarchyOptions = HierarchyOptions()
    answerer: str = "lookup"
    external_cmd: Optional[str] = None
    strict: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.answerer not in ANSWERERS:
            raise ValueError(f"unknown answerer {self.answerer!r}")
        if self.answerer == "external" and not self.external_cmd:
            raise ValueError("external answerer requires a command")


# Per-process state: each worker owns at most one external connection.
_worker_config: Optional[PipelineConfig] = None
_worker_endpoint: Optional[ExternalAnswerer] = None


def _init_worker(config: PipelineConfig) -> None:
    global _worker_config, _worker_endpoint
    _worker_config = config
    _worker_endpoint = None


def _endpoint(config: PipelineConfig) -> ExternalAnswerer:
    global _worker_endpoint
    if _worker_endpoint is None:
        assert config.external_cmd is not None
        _worker_endpoint = ExternalAnswerer(config.external_cmd)
        multiprocessing.util.Finalize(_worker_endpoint, _worker_endpoint.close, exitpriority=10)
    return _worker_endpoint


def _close_endpoint() -> None:
    global _worker_endpoint
    if _worker_endpoint is not None:
        _worker_endpoint.close()
        _worker_endpoint = None


def _answer_document(
    doc_id: str,
    html: Optional[str],
    questions: Sequence[tuple[int, QuestionRecord]],
    config: PipelineConfig,
) -> list[tuple[int, AnswerRecord]]:
    def zeros() -> list[tuple[int, AnswerRecord]]:
        return [(i, AnswerRecord(q.question_id, ZERO)) for i, q in questions]

    if html is None:
        if config.strict:
            raise PipelineError(f"document {doc_id!r} not found")
        LOGGER.warning("document %s not found; answering 0", doc_id)
        return zeros()
    if detect_blank(html):
        return zeros()
    if config.answerer == "zero":
        return [(i, answer_zero(q)) for i, q in questions]
    try:
        table = build_structured(normalize_grid(parse_table_html(html)), config.hierarchy)
        out = []
        for i, q in questions:
            if config.answerer == "lookup":
                answer = answer_lookup(table, q)
            else:
                answer = answer_external(table, q, _endpoint(config), strict=config.strict)
            out.append((i, answer))
        return out
    except Exception as exc:
        if config.strict:
            raise PipelineError(f"document {doc_id!r}: {exc}") from exc
        LOGGER.warning("document %s failed (%s: %s); answering 0", doc_id, type(exc).__name__, exc)
        return zeros()


def _worker_task(doc_id, html, questions):
    assert _worker_config is not None
    return _answer_document(doc_id, html, questions, _worker_config)


def run_pipeline(
    docs: Mapping[str, str],
    questions: Sequence[QuestionRecord],
    config: PipelineConfig = PipelineConfig(),
) -> list[AnswerRecord]:
    """Answer every question; the result is aligned with ``questions``.

    Documents are processed independently, so the output does not depend on
    ``config.workers``.  Outside strict mode a failing document yields
    ``"0"`` answers instead of aborting the batch.
    """
    grouped: dict[str, list[tuple[int, QuestionRecord]]] = {}
    for i, q in enumerate(questions):
        grouped.setdefault(q.doc_id or "", []).append((i, q))
    jobs = [(doc_id, docs.get(doc_id), qs) for doc_id, qs in grouped.items()]

    results: list[Optional[AnswerRecord]] = [None] * len(questions)
    if config.workers == 1 or len(jobs) <= 1:
        _init_worker(config)
        try:
            for job in jobs:
                for i, answer in _worker_task(*job):
                    results[i] = answer
        finally:
            _close_endpoint()
    else:
        with ProcessPoolExecutor(
            max_workers=min(config.workers, len(jobs)),
            initializer=_init_worker,
            initargs=(config,),
        ) as pool:
            futures = [pool.submit(_worker_task, *job) for job in jobs]
            for future in futures:
                for i, answer in future.result():
                    results[i] = answer
    assert all(r is not None for r in results)
    return results  # type: ignore[return-value]


@dataclass(frozen=True)
class Summary:
    min: Fraction
    max: Fraction
    mean: Fraction

    @classmethod
    def of(cls, values: Sequence) -> Optional["Summary"]:
        if not values:
            return None
        vals = [Fraction(v) for v in values]
        return cls(min(vals), max(vals), sum(vals, Fraction(0)) / len(vals))

    def to_json(self) -> dict:
        return {k: float(v) if v.denominator != 1 else int(v)
                for k, v in (("min", self.min), ("max", self.max), ("mean", self.mean))}


@dataclass
class StatsReport:
    n_documents: int
    n_blank: int
    rows: Optional[Summary]
    columns: Optional[Summary]
    cell_length: Optional[Summary]
    questions_per_category: dict[int, int] = field(default_factory=dict)
    per_document_range: dict[int, tuple[int, int]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema": "stats/1",
            "n_documents": self.n_documents,
            "n_blank": self.n_blank,
            "rows": self.rows.to_json() if self.rows else None,
            "columns": self.columns.to_json() if self.columns else None,
            "cell_length": self.cell_length.to_json() if self.cell_length else None,
            "questions_per_category": {str(k): v for k, v in sorted(self.questions_per_category.items())},
            "questions_per_document_range": {
                str(k): list(v) for k, v in sorted(self.per_document_range.items())
            },
        }


def compute_stats(
    docs: Mapping[str, str],
    questions: Optional[Iterable[QuestionRecord]] = None,
) -> StatsReport:
    """Row, column and cell-length statistics over the non-blank tables.

    Cell length is averaged per table over non-empty, non-padding cells;
    the min/max/mean are then taken across tables.  Means are exact
    fractions.
    """
    n_blank = 0
    rows, cols, lengths = [], [], []
    for doc_id, html in docs.items():
        if detect_blank(html):
            n_blank += 1
            continue
        try:
            grid = normalize_grid(parse_table_html(html))
        except ValueError as exc:
            LOGGER.warning("document %s unparseable (%s); counted as blank", doc_id, exc)
            n_blank += 1
            continue
        texts = [c.text for c in grid.cells if c.text and not c.synthetic]
        rows.append(grid.n_rows)
        cols.append(grid.n_cols)
        lengths.append(Fraction(sum(len(t) for t in texts), len(texts)))

    per_category: dict[int, int] = {}
    per_doc: dict[str, dict[int, int]] = {}
    for q in questions or ():
        per_category[q.category] = per_category.get(q.category, 0) + 1
        counts = per_doc.setdefault(q.doc_id or "", {})
        counts[q.category] = counts.get(q.category, 0) + 1
    ranges = {}
    for cat in sorted(per_category):
        counts = [c.get(cat, 0) for c in per_doc.values()]
        ranges[cat] = (min(counts), max(counts))

    return StatsReport(
        n_documents=len(docs),
        n_blank=n_blank,
        rows=Summary.of(rows),
        columns=Summary.of(cols),
        cell_length=Summary.of(lengths),
        questions_per_category=per_category,
        per_document_range=ranges,
    )


# --- file I/O ---------------------------------------------------------------


def load_docs(directory: Path | str, suffix: str = ".html") -> dict[str, str]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return {p.name[: -len(suffix)]: p.read_text(encoding="utf-8") for p in sorted(directory.glob(f"*{suffix}"))}


def read_jsonl(path: Path | str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{n}: invalid JSON ({exc.msg})") from exc
    return records


def load_questions(
    path: Path | str,
    adapter: Callable[[Mapping], QuestionRecord] = QuestionRecord.from_json,
) -> list[QuestionRecord]:
    return [adapter(r) for r in read_jsonl(path)]


def load_answers(path: Path | str) -> list[AnswerRecord]:
    return [AnswerRecord.from_json(r) for r in read_jsonl(path)]


def dumps_jsonl(records: Iterable) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in records)
