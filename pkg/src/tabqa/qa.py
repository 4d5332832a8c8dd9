"""Table linearization and the three answerers (zero, lookup, external).

They share one contract: every call returns an
:class:`AnswerRecord` whose answer is a non-empty string, ``"0"`` when
nothing better is available.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import subprocess
import threading
from dataclasses import dataclass
from decimal import Decimal
from typing import Mapping, Optional, Sequence, Union

from .metrics import nls
from .numeric import canonical_answer, normalize_numeric, render_number
from .records import ZERO, AnswerRecord, QuestionRecord
from .structure import StructuredTable

LOGGER = logging.getLogger(__name__)

ROW_SIMILARITY_FLOOR = 0.3


class EmptyTable(ValueError):
    pass


class ExternalUnavailable(RuntimeError):
    """The external answerer process could not be reached or died."""


class ProtocolViolation(RuntimeError):
    """The external answerer replied with something other than the agreed JSON line."""


@dataclass(frozen=True)
class LinearizedTable:
    text: str
    cell_count: int


def _escape(text: str) -> str:
    return text.replace("|", "/")


def linearize(table: StructuredTable) -> LinearizedTable:
    """Flatten ``table`` header first, then rows top to bottom, cells left to right.

    >>> t = StructuredTable(columns=["A", "B"], rows=[["1", "2"]])
    >>> linearize(t).text
    'col : A | B row 1 : 1 | 2'
    """
    if not table.columns:
        raise EmptyTable("table has no columns")
    parts = ["col : " + " | ".join(_escape(c) for c in table.columns)]
    for i, row in enumerate(table.rows, start=1):
        parts.append(f"row {i} : " + " | ".join(_escape(v) for v in row))
    return LinearizedTable(" ".join(parts), len(table.rows) * len(table.columns))


def answer_zero(question: QuestionRecord) -> AnswerRecord:
    return AnswerRecord(question.question_id, ZERO)


# --- rule-based lookup -----------------------------------------------------

_STOPWORDS = frozenset(
    """
    a an and are as at be by did do does for from had has have how in is it its
    of on or the to was were what which who with year years ended ending value
    dollar dollars amount thousands thousand millions million billions billion
    usd percent percentage number fiscal period as of
    """.split()
)
_AGGREGATES = {
    "total": "sum", "sum": "sum",
    "average": "mean", "mean": "mean",
    "difference": "diff",
    "minimum": "min", "min": "min", "lowest": "min",
    "maximum": "max", "max": "max", "highest": "max",
    "ratio": "ratio",
}
_TOKEN = re.compile(r"[a-z0-9]+(?:\.[0-9]+)?")
_YEAR = re.compile(r"(?<!\d)\d{4}(?!\d)")
_QUOTED = re.compile(r"\"([^\"]+)\"|“([^”]+)”|(?<!\w)'([^']+)'(?!\w)")


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _label_similarity(label_tokens: Sequence[str], question_tokens: Sequence[str]) -> float:
    if not label_tokens or not question_tokens:
        return 0.0
    return sum(max(nls(t, q) for q in question_tokens) for t in label_tokens) / len(label_tokens)


def _row_similarity(label: str, question_tokens: Sequence[str], separator: str) -> float:
    segments = [label]
    if separator and separator in label:
        segments.append(label.split(separator, 1)[0])
    best = 0.0
    for seg in segments:
        toks = [t for t in _tokens(seg) if t not in _STOPWORDS] or _tokens(seg)
        best = max(best, _label_similarity(toks, question_tokens))
    return best


def _column_similarity(name: str, keys: Sequence[str]) -> float:
    name_tokens = _tokens(name) + [name.lower().strip()]
    return max((nls(k, t) for k in keys for t in name_tokens), default=0.0)


@dataclass(frozen=True)
class LookupConfig:
    row_floor: float = ROW_SIMILARITY_FLOOR
    separator: str = " - "
    max_places: int = 6


def _pick_column(table: StructuredTable, keys: Sequence[str]) -> int:
    candidates = range(1, len(table.columns)) if len(table.columns) > 1 else range(1)
    best, best_score = candidates[0], -1.0
    for c in candidates:
        score = _column_similarity(table.columns[c], keys) if keys else 0.0
        if score > best_score:
            best, best_score = c, score
    return best


def _ranked_rows(table: StructuredTable, q_tokens: Sequence[str], separator: str) -> list[tuple[float, int]]:
    scored = [(_row_similarity(row[0], q_tokens, separator), i) for i, row in enumerate(table.rows)]
    # highest score first, topmost on ties
    return sorted(scored, key=lambda p: (-p[0], p[1]))


def _first_mention(label: str, q_tokens: Sequence[str]) -> int:
    positions = [
        i for i, q in enumerate(q_tokens)
        for t in _tokens(label) if t not in _STOPWORDS and nls(t, q) == 1.0
    ]
    return min(positions, default=len(q_tokens))


def answer_lookup(
    table: StructuredTable,
    question: QuestionRecord,
    config: LookupConfig = LookupConfig(),
) -> AnswerRecord:
    """Deterministic lookup/aggregation answerer.

    Picks the value column by matching years and quoted phrases from the
    question against column names, and the row by fuzzy-matching the rest of
    the question against first-column labels.  Aggregation keywords switch
    to a column-wide sum/mean/min/max or a two-row difference/ratio.
    """
    qid = question.question_id
    if not table.rows or not table.columns:
        return AnswerRecord(qid, ZERO)
    text = question.text or ""
    years = _YEAR.findall(text)
    phrases = [next(g for g in m.groups() if g) for m in _QUOTED.finditer(text)]
    keys = [k.lower() for k in years + phrases]

    remainder = _YEAR.sub(" ", _QUOTED.sub(" ", text))
    q_tokens = [t for t in _tokens(remainder) if t not in _STOPWORDS]
    col = _pick_column(table, keys)
    ranked = _ranked_rows(table, q_tokens, config.separator)
    best_score, best_row = ranked[0]

    label_tokens = set(_tokens(table.rows[best_row][0])) if best_score >= config.row_floor else set()
    aggregate = next(
        (_AGGREGATES[t] for t in _tokens(remainder) if t in _AGGREGATES and t not in label_tokens),
        None,
    )
    values = [normalize_numeric(row[col]) for row in table.rows]

    if aggregate in ("sum", "mean", "min", "max"):
        nums = [v for v in values if v is not None]
        if not nums:
            return AnswerRecord(qid, ZERO)
        if aggregate == "sum":
            result = sum(nums, Decimal(0))
        elif aggregate == "mean":
            result = sum(nums, Decimal(0)) / len(nums)
        elif aggregate == "min":
            result = min(nums)
        else:
            result = max(nums)
        return AnswerRecord(qid, render_number(result, config.max_places if aggregate == "mean" else None))

    if aggregate in ("diff", "ratio"):
        pair = [i for s, i in ranked if s >= config.row_floor][:2]
        if len(pair) < 2:
            return AnswerRecord(qid, ZERO)
        pair.sort(key=lambda i: (_first_mention(table.rows[i][0], q_tokens), i))
        a, b = values[pair[0]], values[pair[1]]
        if a is None or b is None or (aggregate == "ratio" and b == 0):
            return AnswerRecord(qid, ZERO)
        result = a - b if aggregate == "diff" else a / b
        return AnswerRecord(qid, render_number(result, config.max_places if aggregate == "ratio" else None))

    if best_score < config.row_floor:
        return AnswerRecord(qid, ZERO)
    return AnswerRecord(qid, canonical_answer(table.rows[best_row][col]))


# --- external answerer -----------------------------------------------------


class ExternalAnswerer:
    """Line-delimited JSON client for an answerer running as a child process.

    One request is in flight at a time per instance; calls from several
    threads are serialized.  The child is expected to exit when its stdin
    closes.
    """

    def __init__(self, command: Union[str, Sequence[str]], close_timeout: float = 10.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("external answerer needs a command")
        self.close_timeout = close_timeout
        self._proc: Optional[subprocess.Popen] = None
        self._lock = threading.Lock()

    def start(self) -> "ExternalAnswerer":
        if self._proc is None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                    bufsize=1,
                )
            except OSError as exc:
                raise ExternalUnavailable(f"cannot start {self.command!r}: {exc}") from exc
        return self

    def request(self, payload: Mapping) -> dict:
        with self._lock:
            proc = self.start()._proc
            assert proc is not None and proc.stdin is not None and proc.stdout is not None
            try:
                proc.stdin.write(json.dumps(payload, ensure_ascii=False) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise ExternalUnavailable(f"pipe failure: {exc}") from exc
            if not line:
                raise ExternalUnavailable(f"answerer exited (status {proc.poll()})")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(f"non-JSON response: {line.strip()[:200]!r}") from exc
        if not isinstance(response, dict):
            raise ProtocolViolation("response is not a JSON object")
        if str(response.get("id")) != str(payload.get("id")):
            raise ProtocolViolation(f"id mismatch: sent {payload.get('id')!r}, got {response.get('id')!r}")
        return response

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=self.close_timeout)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        finally:
            if proc.stdout:
                proc.stdout.close()

    def __enter__(self) -> "ExternalAnswerer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()


def answer_external(
    table: StructuredTable,
    question: QuestionRecord,
    endpoint: ExternalAnswerer,
    strict: bool = False,
) -> AnswerRecord:
    payload = {
        "id": question.question_id,
        "question": question.text,
        "table": table.to_json(),
        "linearized": linearize(table).text if table.columns else "",
    }
    try:
        response = endpoint.request(payload)
    except (ExternalUnavailable, ProtocolViolation) as exc:
        if strict:
            raise
        LOGGER.warning("external answerer failed on %s: %s", question.question_id, exc)
        return AnswerRecord(question.question_id, ZERO)
    answer = response.get("answer")
    if answer is None or isinstance(answer, (dict, list)):
        answer = ZERO
    return AnswerRecord(question.question_id, str(answer).strip() or ZERO)

