"""VQAonBD-style scoring: ANLS for text answers, a combined score for numbers."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .numeric import canonical_answer, normalize_numeric
from .records import ZERO, AnswerRecord, AnswerType, QuestionRecord

LOGGER = logging.getLogger(__name__)

ANLS_THRESHOLD = 0.5
EPSILON = 1e-9


class EmptyGroundTruth(ValueError):
    pass


class NonNumericGroundTruth(ValueError):
    pass


class DuplicateQuestionId(ValueError):
    pass


class Branch(str, enum.Enum):
    TEXT_ANLS = "TextANLS"
    NUMERIC_COMBINED = "NumericCombined"


@dataclass(frozen=True)
class ScoreBreakdown:
    question_id: str
    score: float
    branch: Branch
    anls_component: float
    relative_error: Optional[float] = None
    category: int = 1
    prediction: str = ZERO


@dataclass
class EvalReport:
    per_category: dict[int, tuple[int, float]]
    overall: float
    n_questions: int
    breakdown: list[ScoreBreakdown] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema": "eval/1",
            "n_questions": self.n_questions,
            "overall": self.overall,
            "per_category": {
                str(cat): {"count": n, "mean": mean} for cat, (n, mean) in sorted(self.per_category.items())
            },
        }

    def per_question_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["question_id", "category", "branch", "prediction", "score", "anls", "relative_error"])
        for b in self.breakdown:
            writer.writerow([
                b.question_id, b.category, b.branch.value, b.prediction,
                repr(b.score), repr(b.anls_component),
                "" if b.relative_error is None else repr(b.relative_error),
            ])
        return buf.getvalue()


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance between ``a`` and ``b`` over code points."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def nls(pred: str, gt: str, threshold: float = ANLS_THRESHOLD) -> float:
    """Normalized Levenshtein similarity, zeroed once the distance reaches ``threshold``."""
    p, g = pred.strip().lower(), gt.strip().lower()
    longest = max(len(p), len(g))
    if longest == 0:
        return 1.0
    distance = levenshtein(p, g) / longest
    return 1.0 - distance if distance < threshold else 0.0


def anls_score(pred: str, gts: Sequence[str]) -> float:
    if not gts:
        raise EmptyGroundTruth("no ground-truth answers")
    return max(nls(pred, gt) for gt in gts)


def numeric_score(pred: str, gt: str, question_id: str = "") -> ScoreBreakdown:
    """Combine string similarity with relative numeric error.

    ``score = sqrt((anls**2 + (1 - rel)**2) / 2)`` where ``rel`` is the
    relative error capped at 1 (1 when the prediction is not a number).
    """
    g = normalize_numeric(gt)
    if g is None:
        raise NonNumericGroundTruth(f"ground truth {gt!r} is not numeric")
    a = anls_score(canonical_answer(pred), [canonical_answer(gt)])
    p = normalize_numeric(pred)
    if p is None:
        rel = 1.0
    else:
        rel = min(1.0, float(abs(p - g)) / max(float(abs(g)), EPSILON))
    score = math.sqrt((a * a + (1.0 - rel) ** 2) / 2.0)
    return ScoreBreakdown(question_id, min(1.0, score), Branch.NUMERIC_COMBINED, a, rel, prediction=pred)


def score_question(question: QuestionRecord, prediction: str) -> ScoreBreakdown:
    gts = question.ground_truth
    if not gts:
        raise EmptyGroundTruth(f"question {question.question_id} has no ground truth")
    if question.answer_type is AnswerType.NUMERIC:
        numeric_gts = [gt for gt in gts if normalize_numeric(gt) is not None]
        if not numeric_gts:
            raise NonNumericGroundTruth(f"question {question.question_id} has no numeric ground truth")
        best = max((numeric_score(prediction, gt, question.question_id) for gt in numeric_gts),
                   key=lambda s: s.score)
    else:
        a = anls_score(prediction, gts)
        best = ScoreBreakdown(question.question_id, a, Branch.TEXT_ANLS, a)
    return ScoreBreakdown(
        best.question_id, best.score, best.branch, best.anls_component, best.relative_error,
        category=question.category, prediction=prediction,
    )


def evaluate(preds: Iterable[AnswerRecord], gts: Iterable[QuestionRecord]) -> EvalReport:
    """Score predictions against ground truth.

    Questions with no prediction are scored as if the answer were ``"0"``;
    predictions for unknown question ids are ignored with a warning.
    """
    questions: dict[str, QuestionRecord] = {}
    for q in gts:
        if q.question_id in questions:
            raise DuplicateQuestionId(q.question_id)
        questions[q.question_id] = q

    answers: dict[str, str] = {}
    for p in preds:
        if p.question_id not in questions:
            LOGGER.warning("prediction for unknown question %s ignored", p.question_id)
            continue
        answers[p.question_id] = p.answer

    breakdown = [score_question(q, answers.get(qid, ZERO)) for qid, q in questions.items()]
    sums: dict[int, list] = {}
    for b in breakdown:
        acc = sums.setdefault(b.category, [0, 0.0])
        acc[0] += 1
        acc[1] += b.score
    per_category = {cat: (n, total / n) for cat, (n, total) in sorted(sums.items())}
    overall = math.fsum(b.score for b in breakdown) / len(breakdown) if breakdown else 0.0
    return EvalReport(per_category, overall, len(breakdown), breakdown)
