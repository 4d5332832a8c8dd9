"""Question and answer records shared by the answerers, metrics and pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional

ZERO = "0"


class AnswerType(str, enum.Enum):
    NUMERIC = "numeric"
    TEXT = "text"


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    text: str
    category: int = 1
    answer_type: AnswerType = AnswerType.TEXT
    ground_truth: tuple[str, ...] = ()
    doc_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not 1 <= int(self.category) <= 5:
            raise ValueError(f"category must be in 1..5, got {self.category}")
        object.__setattr__(self, "answer_type", AnswerType(str.lower(self.answer_type)))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))

    @classmethod
    def from_json(cls, data: Mapping) -> "QuestionRecord":
        answers = data.get("answers", data.get("ground_truth", ()))
        if isinstance(answers, str):
            answers = [answers]
        return cls(
            question_id=str(data["question_id"]),
            text=data.get("text", data.get("question", "")),
            category=int(data.get("category", 1)),
            answer_type=data.get("answer_type", "text"),
            ground_truth=tuple(str(a) for a in answers),
            doc_id=data.get("doc_id"),
        )

    def to_json(self) -> dict:
        out = {
            "question_id": self.question_id,
            "text": self.text,
            "category": self.category,
            "answer_type": self.answer_type.value,
            "answers": list(self.ground_truth),
        }
        if self.doc_id is not None:
            out["doc_id"] = self.doc_id
        return out


@dataclass(frozen=True)
class AnswerRecord:
    question_id: str
    answer: str = ZERO

    def __post_init__(self) -> None:
        if self.answer is None or not str(self.answer).strip():
            object.__setattr__(self, "answer", ZERO)

    def to_json(self) -> dict:
        return {"question_id": self.question_id, "answer": self.answer}

    @classmethod
    def from_json(cls, data: Mapping) -> "AnswerRecord":
        return cls(str(data["question_id"]), str(data.get("answer") or ZERO))
