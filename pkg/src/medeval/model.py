"""Domain types shared across the pipeline.

Everything here is an immutable value object: construction validates, and
all mutation happens by building a new object. The canonical on-disk form
for collections of any of these types is UTF-8 JSONL, one record per line,
snake_case field names.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator


class MedevalError(Exception):
    """Base class for every error raised by this package."""


class BlankField(MedevalError):
    pass


class EmptyResponses(MedevalError):
    pass


class DuplicateModelLabel(MedevalError):
    pass


class ScoreCoverageError(MedevalError):
    """Scores do not cover response indices 0..n-1 exactly once."""


class LengthMismatch(MedevalError):
    """Two aligned sequences have different lengths."""


def content_id(question: str, reference_answer: str) -> str:
    """Stable case id: content hash of the (question, answer) pair.

    Makes ingest reruns idempotent: the same pair always maps to the
    same id regardless of file order or process.
    """
    digest = hashlib.sha256()
    digest.update(question.encode("utf-8"))
    digest.update(b"\x1f")
    digest.update(reference_answer.encode("utf-8"))
    return digest.hexdigest()[:16]


class Source(enum.Enum):
    """Provenance tier of an instruction record."""

    HIGH_TIER = "HighTier"
    LOW_TIER = "LowTier"


class Quality(enum.Enum):
    UNCLASSIFIED = "Unclassified"
    HIGH = "High"
    LOW = "Low"


class VerificationStatus(enum.Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    REJECTED = "Rejected"


class Verdict(enum.Enum):
    JUDGE_ACCEPTED = "JudgeAccepted"
    JUDGE_REJECTED = "JudgeRejected"
    JURY_ACCEPTED = "JuryAccepted"
    JURY_REJECTED = "JuryRejected"
    PENDING_JURY = "PendingJury"


class SuggestionAuthor(enum.Enum):
    SUGGESTER = "Suggester"
    JURY = "Jury"


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters for response generation."""

    temperature: float = 0.5
    max_new_tokens: int = 200
    top_k: int = 50
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise BlankField("temperature must be >= 0")
        if self.max_new_tokens <= 0:
            raise BlankField("max_new_tokens must be positive")
        if self.top_k <= 0:
            raise BlankField("top_k must be positive")
        if not (0 < self.top_p <= 1.0):
            raise BlankField("top_p must be in (0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "temperature": self.temperature,
            "max_new_tokens": self.max_new_tokens,
            "top_k": self.top_k,
            "top_p": self.top_p,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GenerationParams":
        return cls(**d)


@dataclass(frozen=True)
class ModelResponse:
    """One model's answer to a case question."""

    model_label: str
    text: str
    generation_params: GenerationParams | None = None

    def __post_init__(self) -> None:
        if not self.model_label.strip():
            raise BlankField("model_label is blank")
        if not self.text.strip():
            raise BlankField("response text is blank")

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_label": self.model_label,
            "text": self.text,
            "generation_params": (
                self.generation_params.to_dict() if self.generation_params else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelResponse":
        params = d.get("generation_params")
        return cls(
            model_label=d["model_label"],
            text=d["text"],
            generation_params=GenerationParams.from_dict(params) if params else None,
        )


@dataclass(frozen=True)
class EvalCase:
    """One question, N model responses, and one reference answer."""

    case_id: str
    question: str
    responses: tuple[ModelResponse, ...]
    reference_answer: str

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise BlankField("question is blank")
        if not self.reference_answer.strip():
            raise BlankField("reference_answer is blank")
        if not self.responses:
            raise EmptyResponses(f"case {self.case_id!r} has no responses")
        labels = [r.model_label for r in self.responses]
        if len(set(labels)) != len(labels):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise DuplicateModelLabel(f"duplicate model labels: {dupes}")
        object.__setattr__(self, "responses", tuple(self.responses))

    @property
    def model_labels(self) -> tuple[str, ...]:
        return tuple(r.model_label for r in self.responses)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "question": self.question,
            "responses": [r.to_dict() for r in self.responses],
            "reference_answer": self.reference_answer,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalCase":
        return cls(
            case_id=d["case_id"],
            question=d["question"],
            responses=tuple(ModelResponse.from_dict(r) for r in d["responses"]),
            reference_answer=d["reference_answer"],
        )


def validate_case(raw: EvalCase | dict[str, Any]) -> EvalCase:
    """Validate a candidate case, naming the violated invariant on failure."""
    if isinstance(raw, EvalCase):
        # Reconstruct so every invariant is re-checked.
        return EvalCase.from_dict(raw.to_dict())
    return EvalCase.from_dict(raw)


@dataclass(frozen=True)
class EvaluationResult:
    """Parsed Analyze/Score output: rationale steps plus one integer score
    per response, keyed by 0-based response index."""

    steps: tuple[str, ...]
    scores: dict[int, int]
    raw_text: str

    def __post_init__(self) -> None:
        if not self.steps:
            raise BlankField("steps is empty")
        object.__setattr__(self, "steps", tuple(self.steps))
        for idx, score in self.scores.items():
            if score not in (1, 2, 3, 4, 5):
                raise ScoreCoverageError(
                    f"score {score} for response {idx} outside 1..5"
                )

    def check_coverage(self, n_responses: int) -> None:
        """Assert scores cover response indices 0..n-1 exactly once."""
        expected = set(range(n_responses))
        if set(self.scores) != expected:
            raise ScoreCoverageError(
                f"scores cover {sorted(self.scores)}, expected {sorted(expected)}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps": list(self.steps),
            "scores": {str(k): v for k, v in sorted(self.scores.items())},
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvaluationResult":
        return cls(
            steps=tuple(d["steps"]),
            scores={int(k): int(v) for k, v in d["scores"].items()},
            raw_text=d["raw_text"],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EvaluationResult):
            return NotImplemented
        return (
            self.steps == other.steps
            and self.scores == other.scores
            and self.raw_text == other.raw_text
        )


CRITERIA_NAMES = ("knowledge_correct", "no_misattribution", "fluent")


@dataclass(frozen=True)
class VerificationState:
    """Three-criterion physician gate over an instruction record.

    Approved iff all three criteria hold, Rejected iff at least one fails,
    Pending while the criteria are unset.
    """

    status: VerificationStatus = VerificationStatus.PENDING
    criteria: tuple[bool, bool, bool] | None = None
    reviewer_id: str | None = None
    note: str | None = None

    def __post_init__(self) -> None:
        if self.criteria is None:
            if self.status is not VerificationStatus.PENDING:
                raise BlankField("criteria unset requires Pending status")
        else:
            object.__setattr__(self, "criteria", tuple(self.criteria))
            expected = (
                VerificationStatus.APPROVED
                if all(self.criteria)
                else VerificationStatus.REJECTED
            )
            if self.status is not expected:
                raise BlankField(
                    f"status {self.status.value} inconsistent with criteria {self.criteria}"
                )

    @classmethod
    def decide(
        cls,
        criteria: tuple[bool, bool, bool],
        reviewer_id: str | None = None,
        note: str | None = None,
    ) -> "VerificationState":
        status = (
            VerificationStatus.APPROVED if all(criteria) else VerificationStatus.REJECTED
        )
        return cls(status=status, criteria=tuple(criteria), reviewer_id=reviewer_id, note=note)

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "criteria": (
                dict(zip(CRITERIA_NAMES, self.criteria)) if self.criteria else None
            ),
            "reviewer_id": self.reviewer_id,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VerificationState":
        crit = d.get("criteria")
        return cls(
            status=VerificationStatus(d["status"]),
            criteria=tuple(crit[name] for name in CRITERIA_NAMES) if crit else None,
            reviewer_id=d.get("reviewer_id"),
            note=d.get("note"),
        )


@dataclass(frozen=True)
class Suggestion:
    """A revision suggestion produced during introspection."""

    text: str
    round: int
    verdict: Verdict
    author: SuggestionAuthor

    def __post_init__(self) -> None:
        if not (1 <= self.round <= 3):
            raise BlankField(f"suggestion round {self.round} outside 1..3")
        if not self.text.strip():
            raise BlankField("suggestion text is blank")

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "round": self.round,
            "verdict": self.verdict.value,
            "author": self.author.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Suggestion":
        return cls(
            text=d["text"],
            round=int(d["round"]),
            verdict=Verdict(d["verdict"]),
            author=SuggestionAuthor(d["author"]),
        )


@dataclass(frozen=True)
class InstructionRecord:
    """The training-data atom: a case, its evaluation, and all curation state."""

    case: EvalCase
    evaluation: EvaluationResult
    source: Source
    quality: Quality = Quality.UNCLASSIFIED
    verification: VerificationState = field(default_factory=VerificationState)
    suggestions: tuple[Suggestion, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "suggestions", tuple(self.suggestions))
        self.evaluation.check_coverage(len(self.case.responses))

    @property
    def record_id(self) -> str:
        return self.case.case_id

    def with_quality(self, quality: Quality) -> "InstructionRecord":
        return dataclasses.replace(self, quality=quality)

    def with_verification(self, verification: VerificationState) -> "InstructionRecord":
        return dataclasses.replace(self, verification=verification)

    def with_suggestion(self, suggestion: Suggestion) -> "InstructionRecord":
        return dataclasses.replace(self, suggestions=self.suggestions + (suggestion,))

    def to_dict(self) -> dict[str, Any]:
        return {
            "case": self.case.to_dict(),
            "evaluation": self.evaluation.to_dict(),
            "source": self.source.value,
            "quality": self.quality.value,
            "verification": self.verification.to_dict(),
            "suggestions": [s.to_dict() for s in self.suggestions],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InstructionRecord":
        return cls(
            case=EvalCase.from_dict(d["case"]),
            evaluation=EvaluationResult.from_dict(d["evaluation"]),
            source=Source(d["source"]),
            quality=Quality(d["quality"]),
            verification=VerificationState.from_dict(d["verification"]),
            suggestions=tuple(Suggestion.from_dict(s) for s in d.get("suggestions", [])),
        )


@dataclass(frozen=True)
class HumanAnnotation:
    """One annotator's 1..5 ratings for every response of a case, plus the
    optional triple over the evaluation content itself.

    The final score of a response is the arithmetic mean of its
    (relevancy, fluency, knowledge_correctness) triple.
    """

    case_id: str
    annotator_id: str
    response_scores: dict[int, tuple[int, int, int]]
    evaluation_scores: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        if not self.response_scores:
            raise BlankField("response_scores is empty")
        for idx, triple in self.response_scores.items():
            if len(triple) != 3 or any(s not in (1, 2, 3, 4, 5) for s in triple):
                raise ScoreCoverageError(
                    f"annotation triple {triple} for response {idx} outside 1..5"
                )
        if self.evaluation_scores is not None:
            if any(s not in (1, 2, 3, 4, 5) for s in self.evaluation_scores):
                raise ScoreCoverageError("evaluation triple outside 1..5")
            object.__setattr__(self, "evaluation_scores", tuple(self.evaluation_scores))

    def response_score(self, index: int) -> float:
        """Mean of the (relevancy, fluency, knowledge_correctness) triple."""
        triple = self.response_scores[index]
        return sum(triple) / 3.0

    def check_against(self, case: EvalCase) -> None:
        extra = set(self.response_scores) - set(range(len(case.responses)))
        if extra:
            raise ScoreCoverageError(
                f"annotation scores responses {sorted(extra)} absent from case"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "annotator_id": self.annotator_id,
            "response_scores": {
                str(k): {
                    "relevancy": v[0],
                    "fluency": v[1],
                    "knowledge_correctness": v[2],
                }
                for k, v in sorted(self.response_scores.items())
            },
            "evaluation_scores": (
                {
                    "reference_correctness": self.evaluation_scores[0],
                    "fluency": self.evaluation_scores[1],
                    "knowledge_correctness": self.evaluation_scores[2],
                }
                if self.evaluation_scores
                else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HumanAnnotation":
        ev = d.get("evaluation_scores")
        return cls(
            case_id=d["case_id"],
            annotator_id=d["annotator_id"],
            response_scores={
                int(k): (v["relevancy"], v["fluency"], v["knowledge_correctness"])
                for k, v in d["response_scores"].items()
            },
            evaluation_scores=(
                (ev["reference_correctness"], ev["fluency"], ev["knowledge_correctness"])
                if ev
                else None
            ),
        )


# --- JSONL helpers -----------------------------------------------------------

def dumps_canonical(obj: Any) -> str:
    """Deterministic JSON encoding used for every artifact we write."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def write_jsonl(path: str | Path, items: Iterable[Any]) -> int:
    """Write dicts (or objects with to_dict) as JSONL. Returns line count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            d = item.to_dict() if hasattr(item, "to_dict") else item
            fh.write(dumps_canonical(d))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path, cls: type | None = None) -> Iterator[Any]:
    """Yield records from a JSONL file, decoded via cls.from_dict if given."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            yield cls.from_dict(d) if cls is not None else d


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()
