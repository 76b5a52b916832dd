"""Corpus loading, pattern filtering, and case assembly.

The raw corpus is QA JSONL. Records are either {"question", "answer"} or
the instruction-tuning layout {"instruction", "input", "output"}, where the
patient's question lives in "input" and the reference answer in "output".
A record may carry candidate answers inline as {"responses": {label: text}};
responder output files can supply or override them at assembly time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .model import EvalCase, LengthMismatch, MedevalError, ModelResponse, content_id

DEFAULT_RULES = [("rephras", "meta requests about rephrasing, not medical QA")]


class NoValidRecords(MedevalError):
    pass


class MissingResponses(MedevalError):
    pass


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    responses: tuple[tuple[str, str], ...] = ()  # (model_label, text), sorted

    @property
    def response_map(self) -> dict[str, str]:
        return dict(self.responses)


@dataclass(frozen=True)
class FilterRule:
    """Case-insensitive literal substring filter."""

    pattern: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.pattern:
            raise MedevalError("filter pattern is empty")

    def matches(self, question: str, answer: str) -> bool:
        needle = self.pattern.lower()
        return needle in question.lower() or needle in answer.lower()


@dataclass(frozen=True)
class RejectedLine:
    line_no: int
    reason: str


@dataclass(frozen=True)
class IngestReport:
    total_in: int
    filtered_out: int
    kept: int
    rule_hits: dict[str, int] = field(default_factory=dict)
    rejects: tuple[RejectedLine, ...] = ()

    def __post_init__(self) -> None:
        if self.total_in != self.filtered_out + self.kept:
            raise MedevalError("report counts inconsistent")

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_in": self.total_in,
            "filtered_out": self.filtered_out,
            "kept": self.kept,
            "rule_hits": dict(self.rule_hits),
            "rejects": [
                {"line_no": r.line_no, "reason": r.reason} for r in self.rejects
            ],
        }


def default_rules() -> list[FilterRule]:
    return [FilterRule(p, d) for p, d in DEFAULT_RULES]


def load_rules(path: str | Path) -> list[FilterRule]:
    """Read one pattern per line; '#' starts a comment."""
    rules = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rules.append(FilterRule(line))
    return rules


def _extract_pair(obj: dict[str, Any]) -> QAPair | str:
    """A QAPair, or a string describing why the record is unusable."""
    if "question" in obj and "answer" in obj:
        q, a = obj["question"], obj["answer"]
    elif "input" in obj and "output" in obj:
        q, a = obj["input"], obj["output"]
    else:
        return "missing question/answer fields"
    if not isinstance(q, str) or not isinstance(a, str):
        return "question/answer not strings"
    if not q.strip() or not a.strip():
        return "blank question or answer"
    responses: tuple[tuple[str, str], ...] = ()
    if "responses" in obj:
        raw = obj["responses"]
        if not isinstance(raw, dict) or not all(
            isinstance(k, str) and isinstance(v, str) and v.strip() for k, v in raw.items()
        ):
            return "responses must map model labels to non-blank text"
        responses = tuple(sorted(raw.items()))
    return QAPair(question=q, answer=a, responses=responses)


def load_qa(path: str | Path) -> tuple[list[QAPair], list[RejectedLine]]:
    """Load QA pairs in file order.

    Malformed lines are collected into the rejects list rather than being
    silently dropped. Raises NoValidRecords when nothing parses.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    pairs: list[QAPair] = []
    rejects: list[RejectedLine] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                rejects.append(RejectedLine(line_no, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                rejects.append(RejectedLine(line_no, "not a JSON object"))
                continue
            pair = _extract_pair(obj)
            if isinstance(pair, str):
                rejects.append(RejectedLine(line_no, pair))
                continue
            pairs.append(pair)
    if not pairs:
        raise NoValidRecords(f"no valid QA records in {path}")
    return pairs, rejects


def apply_filter(
    pairs: Sequence[QAPair],
    rules: Sequence[FilterRule],
    rejects: Sequence[RejectedLine] = (),
) -> tuple[list[QAPair], IngestReport]:
    """Drop every pair whose question or answer contains any rule pattern.

    Order-preserving and idempotent; the report counts each rule's hits
    (a pair matching several rules increments each of them).
    """
    if not rules:
        raise MedevalError("rules must be non-empty")
    kept: list[QAPair] = []
    hits = {rule.pattern: 0 for rule in rules}
    filtered = 0
    for pair in pairs:
        matched = False
        for rule in rules:
            if rule.matches(pair.question, pair.answer):
                hits[rule.pattern] += 1
                matched = True
        if matched:
            filtered += 1
        else:
            kept.append(pair)
    report = IngestReport(
        total_in=len(pairs),
        filtered_out=filtered,
        kept=len(kept),
        rule_hits=hits,
        rejects=tuple(rejects),
    )
    return kept, report


def assemble_cases(
    pairs: Sequence[QAPair],
    responder_outputs: dict[str, Sequence[str]] | None = None,
) -> list[EvalCase]:
    """Combine each pair's inline responses with the i-th output of every
    responder file; a file label overrides an identical inline label.

    Responses are ordered by sorted model label so the layout is stable
    regardless of dict insertion order.
    """
    responder_outputs = responder_outputs or {}
    for label, outputs in responder_outputs.items():
        if len(outputs) != len(pairs):
            raise LengthMismatch(
                f"responder {label!r} produced {len(outputs)} outputs for {len(pairs)} pairs"
            )
    cases = []
    for i, pair in enumerate(pairs):
        merged = pair.response_map
        for label, outputs in responder_outputs.items():
            merged[label] = outputs[i]
        if not merged:
            raise MissingResponses(
                f"pair {i + 1} has no candidate responses (inline or via responder files)"
            )
        responses = tuple(
            ModelResponse(model_label=label, text=merged[label]) for label in sorted(merged)
        )
        cases.append(
            EvalCase(
                case_id=content_id(pair.question, pair.answer),
                question=pair.question,
                responses=responses,
                reference_answer=pair.answer,
            )
        )
    return cases
