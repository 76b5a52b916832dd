"""Shared builders for the test suite."""

from __future__ import annotations

from medeval.model import (
    EvalCase,
    EvaluationResult,
    InstructionRecord,
    ModelResponse,
    Quality,
    Source,
    VerificationState,
)


def make_case(n_responses: int = 3, tag: str = "case") -> EvalCase:
    responses = tuple(
        ModelResponse(model_label=f"model-{i + 1}", text=f"{tag} answer {i + 1}")
        for i in range(n_responses)
    )
    return EvalCase(
        case_id=f"id-{tag}",
        question=f"What should be done about {tag}?",
        responses=responses,
        reference_answer=f"The reference management of {tag}.",
    )


def make_evaluation(scores: dict[int, int], tag: str = "case") -> EvaluationResult:
    entries = " ".join(f"Doctor {i + 1}: {scores[i]} points." for i in sorted(scores))
    raw = f"Analyze: Step 1: Review the answers about {tag}.\nScore: {entries}"
    return EvaluationResult(
        steps=(f"Review the answers about {tag}.",),
        scores=dict(scores),
        raw_text=raw,
    )


def make_record(
    tag: str = "case",
    scores: dict[int, int] | None = None,
    n_responses: int = 3,
    source: Source = Source.HIGH_TIER,
    quality: Quality = Quality.UNCLASSIFIED,
    approved: bool | None = None,
) -> InstructionRecord:
    scores = scores if scores is not None else {i: (i % 5) + 1 for i in range(n_responses)}
    verification = VerificationState()
    if approved is True:
        verification = VerificationState.decide((True, True, True), reviewer_id="rev-1")
    elif approved is False:
        verification = VerificationState.decide((True, False, True), reviewer_id="rev-1")
    return InstructionRecord(
        case=make_case(n_responses, tag),
        evaluation=make_evaluation(scores, tag),
        source=source,
        quality=quality,
        verification=verification,
    )
