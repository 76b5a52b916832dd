"""Dynamic knowledge completion chain and the evaluation-text parser.

The evaluator model either asks for missing knowledge (a line starting with
"[Question]") or emits a structured evaluation. Queries trigger top-k
retrieval from the knowledge store; the retrieved chunks are appended to the
prompt and the evaluator is called again, up to a round bound.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from .gateway import ChatRequest, Gateway, Role
from .knowledge import DEFAULT_TOP_K, VectorIndex
from .model import (
    EvalCase,
    EvaluationResult,
    GenerationParams,
    InstructionRecord,
    MedevalError,
    Source,
)

MIN_SCORE = 1
MAX_SCORE = 5


class ParseError(MedevalError):
    """Evaluator output that does not follow the evaluation grammar."""

    def __init__(self, message: str):
        super().__init__(message)
        self.trace: "ChainTrace | None" = None


class MissingScoreSection(ParseError):
    pass


class NoSteps(ParseError):
    pass


class DuplicateDoctor(ParseError):
    def __init__(self, index: int):
        super().__init__(f"doctor {index} scored more than once")
        self.index = index


class MissingDoctor(ParseError):
    def __init__(self, index: int):
        super().__init__(f"no score for doctor {index}")
        self.index = index


class UnexpectedDoctor(ParseError):
    def __init__(self, index: int, n_responses: int):
        super().__init__(f"doctor {index} scored but only {n_responses} responses exist")
        self.index = index


class ScoreOutOfRange(ParseError):
    pass


class MissingSlot(MedevalError):
    pass


class Unresolved(MedevalError):
    """Round bound hit without a parseable evaluation."""

    def __init__(self, trace: "ChainTrace"):
        super().__init__(f"no evaluation after {len(trace.rounds)} rounds")
        self.trace = trace


class QueryMarkerMode(str, enum.Enum):
    STRICT_BRACKET = "strict"
    LOOSE_SUBSTRING = "loose"


class ChainOutcome(str, enum.Enum):
    EVALUATED = "evaluated"
    UNRESOLVED = "unresolved"


DEFAULT_EXAMPLE = (
    "Analyze: Step 1: Doctor 1 names the likely diagnosis and a sensible first test. "
    "Step 2: Doctor 2 covers the diagnosis but omits any follow-up advice.\n"
    "Score: Doctor 1: 5 points. Doctor 2: 3 points."
)

DEFAULT_TEMPLATE = """You are an experienced chief physician reviewing how well several doctors answered a patient's question. Compare each answer against the reference answer, reasoning step by step, then give every doctor an integer score from 1 (worst) to 5 (best).

Reply in exactly this form:
Analyze: Step 1: <reasoning> Step 2: <reasoning> ...
Score: Doctor 1: <score> points. Doctor 2: <score> points. ...

If you lack a piece of medical knowledge needed to judge the answers, do not guess. Instead reply with a single line:
[Question] <what you need to know>

One worked example:
{example}

Patient question:
{question}

Doctor answers:
{responses}

Reference answer:
{answer}"""

_SLOTS = ("example", "question", "responses", "answer")


@dataclass(frozen=True)
class ChainConfig:
    max_rounds: int = 5
    top_k: int = DEFAULT_TOP_K
    query_marker_mode: QueryMarkerMode = QueryMarkerMode.STRICT_BRACKET
    prompt_template: str = DEFAULT_TEMPLATE
    params: GenerationParams = GenerationParams()

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise MedevalError("max_rounds must be >= 1")
        if self.top_k < 1:
            raise MedevalError("top_k must be >= 1")


@dataclass(frozen=True)
class RetrievedChunk:
    chunk_id: str
    score: float
    text: str

    def to_dict(self) -> dict[str, Any]:
        return {"chunk_id": self.chunk_id, "score": self.score, "text": self.text}


@dataclass(frozen=True)
class ChainRound:
    output: str
    query: str | None = None
    retrieved: tuple[RetrievedChunk, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "output": self.output,
            "query": self.query,
            "retrieved": [c.to_dict() for c in self.retrieved],
        }


@dataclass(frozen=True)
class ChainTrace:
    case_id: str
    rounds: tuple[ChainRound, ...]
    outcome: ChainOutcome

    @property
    def n_calls(self) -> int:
        return len(self.rounds)

    @property
    def n_retrievals(self) -> int:
        return sum(1 for r in self.rounds if r.query is not None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "rounds": [r.to_dict() for r in self.rounds],
            "outcome": self.outcome.value,
            "n_calls": self.n_calls,
            "n_retrievals": self.n_retrievals,
        }


def detect_query(llm_output: str, mode: QueryMarkerMode = QueryMarkerMode.STRICT_BRACKET) -> str | None:
    """Decide whether evaluator output is a knowledge request.

    Strict mode requires a line-leading "[Question]" marker and returns the
    rest of that line; loose mode treats any output containing the bare word
    "Question" as a query for the whole output.
    """
    if mode is QueryMarkerMode.LOOSE_SUBSTRING:
        return llm_output if "Question" in llm_output else None
    for line in llm_output.splitlines():
        stripped = line.lstrip()
        if stripped.startswith("[Question]"):
            return stripped[len("[Question]"):].strip()
    return None


_ANALYZE_RE = re.compile(r"\bAnalyze\s*:")
_SCORE_RE = re.compile(r"\bScore\s*:")
_STEP_RE = re.compile(r"\bStep\s+(\d+)\s*:")
_ENTRY_RE = re.compile(r"\bDoctor\s+(\d+)\s*:\s*(\d+(?:\.\d+)?)\s*points?[.,;!]?", re.IGNORECASE)


def parse_evaluation(text: str, n_responses: int) -> EvaluationResult:
    """Parse evaluator output into steps plus one integer score per doctor.

    Scores are keyed by doctor index - 1 and must cover 1..n_responses
    exactly once; anything partial or out of range is an error, never a
    silently truncated result.
    """
    if n_responses < 1:
        raise MedevalError("n_responses must be >= 1")
    m_analyze = _ANALYZE_RE.search(text)
    m_score = _SCORE_RE.search(text, m_analyze.end() if m_analyze else 0)
    if m_score is None:
        raise MissingScoreSection("no 'Score:' section found")
    if m_analyze is None:
        raise NoSteps("no 'Analyze:' section found")

    analyze_body = text[m_analyze.end() : m_score.start()]
    step_marks = list(_STEP_RE.finditer(analyze_body))
    if not step_marks:
        raise NoSteps("'Analyze:' section contains no steps")
    steps = []
    for i, mark in enumerate(step_marks):
        end = step_marks[i + 1].start() if i + 1 < len(step_marks) else len(analyze_body)
        steps.append(analyze_body[mark.end() : end].strip())

    scores: dict[int, int] = {}
    for mark in _ENTRY_RE.finditer(text, m_score.end()):
        doctor = int(mark.group(1))
        raw_score = mark.group(2)
        if doctor < 1 or doctor > n_responses:
            raise UnexpectedDoctor(doctor, n_responses)
        if doctor - 1 in scores:
            raise DuplicateDoctor(doctor)
        if "." in raw_score:
            raise ScoreOutOfRange(f"doctor {doctor}: fractional score {raw_score}")
        value = int(raw_score)
        if not MIN_SCORE <= value <= MAX_SCORE:
            raise ScoreOutOfRange(f"doctor {doctor}: score {value} outside {MIN_SCORE}..{MAX_SCORE}")
        scores[doctor - 1] = value
    for index in range(1, n_responses + 1):
        if index - 1 not in scores:
            raise MissingDoctor(index)
    return EvaluationResult(steps=tuple(steps), scores=scores, raw_text=text)


def format_evaluation(result: EvaluationResult) -> str:
    """Render an EvaluationResult in canonical grammar form."""
    analyze = " ".join(f"Step {i + 1}: {s}" for i, s in enumerate(result.steps))
    entries = []
    for key in sorted(result.scores):
        value = result.scores[key]
        unit = "point" if value == 1 else "points"
        entries.append(f"Doctor {key + 1}: {value} {unit}.")
    return f"Analyze: {analyze}\nScore: {' '.join(entries)}"


def approx_token_count(text: str) -> int:
    """Whitespace-word count, the budget proxy used for the 2,048-token cap."""
    return len(text.split())


def render_prompt(
    case: EvalCase,
    accumulated_rounds: Sequence[tuple[str, Sequence[str]]] = (),
    template: str = DEFAULT_TEMPLATE,
    example: str = DEFAULT_EXAMPLE,
) -> str:
    """Build the evaluator prompt: template, case tuple, then every prior
    (output, retrieved knowledge) pair in order. Byte-deterministic."""
    for slot in _SLOTS:
        if "{" + slot + "}" not in template:
            raise MissingSlot(f"template lacks {{{slot}}}")
    responses = "\n".join(f"Doctor {i + 1}: {r.text}" for i, r in enumerate(case.responses))
    prompt = template.format(
        example=example,
        question=case.question,
        responses=responses,
        answer=case.reference_answer,
    )
    parts = [prompt]
    for n, (output, chunk_texts) in enumerate(accumulated_rounds, start=1):
        parts.append(f"\n\nYour request #{n}:\n{output}")
        knowledge = "\n".join(f"- {t}" for t in chunk_texts)
        parts.append(f"\nRetrieved knowledge #{n}:\n{knowledge}")
    return "".join(parts)


def run_chain(
    case: EvalCase,
    index: VectorIndex,
    gateway: Gateway,
    config: ChainConfig | None = None,
) -> tuple[EvaluationResult, ChainTrace]:
    """Run the knowledge completion chain for one case.

    Raises Unresolved(trace) if every round asked for knowledge, and
    ParseError subclasses (with .trace attached) if the final output does
    not follow the grammar. Gateway errors propagate with .trace attached.
    """
    config = config or ChainConfig()
    rounds: list[ChainRound] = []
    history: list[tuple[str, list[str]]] = []

    def trace(outcome: ChainOutcome) -> ChainTrace:
        return ChainTrace(case_id=case.case_id, rounds=tuple(rounds), outcome=outcome)

    for _ in range(config.max_rounds):
        prompt = render_prompt(case, history, config.prompt_template)
        try:
            reply = gateway.call(Role.EVALUATOR, ChatRequest(prompt=prompt, params=config.params))
        except MedevalError as exc:
            exc.trace = trace(ChainOutcome.UNRESOLVED)  # type: ignore[attr-defined]
            raise
        query = detect_query(reply.text, config.query_marker_mode)
        if query is not None:
            hits = index.query(query, k=config.top_k)
            retrieved = tuple(
                RetrievedChunk(chunk_id=c.chunk_id, score=s, text=c.text) for c, s in hits
            )
            rounds.append(ChainRound(output=reply.text, query=query, retrieved=retrieved))
            history.append((reply.text, [c.text for c in retrieved]))
            continue
        rounds.append(ChainRound(output=reply.text))
        try:
            result = parse_evaluation(reply.text, n_responses=len(case.responses))
        except ParseError as exc:
            exc.trace = trace(ChainOutcome.UNRESOLVED)
            raise
        return result, trace(ChainOutcome.EVALUATED)
    raise Unresolved(trace(ChainOutcome.UNRESOLVED))


def synthesize_records(
    cases: Sequence[EvalCase],
    index: VectorIndex,
    gateway: Gateway,
    config: ChainConfig | None = None,
    source: Source = Source.HIGH_TIER,
) -> tuple[list[InstructionRecord], list[ChainTrace], list[tuple[str, str]]]:
    """Run the chain over many cases, in order.

    Failed cases (unresolved or unparseable) are skipped and reported as
    (case_id, error class) pairs rather than aborting the batch.
    """
    records: list[InstructionRecord] = []
    traces: list[ChainTrace] = []
    failures: list[tuple[str, str]] = []
    for case in cases:
        try:
            result, chain_trace = run_chain(case, index, gateway, config)
        except (Unresolved, ParseError) as exc:
            failures.append((case.case_id, exc.__class__.__name__))
            if exc.trace is not None:
                traces.append(exc.trace)
            continue
        records.append(InstructionRecord(case=case, evaluation=result, source=source))
        traces.append(chain_trace)
    return records, traces, failures
