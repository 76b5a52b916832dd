"""Iterative knowledge introspection.

One iteration: score the current evaluator over the instruction set, find
the incorrectly evaluated records, run the suggester/judge consensus
protocol on each (at most three rounds, human jury on triple rejection),
patch the instruction set with accepted suggestions, and export a refresh
manifest for external retraining.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from .chain import ChainConfig, run_chain
from .curriculum import training_pair
from .gateway import ChatRequest, Gateway, Role
from .jury import JuryMessage, JuryQueue, JuryTicket, make_ticket
from .knowledge import VectorIndex
from .metrics import same_weak_order
from .model import (
    InstructionRecord,
    MedevalError,
    Suggestion,
    SuggestionAuthor,
    Verdict,
    dumps_canonical,
    sha256_file,
)

logger = logging.getLogger(__name__)

CONSENSUS_MAX_ROUNDS = 3
REFRESH_FILE = "refresh.jsonl"


class UnparseableVerdict(MedevalError):
    pass


class DanglingSuggestion(MedevalError):
    pass


class OpenJuryTickets(MedevalError):
    def __init__(self, ticket_ids: Sequence[str], state: "IntrospectionState | None" = None):
        super().__init__(f"{len(ticket_ids)} jury tickets still open: {', '.join(ticket_ids)}")
        self.ticket_ids = tuple(ticket_ids)
        self.state = state


class CorrectnessMode(str, enum.Enum):
    RANK_MISMATCH = "rank"
    EXACT_MISMATCH = "exact"


@dataclass(frozen=True)
class Incorrect:
    record_id: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"record_id": self.record_id, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "Incorrect":
        return cls(record_id=d["record_id"], reason=d["reason"])


def scores_agree(
    predicted: dict[int, int], reference: dict[int, int], mode: CorrectnessMode
) -> bool:
    indices = sorted(reference)
    if sorted(predicted) != indices:
        return False
    if mode is CorrectnessMode.EXACT_MISMATCH:
        return all(predicted[i] == reference[i] for i in indices)
    return same_weak_order([predicted[i] for i in indices], [reference[i] for i in indices])


def evaluate_model(
    records: Sequence[InstructionRecord],
    index: VectorIndex,
    gateway: Gateway,
    config: ChainConfig | None = None,
    mode: CorrectnessMode = CorrectnessMode.RANK_MISMATCH,
) -> list[Incorrect]:
    """Re-evaluate every record's case with the current evaluator and
    return the records it gets wrong. A chain failure counts as incorrect,
    with the failure class as the reason."""
    incorrect: list[Incorrect] = []
    for record in records:
        try:
            result, _trace = run_chain(record.case, index, gateway, config)
        except MedevalError as exc:
            incorrect.append(
                Incorrect(record_id=record.record_id, reason=f"chain_error:{exc.__class__.__name__}")
            )
            continue
        if not scores_agree(result.scores, record.evaluation.scores, mode):
            incorrect.append(Incorrect(record_id=record.record_id, reason=mode.value + "_mismatch"))
    return incorrect


SUGGESTER_TEMPLATE = """An evaluation of doctor answers was judged incorrect. Propose one concise revision suggestion: a missing fact or correction that would fix the evaluation.

Patient question:
{question}

Doctor answers:
{responses}

Reference answer:
{answer}

Current evaluation:
{evaluation}

Reference knowledge:
{knowledge}
{critique}
Reply with the suggestion text only."""

JUDGE_TEMPLATE = """Decide whether the following revision suggestion genuinely improves the evaluation of the doctor answers. Reply with ACCEPT or REJECT as the first word, then one sentence of justification.

Patient question:
{question}

Current evaluation:
{evaluation}

Suggestion:
{suggestion}"""


def _parse_verdict(text: str) -> bool:
    """Leading ACCEPT/REJECT token; anything else is unparseable."""
    stripped = text.strip()
    first = stripped.split(None, 1)[0] if stripped else ""
    token = first.strip("[]().,:;!").upper()
    if token == "ACCEPT":
        return True
    if token == "REJECT":
        return False
    raise UnparseableVerdict(f"judge output starts with {first!r}, not ACCEPT/REJECT")


@dataclass(frozen=True)
class ConsensusOutcome:
    record_id: str
    accepted: Suggestion | None
    ticket: JuryTicket | None
    transcript: tuple[JuryMessage, ...]

    @property
    def is_accepted(self) -> bool:
        return self.accepted is not None


def run_consensus(
    record: InstructionRecord,
    index: VectorIndex,
    gateway: Gateway,
    top_k: int = 3,
) -> ConsensusOutcome:
    """Suggester/judge loop: up to three proposal rounds; first ACCEPT wins,
    three REJECTs escalate the transcript to the human jury. The suggester
    sees retrieved knowledge for the record's question and, from round two,
    the judge's last critique. Unparseable judge verdicts count as REJECT."""
    case = record.case
    chunks = index.query(case.question, k=top_k)
    knowledge = "\n".join(f"- {chunk.text}" for chunk, _score in chunks)
    responses = "\n".join(f"Doctor {i + 1}: {r.text}" for i, r in enumerate(case.responses))
    transcript: list[JuryMessage] = []
    critique = ""
    for round_no in range(1, CONSENSUS_MAX_ROUNDS + 1):
        s_prompt = SUGGESTER_TEMPLATE.format(
            question=case.question,
            responses=responses,
            answer=case.reference_answer,
            evaluation=record.evaluation.raw_text,
            knowledge=knowledge,
            critique=critique,
        )
        suggestion_text = gateway.call(Role.SUGGESTER, ChatRequest(prompt=s_prompt)).text.strip()
        transcript.append(JuryMessage(role="suggester", text=suggestion_text))

        j_prompt = JUDGE_TEMPLATE.format(
            question=case.question,
            evaluation=record.evaluation.raw_text,
            suggestion=suggestion_text,
        )
        judge_text = gateway.call(Role.JUDGE, ChatRequest(prompt=j_prompt)).text
        transcript.append(JuryMessage(role="judge", text=judge_text))
        try:
            accepted = _parse_verdict(judge_text)
        except UnparseableVerdict as exc:
            logger.warning("record %s round %d: %s", record.record_id, round_no, exc)
            accepted = False
        if accepted:
            suggestion = Suggestion(
                text=suggestion_text,
                round=round_no,
                verdict=Verdict.JUDGE_ACCEPTED,
                author=SuggestionAuthor.SUGGESTER,
            )
            return ConsensusOutcome(
                record_id=record.record_id,
                accepted=suggestion,
                ticket=None,
                transcript=tuple(transcript),
            )
        critique = f"\nThe judge rejected the previous suggestion:\n{judge_text}\n"
    ticket = make_ticket(record.record_id, transcript)
    return ConsensusOutcome(
        record_id=record.record_id, accepted=None, ticket=ticket, transcript=tuple(transcript)
    )


def apply_suggestions(
    records: Sequence[InstructionRecord], accepted: dict[str, Suggestion]
) -> list[InstructionRecord]:
    """Append each accepted suggestion to its record; untouched records are
    returned as the same objects."""
    ids = {r.record_id for r in records}
    for record_id in accepted:
        if record_id not in ids:
            raise DanglingSuggestion(f"suggestion for unknown record {record_id}")
    out = []
    for record in records:
        suggestion = accepted.get(record.record_id)
        out.append(record.with_suggestion(suggestion) if suggestion else record)
    return out


@dataclass(frozen=True)
class IntrospectionState:
    """Resumable snapshot of one introspection iteration.

    pending_tickets holds jury escalations awaiting human verdicts; a rerun
    with the same state picks up after the verdicts instead of re-calling
    the models.
    """

    iteration: int
    records: tuple[InstructionRecord, ...]
    incorrect: tuple[Incorrect, ...] = ()
    pending_tickets: tuple[str, ...] = ()
    accepted: tuple[tuple[str, Suggestion], ...] = ()

    def __post_init__(self) -> None:
        ids = {r.record_id for r in self.records}
        for item in self.incorrect:
            if item.record_id not in ids:
                raise MedevalError(f"incorrect id {item.record_id} not in record set")
        seen = set()
        for record_id, _suggestion in self.accepted:
            if record_id in seen:
                raise MedevalError(f"duplicate accepted suggestion for {record_id}")
            seen.add(record_id)

    @property
    def accepted_map(self) -> dict[str, Suggestion]:
        return dict(self.accepted)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "records": [r.to_dict() for r in self.records],
            "incorrect": [i.to_dict() for i in self.incorrect],
            "pending_tickets": list(self.pending_tickets),
            "accepted": [
                {"record_id": rid, "suggestion": s.to_dict()} for rid, s in self.accepted
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "IntrospectionState":
        return cls(
            iteration=int(d["iteration"]),
            records=tuple(InstructionRecord.from_dict(r) for r in d["records"]),
            incorrect=tuple(Incorrect.from_dict(i) for i in d["incorrect"]),
            pending_tickets=tuple(d["pending_tickets"]),
            accepted=tuple(
                (e["record_id"], Suggestion.from_dict(e["suggestion"])) for e in d["accepted"]
            ),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(dumps_canonical(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "IntrospectionState":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def export_refresh_manifest(
    records: Sequence[InstructionRecord], out_dir: str | Path, iteration: int
) -> dict[str, Any]:
    """Single-stage training manifest holding exactly the patched records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / REFRESH_FILE
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_canonical(training_pair(record)))
            fh.write("\n")
    manifest = {
        "order": [REFRESH_FILE],
        "counts": [len(records)],
        "iteration": iteration,
        "files": {REFRESH_FILE: sha256_file(path)},
    }
    (out / "manifest.json").write_text(dumps_canonical(manifest) + "\n", encoding="utf-8")
    return manifest


@dataclass(frozen=True)
class IterationResult:
    state: IntrospectionState
    patched_ids: tuple[str, ...]
    manifest: dict[str, Any]


def run_iteration(
    state: IntrospectionState,
    index: VectorIndex,
    gateway: Gateway,
    jury_queue: JuryQueue,
    out_dir: str | Path,
    *,
    skip_jury: bool = False,
    mode: CorrectnessMode = CorrectnessMode.RANK_MISMATCH,
    config: ChainConfig | None = None,
    top_k: int = 3,
) -> IterationResult:
    """One full introspection iteration.

    Fresh state: evaluate, run consensus per incorrect record, publish jury
    tickets. If any ticket lacks a human verdict, raises OpenJuryTickets
    carrying a resumable state (unless skip_jury, which drops the open
    suggestions as finally rejected). Once all verdicts are in: jury text
    takes precedence over the suggester's, rejections drop the suggestion,
    patched records are exported as a refresh manifest.
    """
    records = {r.record_id: r for r in state.records}

    if state.pending_tickets:
        incorrect = state.incorrect
        accepted = state.accepted_map
        tickets = [jury_queue.get(tid) for tid in state.pending_tickets]
    else:
        incorrect = tuple(evaluate_model(state.records, index, gateway, config, mode))
        accepted = {}
        tickets = []
        for item in incorrect:
            outcome = run_consensus(records[item.record_id], index, gateway, top_k=top_k)
            if outcome.accepted is not None:
                accepted[item.record_id] = outcome.accepted
            else:
                assert outcome.ticket is not None
                jury_queue.publish(outcome.ticket)
                tickets.append(outcome.ticket)

    open_ids: list[str] = []
    for ticket in tickets:
        verdict = jury_queue.verdict_for(ticket.ticket_id)
        if verdict is None:
            if skip_jury:
                logger.info("dropping open ticket %s (jury skipped)", ticket.ticket_id)
                continue
            open_ids.append(ticket.ticket_id)
            continue
        if not verdict.accept:
            continue
        text = verdict.text if verdict.text else ticket.last_suggestion_text
        if text is None:
            raise MedevalError(f"ticket {ticket.ticket_id} has no suggestion text")
        accepted[ticket.record_id] = Suggestion(
            text=text,
            round=CONSENSUS_MAX_ROUNDS,
            verdict=Verdict.JURY_ACCEPTED,
            author=SuggestionAuthor.JURY,
        )

    if open_ids:
        waiting = IntrospectionState(
            iteration=state.iteration,
            records=state.records,
            incorrect=tuple(incorrect),
            pending_tickets=tuple(sorted(t.ticket_id for t in tickets)),
            accepted=tuple(sorted(accepted.items())),
        )
        raise OpenJuryTickets(sorted(open_ids), state=waiting)

    updated = apply_suggestions(state.records, accepted)
    patched_ids = tuple(sorted(accepted))
    patched_records = [r for r in updated if r.record_id in accepted]
    manifest = export_refresh_manifest(patched_records, out_dir, iteration=state.iteration)
    next_state = IntrospectionState(
        iteration=state.iteration + 1,
        records=tuple(updated),
        incorrect=tuple(incorrect),
        pending_tickets=(),
        accepted=tuple(sorted(accepted.items())),
    )
    return IterationResult(state=next_state, patched_ids=patched_ids, manifest=manifest)
