"""
Introspection: find wrong evaluations, negotiate fixes, escalate to a jury
==========================================================================
"""

import tempfile
from pathlib import Path

from medeval.gateway import Role, scripted_gateway
from medeval.introspection import (
    IntrospectionState,
    OpenJuryTickets,
    run_consensus,
    run_iteration,
)
from medeval.jury import JuryQueue, JuryVerdict
from medeval.knowledge import HashEmbedder, VectorIndex, build_chunks
from medeval.model import EvalCase, EvaluationResult, InstructionRecord, ModelResponse, Source


def record(tag: str, scores: dict[int, int]) -> InstructionRecord:
    case = EvalCase(
        case_id=f"id-{tag}",
        question=f"Question about {tag}?",
        responses=tuple(
            ModelResponse(model_label=f"model-{i + 1}", text=f"Answer {i + 1} for {tag}.")
            for i in range(len(scores))
        ),
        reference_answer=f"Reference {tag}.",
    )
    entries = " ".join(f"Doctor {i + 1}: {scores[i]} points." for i in sorted(scores))
    raw = f"Analyze: Step 1: Reviewed {tag}.\nScore: {entries}"
    return InstructionRecord(
        case=case,
        source=Source.HIGH_TIER,
        evaluation=EvaluationResult(steps=(f"Reviewed {tag}.",), scores=scores, raw_text=raw),
    )


documents = {"notes.txt": "Beta blockers are avoided in acute decompensated heart failure."}
embedder = HashEmbedder(dim=128)
index = VectorIndex(build_chunks(documents, embedder, window=16, overlap=4), embedder)

records = (record("hf", {0: 5, 1: 2}), record("bp", {0: 4, 1: 4}))

# Scripted replies: the evaluator contradicts the first record's ranking
# (incorrect) and reproduces the second (correct). For the incorrect one,
# the suggester's first proposal is accepted by the judge.
gateway = scripted_gateway(
    {
        Role.EVALUATOR: [
            "Analyze: Step 1: Both answers equal.\nScore: Doctor 1: 3 points. Doctor 2: 3 points.",
            records[1].evaluation.raw_text,
        ],
        Role.SUGGESTER: ["Note that beta blockers are avoided in acute decompensation."],
        Role.JUDGE: ["ACCEPT grounded in the retrieved knowledge."],
    }
)

work = Path(tempfile.mkdtemp())
jury_queue = JuryQueue(work / "jury")
state = IntrospectionState(iteration=1, records=records)
result = run_iteration(state, index, gateway, jury_queue, work / "refresh")
print(f"incorrect: {[i.record_id for i in result.state.incorrect]}")
print(f"patched:   {list(result.patched_ids)}")
print(f"manifest counts {result.manifest['counts']} for iteration {result.manifest['iteration']}")

# When the judge rejects three rounds in a row the transcript escalates to
# the human jury; run_iteration raises with a resumable state until every
# verdict is in.
stubborn = scripted_gateway(
    {
        Role.EVALUATOR: [
            "Analyze: Step 1: Both equal.\nScore: Doctor 1: 3 points. Doctor 2: 3 points.",
            records[1].evaluation.raw_text,
        ],
        Role.SUGGESTER: ["Proposal one.", "Proposal two.", "Proposal three."],
        Role.JUDGE: ["REJECT vague.", "REJECT still vague.", "REJECT no."],
    }
)
jury_queue = JuryQueue(work / "jury2")
try:
    run_iteration(state, index, stubborn, jury_queue, work / "refresh2")
except OpenJuryTickets as exc:
    print(f"waiting on jury tickets: {list(exc.ticket_ids)}")
    waiting = exc.state

# A human accepts with revised wording; the rerun resumes from the saved
# state and makes no further model calls.
ticket_id = waiting.pending_tickets[0]
jury_queue.submit_verdict(
    ticket_id,
    JuryVerdict(accept=True, text="Avoid beta blockers during acute decompensation.", juror_id="jury-1"),
)
resumed = run_iteration(
    waiting, index, scripted_gateway({}), jury_queue, work / "refresh2"
)
print(f"after verdict, patched: {list(resumed.patched_ids)}")

# run_consensus is the single-record view of the same negotiation.
outcome = run_consensus(
    records[0],
    index,
    scripted_gateway({Role.SUGGESTER: ["Add the contraindication."], Role.JUDGE: ["ACCEPT fine."]}),
)
print(f"consensus accepted in round {outcome.accepted.round}")
