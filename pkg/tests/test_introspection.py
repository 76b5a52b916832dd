"""Introspection loop, consensus protocol, and jury queue tests."""

from __future__ import annotations

import random

import pytest

from medeval.chain import ChainConfig
from medeval.gateway import Role, scripted_gateway
from medeval.introspection import (
    CorrectnessMode,
    DanglingSuggestion,
    Incorrect,
    IntrospectionState,
    OpenJuryTickets,
    UnparseableVerdict,
    _parse_verdict,
    apply_suggestions,
    evaluate_model,
    export_refresh_manifest,
    run_consensus,
    run_iteration,
    scores_agree,
)
from medeval.jury import (
    JuryMessage,
    JuryQueue,
    JuryVerdict,
    TicketNotFound,
    TranscriptIncomplete,
    make_ticket,
)
from medeval.knowledge import HashEmbedder, VectorIndex, build_chunks
from medeval.model import (
    MedevalError,
    Suggestion,
    SuggestionAuthor,
    Verdict,
    sha256_file,
)
from conftest import make_evaluation, make_record

DOCS = {
    "bp.txt": "adults with hypertension should target blood pressure below 130 over 80",
}


def one_doc_index() -> VectorIndex:
    emb = HashEmbedder(dim=64)
    return VectorIndex(build_chunks(DOCS, emb, window=8, overlap=2), emb)


def reversed_scores(scores: dict[int, int]) -> dict[int, int]:
    values = [scores[i] for i in sorted(scores)]
    return {i: v for i, v in enumerate(reversed(values))}


# --- verdict parsing ---


@pytest.mark.parametrize(
    "text,expected",
    [
        ("ACCEPT because the fix is real.", True),
        ("[ACCEPT] sound reasoning", True),
        ("Accept.", True),
        ("accept, the dose was indeed wrong", True),
        ("REJECT: no new information", False),
        ("(reject) duplicate of the evaluation", False),
        ("Reject! the suggestion contradicts the reference", False),
    ],
)
def test_parse_verdict_leading_token(text: str, expected: bool) -> None:
    assert _parse_verdict(text) is expected


@pytest.mark.parametrize("text", ["Maybe accept", "", "ACCEPTABLE premise", "verdict: yes"])
def test_parse_verdict_unparseable(text: str) -> None:
    with pytest.raises(UnparseableVerdict):
        _parse_verdict(text)


# --- scores_agree ---


def test_rank_mode_compares_weak_order_only() -> None:
    assert scores_agree({0: 5, 1: 3}, {0: 4, 1: 2}, CorrectnessMode.RANK_MISMATCH)
    assert not scores_agree({0: 3, 1: 5}, {0: 4, 1: 2}, CorrectnessMode.RANK_MISMATCH)


def test_rank_mode_distinguishes_ties_from_strict_order() -> None:
    assert not scores_agree({0: 4, 1: 4}, {0: 5, 1: 3}, CorrectnessMode.RANK_MISMATCH)
    assert scores_agree({0: 4, 1: 4}, {0: 2, 1: 2}, CorrectnessMode.RANK_MISMATCH)


def test_exact_mode_requires_equal_values() -> None:
    assert scores_agree({0: 5, 1: 3}, {0: 5, 1: 3}, CorrectnessMode.EXACT_MISMATCH)
    assert not scores_agree({0: 4, 1: 2}, {0: 5, 1: 3}, CorrectnessMode.EXACT_MISMATCH)


def test_mismatched_indices_never_agree() -> None:
    assert not scores_agree({0: 5}, {0: 5, 1: 3}, CorrectnessMode.RANK_MISMATCH)


# --- evaluate_model ---


def test_evaluate_model_flags_rank_flips_and_failures() -> None:
    records = [
        make_record(tag=f"ev{i}", scores={0: 5, 1: 3}, n_responses=2) for i in range(3)
    ]
    script = [
        records[0].evaluation.raw_text,  # unchanged -> correct
        make_evaluation(reversed_scores({0: 5, 1: 3}), tag="ev1").raw_text,  # flipped
        "Analyze: Step 1: broken.",  # unparseable -> chain error
    ]
    gateway = scripted_gateway({Role.EVALUATOR: script})
    incorrect = evaluate_model(records, one_doc_index(), gateway)
    assert [i.record_id for i in incorrect] == [records[1].record_id, records[2].record_id]
    assert incorrect[0].reason == "rank_mismatch"
    assert incorrect[1].reason == "chain_error:MissingScoreSection"


def test_evaluate_model_exact_mode_is_stricter() -> None:
    record = make_record(tag="strict", scores={0: 5, 1: 3}, n_responses=2)
    same_order = make_evaluation({0: 4, 1: 2}, tag="strict").raw_text
    gateway = scripted_gateway({Role.EVALUATOR: [same_order, same_order]})
    index = one_doc_index()
    assert evaluate_model([record], index, gateway, mode=CorrectnessMode.RANK_MISMATCH) == []
    wrong = evaluate_model([record], index, gateway, mode=CorrectnessMode.EXACT_MISMATCH)
    assert [i.reason for i in wrong] == ["exact_mismatch"]


# --- run_consensus ---


def consensus_gateway(judge_replies: list[str], n_suggestions: int = 3):
    suggestions = [f"suggestion text {i + 1}" for i in range(n_suggestions)]
    return scripted_gateway({Role.SUGGESTER: suggestions, Role.JUDGE: judge_replies})


def test_consensus_first_round_accept() -> None:
    record = make_record(tag="c1", scores={0: 5, 1: 3}, n_responses=2)
    gateway = consensus_gateway(["ACCEPT sound fix"])
    outcome = run_consensus(record, one_doc_index(), gateway)
    assert outcome.is_accepted
    assert outcome.accepted == Suggestion(
        text="suggestion text 1",
        round=1,
        verdict=Verdict.JUDGE_ACCEPTED,
        author=SuggestionAuthor.SUGGESTER,
    )
    assert outcome.ticket is None
    assert [m.role for m in outcome.transcript] == ["suggester", "judge"]


def test_consensus_second_round_sees_critique() -> None:
    record = make_record(tag="c2", scores={0: 5, 1: 3}, n_responses=2)
    gateway = consensus_gateway(["REJECT too vague", "ACCEPT now specific"])
    outcome = run_consensus(record, one_doc_index(), gateway)
    assert outcome.accepted is not None
    assert outcome.accepted.round == 2
    suggester = gateway._backends[Role.SUGGESTER]
    assert "judge rejected" in suggester.requests[1].prompt
    assert "REJECT too vague" in suggester.requests[1].prompt
    assert "judge rejected" not in suggester.requests[0].prompt


def test_consensus_triple_reject_escalates() -> None:
    record = make_record(tag="c3", scores={0: 5, 1: 3}, n_responses=2)
    gateway = consensus_gateway(["REJECT a", "REJECT b", "REJECT c"])
    outcome = run_consensus(record, one_doc_index(), gateway)
    assert outcome.accepted is None
    assert outcome.ticket is not None
    assert outcome.ticket.record_id == record.record_id
    assert outcome.ticket.rounds == 3
    assert outcome.ticket.last_suggestion_text == "suggestion text 3"
    # ticket ids are content hashes of the transcript
    assert outcome.ticket.ticket_id == make_ticket(record.record_id, outcome.transcript).ticket_id


def test_consensus_unparseable_verdict_counts_as_reject(caplog) -> None:
    record = make_record(tag="c4", scores={0: 5, 1: 3}, n_responses=2)
    gateway = consensus_gateway(["hmm, unsure", "ACCEPT fine"])
    with caplog.at_level("WARNING"):
        outcome = run_consensus(record, one_doc_index(), gateway)
    assert outcome.accepted is not None
    assert outcome.accepted.round == 2
    assert "not ACCEPT/REJECT" in caplog.text


@pytest.mark.parametrize("verdicts", [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)])
def test_consensus_all_judge_scripts(verdicts: tuple[int, int, int]) -> None:
    record = make_record(tag="c5", scores={0: 5, 1: 3}, n_responses=2)
    replies = ["ACCEPT fix" if v else "REJECT flaw" for v in verdicts]
    gateway = consensus_gateway(replies)
    outcome = run_consensus(record, one_doc_index(), gateway)
    if any(verdicts):
        expected_round = verdicts.index(1) + 1
        assert outcome.accepted is not None
        assert outcome.accepted.round == expected_round
        assert outcome.ticket is None
        assert len(outcome.transcript) == 2 * expected_round
    else:
        assert outcome.accepted is None
        assert outcome.ticket is not None
        assert len(outcome.transcript) == 6


# --- apply_suggestions ---


def test_apply_suggestions_patches_only_named_records() -> None:
    records = [make_record(tag=f"p{i}") for i in range(3)]
    suggestion = Suggestion(
        text="fix", round=1, verdict=Verdict.JUDGE_ACCEPTED, author=SuggestionAuthor.SUGGESTER
    )
    out = apply_suggestions(records, {records[1].record_id: suggestion})
    assert out[0] is records[0]
    assert out[2] is records[2]
    assert out[1].suggestions == (suggestion,)


def test_apply_suggestions_rejects_unknown_id() -> None:
    suggestion = Suggestion(
        text="fix", round=1, verdict=Verdict.JUDGE_ACCEPTED, author=SuggestionAuthor.SUGGESTER
    )
    with pytest.raises(DanglingSuggestion):
        apply_suggestions([make_record(tag="known")], {"missing": suggestion})


# --- IntrospectionState ---


def test_state_round_trip(tmp_path) -> None:
    records = tuple(make_record(tag=f"s{i}", scores={0: 5, 1: 3}, n_responses=2) for i in range(2))
    suggestion = Suggestion(
        text="fix", round=3, verdict=Verdict.JURY_ACCEPTED, author=SuggestionAuthor.JURY
    )
    state = IntrospectionState(
        iteration=2,
        records=records,
        incorrect=(Incorrect(record_id=records[0].record_id, reason="rank_mismatch"),),
        pending_tickets=("abc123",),
        accepted=((records[0].record_id, suggestion),),
    )
    path = tmp_path / "state.json"
    state.save(path)
    assert IntrospectionState.load(path) == state


def test_state_rejects_unknown_incorrect_id() -> None:
    with pytest.raises(MedevalError):
        IntrospectionState(
            iteration=0,
            records=(make_record(tag="only"),),
            incorrect=(Incorrect(record_id="ghost", reason="rank_mismatch"),),
        )


def test_state_rejects_duplicate_accepted() -> None:
    rec = make_record(tag="dup")
    suggestion = Suggestion(
        text="fix", round=1, verdict=Verdict.JUDGE_ACCEPTED, author=SuggestionAuthor.SUGGESTER
    )
    with pytest.raises(MedevalError):
        IntrospectionState(
            iteration=0,
            records=(rec,),
            accepted=((rec.record_id, suggestion), (rec.record_id, suggestion)),
        )


# --- refresh manifest ---


def test_refresh_manifest_lists_patched_records(tmp_path) -> None:
    records = [make_record(tag=f"m{i}") for i in range(2)]
    manifest = export_refresh_manifest(records, tmp_path, iteration=4)
    assert manifest["order"] == ["refresh.jsonl"]
    assert manifest["counts"] == [2]
    assert manifest["iteration"] == 4
    path = tmp_path / "refresh.jsonl"
    assert manifest["files"]["refresh.jsonl"] == sha256_file(path)
    assert len(path.read_text(encoding="utf-8").splitlines()) == 2


# --- run_iteration ---


def iteration_records(n: int = 2) -> list:
    return [make_record(tag=f"it{i}", scores={0: 5, 1: 3}, n_responses=2) for i in range(n)]


def test_iteration_patches_incorrect_record(tmp_path) -> None:
    records = iteration_records()
    flipped = make_evaluation(reversed_scores({0: 5, 1: 3}), tag="it1").raw_text
    gateway = scripted_gateway(
        {
            Role.EVALUATOR: [records[0].evaluation.raw_text, flipped],
            Role.SUGGESTER: ["restore the original ranking"],
            Role.JUDGE: ["ACCEPT matches the reference"],
        }
    )
    state = IntrospectionState(iteration=1, records=tuple(records))
    queue = JuryQueue(tmp_path / "queue")
    result = run_iteration(state, one_doc_index(), gateway, queue, tmp_path / "out")
    assert result.patched_ids == (records[1].record_id,)
    assert result.state.iteration == 2
    assert result.manifest["counts"] == [1]
    patched = {r.record_id: r for r in result.state.records}[records[1].record_id]
    assert patched.suggestions[0].verdict is Verdict.JUDGE_ACCEPTED
    assert patched.suggestions[0].text == "restore the original ranking"
    untouched = {r.record_id: r for r in result.state.records}[records[0].record_id]
    assert untouched.suggestions == ()


def jury_bound_gateway(records: list):
    flipped = make_evaluation(reversed_scores({0: 5, 1: 3}), tag="it1").raw_text
    return scripted_gateway(
        {
            Role.EVALUATOR: [records[0].evaluation.raw_text, flipped],
            Role.SUGGESTER: ["try one", "try two", "try three"],
            Role.JUDGE: ["REJECT a", "REJECT b", "REJECT c"],
        }
    )


def test_iteration_waits_on_open_jury_ticket(tmp_path) -> None:
    records = iteration_records()
    state = IntrospectionState(iteration=1, records=tuple(records))
    queue = JuryQueue(tmp_path / "queue")
    with pytest.raises(OpenJuryTickets) as err:
        run_iteration(state, one_doc_index(), jury_bound_gateway(records), queue, tmp_path / "out")
    assert len(err.value.ticket_ids) == 1
    waiting = err.value.state
    assert waiting is not None
    assert waiting.iteration == 1
    assert waiting.pending_tickets == err.value.ticket_ids
    assert len(queue.open_tickets()) == 1


def run_until_jury(tmp_path, records) -> tuple[IntrospectionState, JuryQueue, str]:
    state = IntrospectionState(iteration=1, records=tuple(records))
    queue = JuryQueue(tmp_path / "queue")
    with pytest.raises(OpenJuryTickets) as err:
        run_iteration(state, one_doc_index(), jury_bound_gateway(records), queue, tmp_path / "out")
    return err.value.state, queue, err.value.ticket_ids[0]


def test_iteration_resume_applies_jury_text_without_model_calls(tmp_path) -> None:
    records = iteration_records()
    waiting, queue, ticket_id = run_until_jury(tmp_path, records)
    queue.submit_verdict(
        ticket_id, JuryVerdict(accept=True, text="the jury's wording", juror_id="juror-1")
    )
    empty_gateway = scripted_gateway({})
    result = run_iteration(
        waiting, one_doc_index(), empty_gateway, queue, tmp_path / "out"
    )
    assert result.patched_ids == (records[1].record_id,)
    patched = {r.record_id: r for r in result.state.records}[records[1].record_id]
    assert patched.suggestions[0].text == "the jury's wording"
    assert patched.suggestions[0].verdict is Verdict.JURY_ACCEPTED
    assert patched.suggestions[0].author is SuggestionAuthor.JURY
    assert empty_gateway.call_log == []


def test_iteration_resume_falls_back_to_last_suggestion(tmp_path) -> None:
    records = iteration_records()
    waiting, queue, ticket_id = run_until_jury(tmp_path, records)
    queue.submit_verdict(ticket_id, JuryVerdict(accept=True, text=None, juror_id="juror-1"))
    result = run_iteration(waiting, one_doc_index(), scripted_gateway({}), queue, tmp_path / "out")
    patched = {r.record_id: r for r in result.state.records}[records[1].record_id]
    assert patched.suggestions[0].text == "try three"


def test_iteration_resume_jury_reject_drops_suggestion(tmp_path) -> None:
    records = iteration_records()
    waiting, queue, ticket_id = run_until_jury(tmp_path, records)
    queue.submit_verdict(ticket_id, JuryVerdict(accept=False, juror_id="juror-1"))
    result = run_iteration(waiting, one_doc_index(), scripted_gateway({}), queue, tmp_path / "out")
    assert result.patched_ids == ()
    assert result.manifest["counts"] == [0]


def test_iteration_skip_jury_drops_open_tickets(tmp_path) -> None:
    records = iteration_records()
    state = IntrospectionState(iteration=1, records=tuple(records))
    queue = JuryQueue(tmp_path / "queue")
    result = run_iteration(
        state,
        one_doc_index(),
        jury_bound_gateway(records),
        queue,
        tmp_path / "out",
        skip_jury=True,
    )
    assert result.patched_ids == ()
    assert len(queue.open_tickets()) == 1  # ticket stays open for a later pass


def test_randomized_runs_patch_only_incorrect_records(tmp_path) -> None:
    """Accepted patches must always be a subset of the incorrectly evaluated
    records, whatever the judge does."""
    for run in range(40):
        rng = random.Random(run)
        records = [
            make_record(tag=f"run{run}-{i}", scores={0: 5, 1: 3}, n_responses=2)
            for i in range(4)
        ]
        evaluator, suggester, judge = [], [], []
        expect_incorrect, expect_patched = [], []
        for i, record in enumerate(records):
            if rng.random() < 0.5:
                evaluator.append(record.evaluation.raw_text)
                continue
            evaluator.append(
                make_evaluation(reversed_scores({0: 5, 1: 3}), tag=f"run{run}-{i}").raw_text
            )
            expect_incorrect.append(record.record_id)
            pattern = rng.choice(["A", "RA", "RRA", "RRR"])
            for verdict in pattern:
                suggester.append(f"fix {record.record_id} {verdict}")
                judge.append("ACCEPT ok" if verdict == "A" else "REJECT no")
            if pattern != "RRR":
                expect_patched.append(record.record_id)
        gateway = scripted_gateway(
            {Role.EVALUATOR: evaluator, Role.SUGGESTER: suggester, Role.JUDGE: judge}
        )
        state = IntrospectionState(iteration=0, records=tuple(records))
        queue = JuryQueue(tmp_path / f"q{run}")
        result = run_iteration(
            state, one_doc_index(), gateway, queue, tmp_path / f"o{run}", skip_jury=True
        )
        assert set(result.patched_ids) <= set(expect_incorrect)
        assert sorted(result.patched_ids) == sorted(expect_patched)
        assert sorted(i.record_id for i in result.state.incorrect) == sorted(expect_incorrect)


# --- jury queue ---


def full_transcript() -> list[JuryMessage]:
    msgs = []
    for i in range(3):
        msgs.append(JuryMessage(role="suggester", text=f"suggestion {i + 1}"))
        msgs.append(JuryMessage(role="judge", text=f"REJECT {i + 1}"))
    return msgs


def test_make_ticket_is_content_addressed() -> None:
    transcript = full_transcript()
    a = make_ticket("rec-1", transcript)
    b = make_ticket("rec-1", transcript)
    c = make_ticket("rec-2", transcript)
    assert a.ticket_id == b.ticket_id
    assert a.ticket_id != c.ticket_id


def test_publish_is_idempotent(tmp_path) -> None:
    queue = JuryQueue(tmp_path)
    ticket = make_ticket("rec-1", full_transcript())
    queue.publish(ticket)
    queue.publish(ticket)
    log = (tmp_path / "tickets.jsonl").read_text(encoding="utf-8")
    assert len(log.splitlines()) == 1


def test_submit_verdict_requires_three_rounds(tmp_path) -> None:
    queue = JuryQueue(tmp_path)
    short = make_ticket("rec-1", full_transcript()[:2])
    queue.publish(short)
    with pytest.raises(TranscriptIncomplete):
        queue.submit_verdict(short.ticket_id, JuryVerdict(accept=True, juror_id="j"))


def test_submit_verdict_unknown_ticket(tmp_path) -> None:
    queue = JuryQueue(tmp_path)
    with pytest.raises(TicketNotFound):
        queue.submit_verdict("nope", JuryVerdict(accept=True, juror_id="j"))


def test_verdict_survives_queue_reopen(tmp_path) -> None:
    queue = JuryQueue(tmp_path)
    ticket = make_ticket("rec-1", full_transcript())
    queue.publish(ticket)
    queue.submit_verdict(ticket.ticket_id, JuryVerdict(accept=True, text="t", juror_id="j"))
    reopened = JuryQueue(tmp_path)
    assert reopened.open_tickets() == []
    assert reopened.get(ticket.ticket_id).verdict == JuryVerdict(
        accept=True, text="t", juror_id="j"
    )
