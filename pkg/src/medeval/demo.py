"""End-to-end walkthrough on a small bundled corpus.

Runs every pipeline stage with scripted model backends and a deterministic
review clock, so the same seed always produces a byte-identical output
tree: corpus filtering, knowledge store, evaluation synthesis, quality
classification, verification replay, curriculum export, one introspection
iteration (including a jury escalation), the human-agreement report, and
the growth-curve fit.
"""

from __future__ import annotations

import csv
import random
import warnings
from itertools import count
from pathlib import Path
from typing import Any

from .chain import ChainConfig, synthesize_records
from .classifier import LowSeparability, classify, save_classifier, split_by_quality, train
from .cli import provenance_record, write_json
from .config import PipelineConfig
from .curriculum import export_manifests, plan
from .gateway import Role, scripted_gateway
from .growth import (
    B_DEFAULT,
    C_DEFAULT,
    PUBLISHED_AMPLITUDE,
    SigmoidFit,
    fit_amplitude,
    forecast_plateau,
    load_points_csv,
    normalize_points,
    rss,
    sigmoid_power,
)
from .ingest import apply_filter, assemble_cases, load_qa, load_rules
from .introspection import IntrospectionState, OpenJuryTickets, run_iteration
from .jury import JuryQueue, JuryVerdict
from .knowledge import HashEmbedder, build_store
from .metrics import (
    annotation_matrix,
    build_report,
    complete_rows,
    join_scored_cases,
    paired_model_columns,
    write_win_tie_csv,
)
from .model import (
    HumanAnnotation,
    InstructionRecord,
    MedevalError,
    Quality,
    VerificationStatus,
    write_jsonl,
)
from .review.store import ItemKind, ReviewStore

RESPONDERS = ("base-model", "domain-model", "large-model")
REVIEWER = "demo-reviewer"
JUROR = "demo-juror"
MODEL_PAIR = ("domain-model", "base-model")

# 12 QA pairs; the two mentioning rephrasing exist to exercise the filter.
_CORPUS: tuple[tuple[str, str, tuple[str, str, str]], ...] = (
    (
        "What blood pressure target should most adults with hypertension aim for?",
        "Most adults should aim for below 130/80 mmHg if the regimen is tolerated.",
        (
            "Keep it under 140/90 and you are fine.",
            "Below 130/80 mmHg for most adults, provided treatment is tolerated; reassess at each visit.",
            "A target below 130/80 mmHg is recommended for the majority of treated adults.",
        ),
    ),
    (
        "What is the usual first-line drug for newly diagnosed type 2 diabetes?",
        "Metformin, together with lifestyle modification, unless it is contraindicated.",
        (
            "Start insulin right away to protect the pancreas.",
            "Metformin plus structured lifestyle change; check renal function before starting.",
            "Metformin with diet and exercise is the standard first choice.",
        ),
    ),
    (
        "Could you rephrase my earlier question about insulin timing?",
        "Certainly: you asked whether basal insulin should be taken in the morning or at night.",
        (
            "Sure, here is a rephrased version of your question.",
            "You are asking when to inject basal insulin during the day.",
            "Rephrased: what time of day should basal insulin be dosed?",
        ),
    ),
    (
        "How often should HbA1c be measured once diabetes treatment is stable?",
        "Every six months when targets are stable, and every three months after treatment changes.",
        (
            "Once a year is always enough.",
            "Twice yearly at stable control; quarterly after any change in therapy.",
            "Every three to six months depending on stability of control.",
        ),
    ),
    (
        "Which inhaler should be used for quick relief of asthma symptoms?",
        "A short-acting beta-agonist such as salbutamol provides quick relief.",
        (
            "Use the steroid inhaler whenever you feel wheezy.",
            "A short-acting beta-agonist like salbutamol, with technique reviewed regularly.",
            "Salbutamol as needed is the standard reliever therapy.",
        ),
    ),
    (
        "What lifestyle change lowers blood pressure the most?",
        "Weight loss in overweight patients gives the largest reduction, alongside salt restriction.",
        (
            "Cutting out coffee fixes blood pressure for most people.",
            "Weight reduction has the largest effect; restricting dietary sodium adds further benefit.",
            "Losing excess weight and reducing salt intake lower pressure substantially.",
        ),
    ),
    (
        "Is metformin safe in severe renal impairment?",
        "No; metformin should be stopped when eGFR falls below 30 mL/min because of lactic acidosis risk.",
        (
            "Yes, metformin never needs a dose change.",
            "It is contraindicated below an eGFR of 30 mL/min; reduce the dose between 30 and 45.",
            "Metformin must be withdrawn in severe renal impairment.",
        ),
    ),
    (
        "Please rephrase the asthma question I sent yesterday.",
        "Rephrased: you asked whether inhaled corticosteroids are needed for mild intermittent asthma.",
        (
            "Here is your question again in other words.",
            "You want to know if mild intermittent asthma requires a daily steroid inhaler.",
            "Restated: does mild asthma need maintenance corticosteroids?",
        ),
    ),
    (
        "What is the role of inhaled corticosteroids in persistent asthma?",
        "They are the cornerstone controller therapy and reduce exacerbations and airway inflammation.",
        (
            "They are optional add-ons with little evidence.",
            "Daily inhaled corticosteroids are the core controller, cutting inflammation and attacks.",
            "They form the main maintenance treatment for persistent asthma.",
        ),
    ),
    (
        "Should a patient with hypertension stop treatment once readings normalize?",
        "No; treatment usually continues long-term, with gradual dose review under supervision.",
        (
            "Yes, stop the tablets as soon as readings look good.",
            "No. Control reflects ongoing treatment; any dose reduction is gradual and supervised.",
            "Treatment continues long-term; stopping abruptly risks rebound hypertension.",
        ),
    ),
    (
        "What monitoring does a patient starting an ACE inhibitor need?",
        "Check renal function and potassium before starting and within two weeks of starting or dose change.",
        (
            "No monitoring is needed for ACE inhibitors.",
            "Baseline creatinine and potassium, repeated one to two weeks after initiation or titration.",
            "Renal function and electrolytes before and shortly after starting.",
        ),
    ),
    (
        "How should hypoglycaemia be treated in a conscious adult?",
        "Give 15 to 20 g of fast-acting carbohydrate and recheck glucose after 15 minutes.",
        (
            "Give an insulin correction dose immediately.",
            "15 to 20 g of quick-acting carbohydrate, recheck in 15 minutes, repeat if still low.",
            "Fast-acting glucose by mouth, then recheck after a quarter of an hour.",
        ),
    ),
)

_DOCS = {
    "asthma.txt": (
        "Inhaled corticosteroids are the cornerstone of persistent asthma management and "
        "reduce airway inflammation, symptoms, and exacerbation risk. Short-acting "
        "beta-agonists such as salbutamol are reserved for quick relief of acute symptoms. "
        "Inhaler technique should be reviewed at every opportunity, since poor technique is "
        "a common cause of apparent treatment failure."
    ),
    "diabetes.txt": (
        "Metformin combined with lifestyle modification is first-line therapy for type 2 "
        "diabetes unless contraindicated. It is contraindicated when the eGFR falls below "
        "30 mL/min; dose reduction applies between 30 and 45 mL/min. Glycated haemoglobin "
        "is checked every three months after treatment changes and every six months once "
        "control is stable. Conscious hypoglycaemia is treated with 15 to 20 grams of "
        "fast-acting carbohydrate, rechecking glucose after 15 minutes."
    ),
    "hypertension.txt": (
        "Most treated adults with hypertension should aim for a blood pressure below "
        "130/80 mmHg when the regimen is tolerated. Weight reduction produces the largest "
        "lifestyle effect, with dietary sodium restriction adding further benefit. "
        "Antihypertensive treatment is usually continued long-term; dose reductions are "
        "gradual and supervised. Patients starting an ACE inhibitor need baseline renal "
        "function and potassium, repeated within two weeks of initiation or titration."
    ),
}

_QUERY_TEXT = "What blood pressure target should most adults with hypertension aim for?"

_DETAILED_STEPS = (
    "Step 1: Compare each answer against the reference for factual alignment.",
    "Step 2: Check dosing, monitoring, and follow-up advice against retrieved guidance.",
    "Step 3: Weigh clarity and completeness from the patient's point of view.",
)
_TERSE_STEPS = (
    "Step 1: Quick agreement check.",
    "Step 2: Rank answers by overlap.",
)


def _clamp(value: int) -> int:
    return max(1, min(5, value))


def _evaluation_text(scores: dict[int, int], detailed: bool) -> str:
    steps = _DETAILED_STEPS if detailed else _TERSE_STEPS
    entries = " ".join(
        f"Doctor {i + 1}: {scores[i]} point{'s' if scores[i] != 1 else ''}."
        for i in sorted(scores)
    )
    return "Analyze: " + " ".join(steps) + "\nScore: " + entries


def _draw_scores(rng: random.Random, n: int) -> dict[int, int]:
    """Per-doctor 1..5 scores; first and last differ so that reversing the
    assignment always changes the ranking."""
    while True:
        scores = {i: rng.randint(1, 5) for i in range(n)}
        if scores[0] != scores[n - 1]:
            return scores


def _reversed_scores(scores: dict[int, int]) -> dict[int, int]:
    n = len(scores)
    return {i: scores[n - 1 - i] for i in range(n)}


def run_demo(
    seed: int, out_dir: str | Path, config: PipelineConfig | None = None
) -> dict[str, Any]:
    """Run the whole pipeline into out_dir and return a summary."""
    config = config or PipelineConfig()
    rng = random.Random(seed)
    out = Path(out_dir)
    inputs = out / "inputs"
    work = out / "work"
    for sub in (inputs, work):
        sub.mkdir(parents=True, exist_ok=True)

    # Inputs: corpus with inline responses, filter rules, knowledge documents.
    corpus_path = inputs / "corpus.jsonl"
    write_jsonl(
        corpus_path,
        [
            {
                "question": q,
                "answer": a,
                "responses": dict(zip(RESPONDERS, texts)),
            }
            for q, a, texts in _CORPUS
        ],
    )
    rules_path = inputs / "rules.txt"
    rules_path.write_text("# drop meta requests about rewording\nrephras\n", encoding="utf-8")
    docs_dir = inputs / "docs"
    docs_dir.mkdir(exist_ok=True)
    for name, text in _DOCS.items():
        (docs_dir / name).write_text(text + "\n", encoding="utf-8")

    # Ingest: filter and assemble cases.
    pairs, rejects = load_qa(corpus_path)
    kept, report = apply_filter(pairs, load_rules(rules_path), rejects)
    cases = assemble_cases(kept)
    write_jsonl(work / "cases.jsonl", cases)
    write_json(
        work / "ingest_report.json",
        report.to_dict()
        | {"provenance": provenance_record(seed, config, {"corpus": corpus_path, "rules": rules_path})},
    )

    # Knowledge store.
    # Word windows sized for the short bundled documents.
    embedder = HashEmbedder(config.embed_dim)
    index = build_store(docs_dir, work / "store", embedder, window=40, overlap=8)
    write_json(
        work / "store" / "provenance.json",
        provenance_record(seed, config, {"docs": docs_dir}),
    )

    # Synthesis with a scripted evaluator; the first case asks for knowledge.
    score_sets = [_draw_scores(rng, len(case.responses)) for case in cases]
    detailed = [i % 2 == 0 for i in range(len(cases))]
    evaluator_replies = []
    for i, scores in enumerate(score_sets):
        if i == 0:
            evaluator_replies.append(f"[Question] {_QUERY_TEXT}")
        evaluator_replies.append(_evaluation_text(scores, detailed[i]))
    chain_config = ChainConfig(max_rounds=config.chain_max_rounds, top_k=config.chain_top_k)
    gateway = scripted_gateway({Role.EVALUATOR: evaluator_replies})
    records, traces, failures = synthesize_records(cases, index, gateway, chain_config)
    if failures:
        raise MedevalError(f"scripted synthesis failed for {failures}")
    write_jsonl(work / "instructions.jsonl", records)
    traces_dir = work / "traces"
    traces_dir.mkdir(exist_ok=True)
    for trace in traces:
        write_json(traces_dir / f"{trace.case_id}.json", trace.to_dict())

    # Quality classification, trained on labels that follow the evaluation
    # style (detailed analyses labeled High).
    labels = {
        record.record_id: Quality.HIGH if detailed[i] else Quality.LOW
        for i, record in enumerate(records)
    }
    write_jsonl(
        inputs / "labels.jsonl",
        [{"record_id": rid, "quality": q.value} for rid, q in sorted(labels.items())],
    )
    labeled = [(record, labels[record.record_id]) for record in records]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowSeparability)
        clf = train(labeled, embedder, config.c_grid, seed)
    save_classifier(clf, work / "clf.json")
    classified = classify(clf, records, embedder)
    write_jsonl(work / "classified.jsonl", classified)
    high, low = split_by_quality(classified)

    # Verification replay through the review store with a deterministic clock.
    ticks = count(0)
    store = ReviewStore(out / "review", clock=lambda: float(next(ticks)) * 60.0)
    verified = []
    for i, record in enumerate(classified):
        item_id = store.enqueue(
            ItemKind.VERIFICATION,
            {
                "record_id": record.record_id,
                "case": record.case.to_dict(),
                "evaluation": record.evaluation.to_dict(),
            },
        )
        store.claim(item_id, REVIEWER)
        if i == 3:
            criteria = (True, False, True)
        elif i == 7:
            criteria = (False, True, True)
        else:
            criteria = (True, True, True)
        state = store.submit_verification(item_id, criteria, REVIEWER)
        verified.append(record.with_verification(state))
    write_jsonl(work / "verified.jsonl", verified)
    approved = [
        r for r in verified if r.verification.status is VerificationStatus.APPROVED
    ]
    write_jsonl(work / "approved.jsonl", approved)
    write_json(work / "verification_stats.json", store.verification_stats())

    # Curriculum over the approved pool.
    high_approved, low_approved = split_by_quality(approved)
    n1 = min(2, len(low_approved))
    n3 = min(2, len(high_approved))
    the_plan = plan(high_approved, low_approved, n1, n3, seed)
    manifest = export_manifests(the_plan, approved, out / "plans")
    write_json(
        out / "plans" / "provenance.json",
        provenance_record(seed, config, {"records": work / "approved.jsonl"}),
    )

    # Introspection: two records come back mis-ranked; one suggestion is
    # judge-accepted, the other is rejected three times and goes to the jury.
    mismatch_positions = (1, 4)
    introspect_replies = []
    for pos, record in enumerate(approved):
        if pos in mismatch_positions:
            introspect_replies.append(
                _evaluation_text(_reversed_scores(record.evaluation.scores), detailed=False)
            )
        else:
            introspect_replies.append(record.evaluation.raw_text)
    suggester_replies = [
        "Swap the top two scores back: the guideline-aligned answer cites the correct "
        "monitoring interval and should rank first.",
        "Score the reference-matching answer highest; the reversal contradicts the cited guidance.",
        "The current ordering rewards the answer that contradicts the retrieved text; restore the original ranking.",
        "Rank the answer quoting the correct threshold above the generic one.",
    ]
    judge_replies = [
        "ACCEPT: the revision restores agreement with the retrieved guidance.",
        "REJECT: the proposed scores contradict the reference answer.",
        "REJECT: still inconsistent with the retrieved dosing guidance.",
        "REJECT: no supporting evidence for the proposed ordering.",
    ]
    introspect_gateway = scripted_gateway(
        {
            Role.EVALUATOR: introspect_replies,
            Role.SUGGESTER: suggester_replies,
            Role.JUDGE: judge_replies,
        }
    )
    introspect_dir = out / "introspect"
    queue = JuryQueue(introspect_dir / "queue")
    state_path = introspect_dir / "state.json"
    state = IntrospectionState(iteration=1, records=tuple(approved))
    try:
        result = run_iteration(
            state,
            index,
            introspect_gateway,
            queue,
            introspect_dir / "refresh",
            config=chain_config,
            top_k=config.introspection_top_k,
        )
    except OpenJuryTickets as exc:
        assert exc.state is not None
        exc.state.save(state_path)
        for ticket_id in exc.ticket_ids:
            queue.submit_verdict(
                ticket_id,
                JuryVerdict(
                    accept=True,
                    text=(
                        "Restore the original ranking and add one point to the answer that "
                        "quotes the guideline threshold verbatim."
                    ),
                    juror_id=JUROR,
                ),
            )
        result = run_iteration(
            exc.state,
            index,
            introspect_gateway,
            queue,
            introspect_dir / "refresh",
            config=chain_config,
            top_k=config.introspection_top_k,
        )
    result.state.save(state_path)
    write_json(
        introspect_dir / "provenance.json",
        provenance_record(seed, config, {"records": work / "approved.jsonl"}),
    )

    # Human annotations and the agreement report.
    annotations = []
    for record in classified:
        base_scores = record.evaluation.scores
        for annotator in ("ann-1", "ann-2"):
            response_scores = {}
            for idx in sorted(base_scores):
                base = base_scores[idx]
                response_scores[idx] = tuple(
                    _clamp(base + rng.choice((-1, 0, 0, 1))) for _ in range(3)
                )
            annotations.append(
                HumanAnnotation(
                    case_id=record.record_id,
                    annotator_id=annotator,
                    response_scores=response_scores,
                )
            )
    write_jsonl(inputs / "annotations.jsonl", annotations)
    scored = join_scored_cases(classified, annotations)
    _keys, _annotators, matrix = annotation_matrix(annotations)
    full_rows = complete_rows(matrix)
    metric_report = build_report(
        scored,
        ratings=full_rows if len(full_rows) >= 2 else None,
        alpha_ratings=matrix,
        t_test_pair=paired_model_columns(scored, MODEL_PAIR),
        model_pairs=[MODEL_PAIR],
        tie_mode=config.tie_mode,
    )
    report_dir = out / "report"
    report_dir.mkdir(exist_ok=True)
    write_json(
        report_dir / "report.json",
        metric_report.to_dict()
        | {
            "provenance": provenance_record(
                seed,
                config,
                {
                    "records": work / "classified.jsonl",
                    "annotations": inputs / "annotations.jsonl",
                },
            )
        },
    )
    write_win_tie_csv(metric_report.win_tie, report_dir / "tables.csv")

    # Growth-curve fit over a bundled accuracy-by-iteration series (percent).
    iters_path = inputs / "iters.csv"
    with iters_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "accuracy"])
        for t in range(0, 7):
            writer.writerow([t, round(100.0 * sigmoid_power(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, t), 2)])
    points = load_points_csv(iters_path)
    amplitude = fit_amplitude(points)
    pts = tuple(normalize_points(points))
    fit = SigmoidFit(
        a=amplitude,
        b=B_DEFAULT,
        c=C_DEFAULT,
        rss=rss(amplitude, B_DEFAULT, C_DEFAULT, pts),
        points=pts,
    )
    forecast = forecast_plateau(fit, horizon=10)
    fit_dir = out / "fit"
    fit_dir.mkdir(exist_ok=True)
    write_json(
        fit_dir / "fit.json",
        {
            "mode": "fixed",
            "fit": fit.to_dict(),
            "forecast": forecast.to_dict(),
            "provenance": provenance_record(seed, config, {"points": iters_path}),
        },
    )

    summary = {
        "corpus": len(_CORPUS),
        "filtered_out": report.filtered_out,
        "cases": len(cases),
        "records": len(records),
        "high": len(high),
        "low": len(low),
        "approved": len(approved),
        "rejected": len(verified) - len(approved),
        "curriculum_counts": manifest["counts"],
        "incorrect": len(result.state.incorrect),
        "patched": list(result.patched_ids),
        "report_cases": metric_report.n_cases,
        "fit_amplitude": round(fit.a, 4),
    }
    write_json(out / "summary.json", summary)
    return summary
