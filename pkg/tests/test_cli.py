"""CLI and config tests: subcommand wiring, exit codes, provenance, demo."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from medeval.cli import (
    EXIT_ERROR,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_WAITING,
    run_command,
)
from medeval.config import ConfigError, gateway_from_config, load_config
from medeval.gateway import Role, scripted_gateway
from medeval.growth import B_DEFAULT, C_DEFAULT, PUBLISHED_AMPLITUDE, sigmoid_power
from medeval.jury import JuryQueue, JuryVerdict
from medeval.model import (
    HumanAnnotation,
    InstructionRecord,
    Quality,
    read_jsonl,
    sha256_file,
    write_jsonl,
)
from conftest import make_record

pytestmark = pytest.mark.usefixtures("clean_env")


@pytest.fixture
def clean_env(monkeypatch):
    for role in Role:
        monkeypatch.delenv(f"MEDEVAL_{role.value.upper()}_ENDPOINT", raising=False)
        monkeypatch.delenv(f"MEDEVAL_{role.value.upper()}_TOKEN", raising=False)


def last_json(text: str) -> dict | None:
    for line in reversed(text.strip().splitlines()):
        line = line.strip()
        if line.startswith("{"):
            return json.loads(line)
    return None


def run_cli(argv: list[str], capsys) -> tuple[int, dict | None, dict | None]:
    code = run_command(argv)
    captured = capsys.readouterr()
    return code, last_json(captured.out), last_json(captured.err)


CORPUS = [
    {
        "question": "Which inhaler gives quick relief in an asthma attack?",
        "answer": "A short-acting beta-agonist such as salbutamol.",
        "responses": {
            "model-1": "Use the steroid inhaler whenever wheezy.",
            "model-2": "A short-acting beta-agonist like salbutamol.",
            "model-3": "Salbutamol as needed relieves acute symptoms.",
        },
    },
    {
        "question": "Please rephrase my earlier inhaler question.",
        "answer": "Rephrased: which inhaler treats sudden asthma symptoms?",
        "responses": {
            "model-1": "Here it is in other words.",
            "model-2": "You asked which inhaler to use in an attack.",
            "model-3": "Restated: what reliever should be used?",
        },
    },
    {
        "question": "What is the first-line drug for type 2 diabetes?",
        "answer": "Metformin with lifestyle modification unless contraindicated.",
        "responses": {
            "model-1": "Start insulin right away.",
            "model-2": "Metformin plus structured lifestyle change.",
            "model-3": "Metformin with diet and exercise.",
        },
    },
    {
        "question": "How is conscious hypoglycaemia treated?",
        "answer": "15 to 20 g of fast-acting carbohydrate, recheck in 15 minutes.",
        "responses": {
            "model-1": "Give a correction dose of insulin.",
            "model-2": "Quick-acting carbohydrate, recheck in 15 minutes.",
            "model-3": "Oral fast-acting glucose, then recheck.",
        },
    },
]

DOCS = {
    "asthma.txt": (
        "Short-acting beta-agonists such as salbutamol give quick relief of acute "
        "asthma symptoms while inhaled corticosteroids control persistent disease."
    ),
    "diabetes.txt": (
        "Metformin with lifestyle modification is first-line for type 2 diabetes. "
        "Conscious hypoglycaemia needs 15 to 20 grams of fast-acting carbohydrate "
        "with a glucose recheck after 15 minutes."
    ),
}


def eval_text(scores: dict[int, int]) -> str:
    entries = " ".join(
        f"Doctor {i + 1}: {scores[i]} point{'s' if scores[i] != 1 else ''}."
        for i in sorted(scores)
    )
    return "Analyze: Step 1: Compare each answer with the reference. Score: " + entries


@pytest.fixture
def workspace(tmp_path) -> Path:
    corpus = tmp_path / "corpus.jsonl"
    write_jsonl(corpus, CORPUS)
    rules = tmp_path / "rules.txt"
    rules.write_text("# meta requests\nrephras\n", encoding="utf-8")
    docs = tmp_path / "docs"
    docs.mkdir()
    for name, text in DOCS.items():
        (docs / name).write_text(text + "\n", encoding="utf-8")
    return tmp_path


def ingest(workspace: Path, capsys) -> Path:
    cases = workspace / "cases.jsonl"
    code, _, _ = run_cli(
        [
            "ingest",
            "--in",
            str(workspace / "corpus.jsonl"),
            "--rules",
            str(workspace / "rules.txt"),
            "--out",
            str(cases),
            "--report",
            str(workspace / "report.json"),
        ],
        capsys,
    )
    assert code == EXIT_OK
    return cases


def build_db(workspace: Path, capsys) -> Path:
    store = workspace / "store"
    code, _, _ = run_cli(
        [
            "build-db",
            "--docs",
            str(workspace / "docs"),
            "--out",
            str(store),
            "--window",
            "8",
            "--overlap",
            "2",
            "--dim",
            "64",
        ],
        capsys,
    )
    assert code == EXIT_OK
    return store


def script_gateway_factory(monkeypatch, scripts: dict[Role, list[str]]) -> None:
    monkeypatch.setattr(
        "medeval.cli.gateway_from_config",
        lambda config, required: scripted_gateway({role: list(lines) for role, lines in scripts.items()}),
    )


# --- exit codes and error shapes ---


def test_unknown_command_is_usage_error(capsys) -> None:
    code, out, err = run_cli(["frobnicate"], capsys)
    assert code == EXIT_USAGE
    assert err["error"] == "UsageError"


def test_missing_required_argument_is_usage_error(capsys) -> None:
    code, _, err = run_cli(["ingest"], capsys)
    assert code == EXIT_USAGE
    assert err["error"] == "UsageError"


def test_missing_input_file_maps_to_exit_1(tmp_path, capsys) -> None:
    code, _, err = run_cli(
        ["ingest", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o"), "--report", str(tmp_path / "r")],
        capsys,
    )
    assert code == EXIT_ERROR
    assert err["error"] == "FileNotFound"


def test_version_flag(capsys) -> None:
    with pytest.raises(SystemExit):
        run_command(["--version"])
    assert capsys.readouterr().out.startswith("medeval ")


# --- ingest ---


def test_ingest_filters_and_reports(workspace, capsys) -> None:
    cases_path = workspace / "cases.jsonl"
    code, out, _ = run_cli(
        [
            "ingest",
            "--in",
            str(workspace / "corpus.jsonl"),
            "--rules",
            str(workspace / "rules.txt"),
            "--out",
            str(cases_path),
            "--report",
            str(workspace / "report.json"),
            "--seed",
            "3",
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out == {"command": "ingest", "cases": 3, "filtered_out": 1}
    assert len(list(read_jsonl(cases_path))) == 3

    report = json.loads((workspace / "report.json").read_text(encoding="utf-8"))
    assert report["filtered_out"] == 1
    prov = report["provenance"]
    assert prov["tool"] == "medeval"
    assert prov["seed"] == 3
    assert prov["inputs"]["corpus"] == sha256_file(workspace / "corpus.jsonl")
    assert prov["inputs"]["rules"] == sha256_file(workspace / "rules.txt")


def test_ingest_merges_response_files(workspace, capsys) -> None:
    bare = [{"question": row["question"], "answer": row["answer"]} for row in CORPUS[:1]]
    corpus = workspace / "bare.jsonl"
    write_jsonl(corpus, bare)
    m1 = workspace / "m1.jsonl"
    m2 = workspace / "m2.jsonl"
    write_jsonl(m1, ["Answer from the first responder."])
    write_jsonl(m2, [{"text": "Answer from the second responder."}])

    out_path = workspace / "merged.jsonl"
    code, out, _ = run_cli(
        [
            "ingest",
            "--in",
            str(corpus),
            "--out",
            str(out_path),
            "--report",
            str(workspace / "merged_report.json"),
            "--responses",
            f"m1={m1}",
            "--responses",
            f"m2={m2}",
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["cases"] == 1
    (case,) = read_jsonl(out_path)
    assert [r["model_label"] for r in case["responses"]] == ["m1", "m2"]


def test_ingest_bad_responses_format_is_usage_error(workspace, capsys) -> None:
    code, _, err = run_cli(
        [
            "ingest",
            "--in",
            str(workspace / "corpus.jsonl"),
            "--out",
            str(workspace / "o.jsonl"),
            "--report",
            str(workspace / "r.json"),
            "--responses",
            "no-separator",
        ],
        capsys,
    )
    assert code == EXIT_USAGE
    assert "LABEL=PATH" in err["message"]


# --- build-db ---


def test_build_db_writes_store_and_provenance(workspace, capsys) -> None:
    store = workspace / "store"
    code, out, _ = run_cli(
        ["build-db", "--docs", str(workspace / "docs"), "--out", str(store), "--window", "8", "--overlap", "2", "--dim", "64"],
        capsys,
    )
    assert code == EXIT_OK
    assert out["command"] == "build-db"
    assert out["chunks"] > 0
    assert out["window"] == 8
    for name in ("chunks.jsonl", "embeddings.f32", "meta.json", "provenance.json"):
        assert (store / name).exists()
    prov = json.loads((store / "provenance.json").read_text(encoding="utf-8"))
    assert set(prov["inputs"]) == {"docs/asthma.txt", "docs/diabetes.txt"}


# --- synthesize ---


def test_synthesize_runs_chain_over_cases(workspace, capsys, monkeypatch) -> None:
    cases = ingest(workspace, capsys)
    store = build_db(workspace, capsys)
    replies = [
        "[Question] asthma reliever inhaler",
        eval_text({0: 2, 1: 5, 2: 4}),
        eval_text({0: 1, 1: 5, 2: 4}),
        eval_text({0: 2, 1: 5, 2: 4}),
    ]
    script_gateway_factory(monkeypatch, {Role.EVALUATOR: replies})

    out_path = workspace / "instructions.jsonl"
    traces_dir = workspace / "traces"
    code, out, _ = run_cli(
        [
            "synthesize",
            "--cases",
            str(cases),
            "--store",
            str(store),
            "--out",
            str(out_path),
            "--traces",
            str(traces_dir),
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["records"] == 3
    assert out["failures"] == []
    assert out["calls"] == 4

    records = list(read_jsonl(out_path, InstructionRecord))
    assert len(records) == 3
    assert records[0].evaluation.scores == {0: 2, 1: 5, 2: 4}

    traces = [
        json.loads(p.read_text(encoding="utf-8")) for p in sorted(traces_dir.glob("*.json"))
    ]
    assert len(traces) == 3
    assert sum(t["n_retrievals"] for t in traces) == 1
    (querying,) = [t for t in traces if t["n_retrievals"] == 1]
    assert querying["rounds"][0]["retrieved"]

    sidecar = workspace / "instructions.provenance.json"
    prov = json.loads(sidecar.read_text(encoding="utf-8"))
    assert prov["inputs"]["cases"] == sha256_file(cases)
    assert "store/meta.json" in prov["inputs"]


def test_synthesize_without_backend_names_missing_role(workspace, capsys) -> None:
    cases = ingest(workspace, capsys)
    store = build_db(workspace, capsys)
    code, _, err = run_cli(
        ["synthesize", "--cases", str(cases), "--store", str(store), "--out", str(workspace / "x.jsonl")],
        capsys,
    )
    assert code == EXIT_ERROR
    assert err["error"] == "ConfigError"
    assert "evaluator" in err["message"]


# --- classify ---


HIGH_TAGS = [f"thorough stepwise rationale citing guideline evidence {i}" for i in range(4)]
LOW_TAGS = [f"vague terse unsupported assertion {i}" for i in range(4)]


def styled_record_file(path: Path) -> list[InstructionRecord]:
    records = [make_record(tag=tag) for tag in HIGH_TAGS + LOW_TAGS]
    write_jsonl(path, records)
    return records


def test_classify_trains_applies_and_reloads(workspace, capsys) -> None:
    records_path = workspace / "records.jsonl"
    records = styled_record_file(records_path)
    labels_path = workspace / "labels.jsonl"
    write_jsonl(
        labels_path,
        [
            {"record_id": r.record_id, "quality": (Quality.HIGH if i < 4 else Quality.LOW).value}
            for i, r in enumerate(records)
        ],
    )
    model_path = workspace / "clf.json"
    out_path = workspace / "classified.jsonl"
    code, out, _ = run_cli(
        [
            "classify",
            "--in",
            str(records_path),
            "--model",
            str(model_path),
            "--out",
            str(out_path),
            "--train",
            str(labels_path),
            "--dim",
            "128",
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["high"] == 4
    assert out["low"] == 4
    assert out["val_accuracy"] == 1.0
    assert "c_value" in out

    classified = list(read_jsonl(out_path, InstructionRecord))
    by_id = {r.record_id: r.quality for r in classified}
    for i, record in enumerate(records):
        assert by_id[record.record_id] is (Quality.HIGH if i < 4 else Quality.LOW)

    # Reload the saved model and classify without training.
    out2 = workspace / "classified2.jsonl"
    code, summary, _ = run_cli(
        ["classify", "--in", str(records_path), "--model", str(model_path), "--out", str(out2), "--dim", "128"],
        capsys,
    )
    assert code == EXIT_OK
    assert summary == {"command": "classify", "high": 4, "low": 4}
    assert (workspace / "classified2.provenance.json").exists()


def test_classify_unknown_label_id_fails(workspace, capsys) -> None:
    records_path = workspace / "records.jsonl"
    styled_record_file(records_path)
    labels_path = workspace / "labels.jsonl"
    write_jsonl(labels_path, [{"record_id": "id-ghost", "quality": "High"}])
    code, _, err = run_cli(
        [
            "classify",
            "--in",
            str(records_path),
            "--model",
            str(workspace / "clf.json"),
            "--out",
            str(workspace / "c.jsonl"),
            "--train",
            str(labels_path),
        ],
        capsys,
    )
    assert code == EXIT_ERROR
    assert "id-ghost" in err["message"]


# --- curriculum ---


def approved_record_file(path: Path) -> list[InstructionRecord]:
    records = [
        make_record(tag=f"high {i}", quality=Quality.HIGH, approved=True) for i in range(4)
    ] + [make_record(tag=f"low {i}", quality=Quality.LOW, approved=True) for i in range(4)]
    write_jsonl(path, records)
    return records


def test_curriculum_exports_stages(workspace, capsys) -> None:
    records_path = workspace / "approved.jsonl"
    approved_record_file(records_path)
    out_dir = workspace / "plans"
    code, out, _ = run_cli(
        ["curriculum", "--in", str(records_path), "--n1", "2", "--n3", "2", "--out", str(out_dir), "--seed", "11"],
        capsys,
    )
    assert code == EXIT_OK
    assert out == {"command": "curriculum", "counts": [2, 4, 2], "seed": 11}
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["counts"] == [2, 4, 2]
    assert manifest["seed"] == 11
    for name in ("stage1.jsonl", "stage2.jsonl", "stage3.jsonl", "plan.json", "provenance.json"):
        assert (out_dir / name).exists()
    stage1 = list(read_jsonl(out_dir / "stage1.jsonl"))
    assert len(stage1) == 2
    assert set(stage1[0]) == {"record_id", "prompt", "target"}


def test_curriculum_oversample_fails(workspace, capsys) -> None:
    records_path = workspace / "approved.jsonl"
    approved_record_file(records_path)
    code, _, err = run_cli(
        ["curriculum", "--in", str(records_path), "--n1", "9", "--n3", "2", "--out", str(workspace / "p")],
        capsys,
    )
    assert code == EXIT_ERROR
    assert err["error"] == "SampleTooLarge"


# --- introspect ---


def introspect_records(path: Path) -> list[InstructionRecord]:
    records = [
        make_record(tag="stable one", scores={0: 5, 1: 3, 2: 1}, approved=True),
        make_record(tag="flipped two", scores={0: 5, 1: 3, 2: 1}, approved=True),
    ]
    write_jsonl(path, records)
    return records


def reversed_eval(record: InstructionRecord) -> str:
    scores = record.evaluation.scores
    n = len(scores)
    return eval_text({i: scores[n - 1 - i] for i in range(n)})


def test_introspect_accept_flow_patches_record(workspace, capsys, monkeypatch) -> None:
    store = build_db(workspace, capsys)
    records_path = workspace / "records.jsonl"
    records = introspect_records(records_path)
    script_gateway_factory(
        monkeypatch,
        {
            Role.EVALUATOR: [records[0].evaluation.raw_text, reversed_eval(records[1])],
            Role.SUGGESTER: ["Restore the original ranking; it matches the reference."],
            Role.JUDGE: ["ACCEPT: the revision matches the retrieved guidance."],
        },
    )
    state_path = workspace / "state.json"
    code, out, _ = run_cli(
        [
            "introspect",
            "--records",
            str(records_path),
            "--store",
            str(store),
            "--state",
            str(state_path),
            "--out",
            str(workspace / "refresh"),
            "--queue-dir",
            str(workspace / "queue"),
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["incorrect"] == 1
    assert out["patched"] == [records[1].record_id]
    assert out["next_iteration"] == 2
    assert state_path.exists()
    manifest = json.loads((workspace / "refresh" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["counts"] == [1]


def test_introspect_jury_wait_and_resume(workspace, capsys, monkeypatch) -> None:
    store = build_db(workspace, capsys)
    records_path = workspace / "records.jsonl"
    records = introspect_records(records_path)
    script_gateway_factory(
        monkeypatch,
        {
            Role.EVALUATOR: [records[0].evaluation.raw_text, reversed_eval(records[1])],
            Role.SUGGESTER: [
                "Swap the scores back to match the reference.",
                "Score the reference-matching answer highest.",
                "Restore the original order.",
            ],
            Role.JUDGE: [
                "REJECT: unsupported.",
                "REJECT: still unsupported.",
                "REJECT: no evidence.",
            ],
        },
    )
    state_path = workspace / "state.json"
    queue_dir = workspace / "queue"
    argv = [
        "introspect",
        "--records",
        str(records_path),
        "--store",
        str(store),
        "--state",
        str(state_path),
        "--out",
        str(workspace / "refresh"),
        "--queue-dir",
        str(queue_dir),
    ]
    code, _, err = run_cli(argv, capsys)
    assert code == EXIT_WAITING
    assert err["error"] == "OpenJuryTickets"
    assert len(err["tickets"]) == 1
    assert state_path.exists()

    queue = JuryQueue(queue_dir)
    queue.submit_verdict(
        err["tickets"][0],
        JuryVerdict(accept=True, text="Restore the original ranking.", juror_id="juror-1"),
    )
    # Resume consumes the saved state and verdict without new model calls.
    script_gateway_factory(monkeypatch, {})
    code, out, _ = run_cli(argv, capsys)
    assert code == EXIT_OK
    assert out["patched"] == [records[1].record_id]
    assert out["next_iteration"] == 2


def test_introspect_skip_jury_leaves_ticket_open(workspace, capsys, monkeypatch) -> None:
    store = build_db(workspace, capsys)
    records_path = workspace / "records.jsonl"
    records = introspect_records(records_path)
    script_gateway_factory(
        monkeypatch,
        {
            Role.EVALUATOR: [records[0].evaluation.raw_text, reversed_eval(records[1])],
            Role.SUGGESTER: ["One.", "Two.", "Three."],
            Role.JUDGE: ["REJECT: a.", "REJECT: b.", "REJECT: c."],
        },
    )
    queue_dir = workspace / "queue"
    code, out, _ = run_cli(
        [
            "introspect",
            "--records",
            str(records_path),
            "--store",
            str(store),
            "--state",
            str(workspace / "state.json"),
            "--out",
            str(workspace / "refresh"),
            "--queue-dir",
            str(queue_dir),
            "--skip-jury",
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["patched"] == []
    assert len(JuryQueue(queue_dir).open_tickets()) == 1


# --- evaluate ---


def test_evaluate_scored_cases_with_tables(workspace, capsys) -> None:
    cases = [
        {
            "case_id": f"c{i}",
            "model_scores": {"0": 5 - i % 2, "1": 3, "2": 1 + i % 2},
            "human_scores": {"0": 4.5 - i % 2, "1": 3.0, "2": 1.0 + i % 2},
            "model_labels": {"0": "model-1", "1": "model-2", "2": "model-3"},
        }
        for i in range(4)
    ]
    scores_path = workspace / "scored.jsonl"
    write_jsonl(scores_path, cases)
    out_path = workspace / "report.json"
    tables_path = workspace / "tables.csv"
    code, out, _ = run_cli(
        [
            "evaluate",
            "--scores",
            str(scores_path),
            "--out",
            str(out_path),
            "--tables",
            str(tables_path),
            "--pairs",
            "model-1:model-3",
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["n_cases"] == 4
    assert out["acc_2tuple"] == 1.0
    report = json.loads(out_path.read_text(encoding="utf-8"))
    assert report["acc_triple"] == 1.0
    assert len(report["win_tie"]) == 1
    assert tables_path.exists()


def test_evaluate_joins_records_with_annotations(workspace, capsys) -> None:
    records = [make_record(tag=f"joined {i}", scores={0: 5, 1: 3, 2: 1}) for i in range(3)]
    records_path = workspace / "records.jsonl"
    write_jsonl(records_path, records)
    annotations = []
    for record in records:
        for annotator in ("ann-1", "ann-2"):
            annotations.append(
                HumanAnnotation(
                    case_id=record.record_id,
                    annotator_id=annotator,
                    response_scores={0: (5, 5, 5), 1: (3, 3, 3), 2: (1, 2, 1)},
                )
            )
    ann_path = workspace / "annotations.jsonl"
    write_jsonl(ann_path, annotations)
    out_path = workspace / "report.json"
    code, out, _ = run_cli(
        ["evaluate", "--scores", str(records_path), "--annotations", str(ann_path), "--out", str(out_path)],
        capsys,
    )
    assert code == EXIT_OK
    assert out["n_cases"] == 3
    report = json.loads(out_path.read_text(encoding="utf-8"))
    assert report["krippendorff_alpha"] is not None
    assert report["icc"] is not None


def test_evaluate_records_without_annotations_fail(workspace, capsys) -> None:
    records_path = workspace / "records.jsonl"
    write_jsonl(records_path, [make_record(tag="lonely")])
    code, _, err = run_cli(
        ["evaluate", "--scores", str(records_path), "--out", str(workspace / "r.json")], capsys
    )
    assert code == EXIT_ERROR
    assert "--annotations" in err["message"]


def test_evaluate_bad_pair_format_is_usage_error(workspace, capsys) -> None:
    code, _, err = run_cli(
        ["evaluate", "--scores", "x.jsonl", "--out", "r.json", "--pairs", "nocolon"], capsys
    )
    assert code == EXIT_USAGE
    assert "LABEL_A:LABEL_B" in err["message"]


# --- fit ---


def growth_csv(path: Path) -> None:
    rows = ["iteration,accuracy"]
    for t in range(7):
        rows.append(f"{t},{100.0 * sigmoid_power(PUBLISHED_AMPLITUDE, B_DEFAULT, C_DEFAULT, t):.4f}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def test_fit_fixed_mode_recovers_amplitude(workspace, capsys) -> None:
    points = workspace / "iters.csv"
    growth_csv(points)
    out_path = workspace / "fit.json"
    code, out, _ = run_cli(
        ["fit", "--points", str(points), "--out", str(out_path), "--horizon", "6"], capsys
    )
    assert code == EXIT_OK
    assert out["a"] == pytest.approx(PUBLISHED_AMPLITUDE, abs=1e-3)
    assert out["b"] == B_DEFAULT
    payload = json.loads(out_path.read_text(encoding="utf-8"))
    assert payload["mode"] == "fixed"
    assert len(payload["forecast"]["values"]) == 6
    assert payload["provenance"]["inputs"]["points"] == sha256_file(points)


def test_fit_full_mode_runs(workspace, capsys) -> None:
    points = workspace / "iters.csv"
    growth_csv(points)
    code, out, _ = run_cli(
        ["fit", "--points", str(points), "--mode", "full", "--out", str(workspace / "f.json")],
        capsys,
    )
    assert code == EXIT_OK
    assert out["rss"] < 1e-4


def test_fit_missing_csv_is_exit_1(workspace, capsys) -> None:
    code, _, err = run_cli(
        ["fit", "--points", str(workspace / "nope.csv"), "--out", str(workspace / "f.json")],
        capsys,
    )
    assert code == EXIT_ERROR
    assert err["error"] == "FileNotFound"


# --- demo ---


def test_demo_runs_and_is_deterministic(tmp_path, capsys) -> None:
    first = tmp_path / "d1"
    second = tmp_path / "d2"
    code, summary, _ = run_cli(["demo", "--out", str(first), "--seed", "7"], capsys)
    assert code == EXIT_OK
    assert summary["command"] == "demo"
    assert summary["cases"] == 10
    assert summary["filtered_out"] == 2
    assert summary["high"] == 5
    assert summary["low"] == 5
    assert summary["approved"] == 8
    assert summary["curriculum_counts"] == [2, 4, 2]
    assert summary["incorrect"] == 2
    assert len(summary["patched"]) == 2
    assert summary["fit_amplitude"] == pytest.approx(PUBLISHED_AMPLITUDE, abs=1e-3)

    code, _, _ = run_cli(["demo", "--out", str(second), "--seed", "7"], capsys)
    assert code == EXIT_OK
    first_files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    second_files = sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    assert first_files == second_files
    for rel in first_files:
        assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel


def test_demo_seed_changes_outputs(tmp_path, capsys) -> None:
    # Summary counts can coincide across seeds; the drawn scores cannot.
    code, _, _ = run_cli(["demo", "--out", str(tmp_path / "a"), "--seed", "7"], capsys)
    assert code == EXIT_OK
    code, _, _ = run_cli(["demo", "--out", str(tmp_path / "b"), "--seed", "9"], capsys)
    assert code == EXIT_OK
    seven = (tmp_path / "a" / "work" / "instructions.jsonl").read_bytes()
    nine = (tmp_path / "b" / "work" / "instructions.jsonl").read_bytes()
    assert seven != nine


# --- config ---


def test_load_config_defaults(tmp_path) -> None:
    config = load_config(None)
    assert config.seed == 0
    assert config.chain_max_rounds == 5
    assert config.backends == {}
    assert config.tie_mode == "include"


def test_load_config_reads_sections(tmp_path) -> None:
    path = tmp_path / "medeval.ini"
    path.write_text(
        "[pipeline]\nseed = 5\n"
        "[chain]\nmax_rounds = 2\nmarker = loose\n"
        "[knowledge]\nwindow = 60\noverlap = 10\ndim = 32\n"
        "[curriculum]\nn1 = 3\nn3 = 4\n"
        "[metrics]\ntie_mode = strict\n"
        "[backend.evaluator]\nendpoint = http://eval.local/v1\nmodel = eval-model\ntoken_env = EVAL_KEY\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.seed == 5
    assert config.chain_max_rounds == 2
    assert config.chain_marker.value == "loose"
    assert config.window == 60
    assert config.embed_dim == 32
    assert config.n1 == 3
    assert config.tie_mode == "strict"
    backend = config.backends[Role.EVALUATOR]
    assert backend.endpoint == "http://eval.local/v1"
    assert backend.model == "eval-model"
    assert backend.token_env == "EVAL_KEY"


def test_config_unknown_section_named(tmp_path) -> None:
    path = tmp_path / "bad.ini"
    path.write_text("[wizardry]\nx = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="wizardry"):
        load_config(path)


def test_config_unknown_key_named(tmp_path) -> None:
    path = tmp_path / "bad.ini"
    path.write_text("[chain]\nbogus_key = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="bogus_key"):
        load_config(path)


def test_config_unknown_backend_key_named(tmp_path) -> None:
    path = tmp_path / "bad.ini"
    path.write_text("[backend.evaluator]\nendpoint = http://x\npassword = hunter2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="password"):
        load_config(path)


def test_config_unknown_backend_role_named(tmp_path) -> None:
    path = tmp_path / "bad.ini"
    path.write_text("[backend.wizard]\nendpoint = http://x\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="wizard"):
        load_config(path)


def test_config_backend_requires_endpoint(tmp_path) -> None:
    path = tmp_path / "bad.ini"
    path.write_text("[backend.evaluator]\nmodel = m\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="endpoint"):
        load_config(path)


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("[chain]\nmax_rounds = soon\n", "integer"),
        ("[chain]\nmarker = fancy\n", "marker"),
        ("[metrics]\ntie_mode = maybe\n", "tie_mode"),
    ],
)
def test_config_bad_values_named(tmp_path, body: str, fragment: str) -> None:
    path = tmp_path / "bad.ini"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ConfigError, match=fragment):
        load_config(path)


def test_config_missing_file_is_error(tmp_path, capsys) -> None:
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.ini")
    code, _, err = run_cli(
        ["fit", "--points", "x.csv", "--out", "f.json", "--config", str(tmp_path / "missing.ini")],
        capsys,
    )
    assert code == EXIT_ERROR
    assert err["error"] == "ConfigError"


def test_env_endpoint_configures_backend(monkeypatch) -> None:
    monkeypatch.setenv("MEDEVAL_EVALUATOR_ENDPOINT", "http://env.local/v1")
    config = load_config(None)
    backend = config.backends[Role.EVALUATOR]
    assert backend.endpoint == "http://env.local/v1"
    assert backend.token_env == "MEDEVAL_EVALUATOR_TOKEN"


def test_env_endpoint_overrides_file(monkeypatch, tmp_path) -> None:
    path = tmp_path / "medeval.ini"
    path.write_text("[backend.evaluator]\nendpoint = http://file.local\n", encoding="utf-8")
    monkeypatch.setenv("MEDEVAL_EVALUATOR_ENDPOINT", "http://env.local")
    assert load_config(path).backends[Role.EVALUATOR].endpoint == "http://env.local"


def test_config_serialization_never_holds_token_values(monkeypatch, tmp_path) -> None:
    secret = "sk-3b1f0a9d8c7e"
    monkeypatch.setenv("EVAL_KEY", secret)
    path = tmp_path / "medeval.ini"
    path.write_text(
        "[backend.evaluator]\nendpoint = http://x\ntoken_env = EVAL_KEY\n", encoding="utf-8"
    )
    config = load_config(path)
    dumped = json.dumps(config.to_dict())
    assert "EVAL_KEY" in dumped
    assert secret not in dumped


def test_config_hash_tracks_content(tmp_path) -> None:
    a = tmp_path / "a.ini"
    a.write_text("[pipeline]\nseed = 1\n", encoding="utf-8")
    b = tmp_path / "b.ini"
    b.write_text("[pipeline]\nseed = 2\n", encoding="utf-8")
    assert load_config(a).config_hash != load_config(b).config_hash
    assert load_config(a).config_hash == load_config(a).config_hash


def test_gateway_from_config_names_missing_roles() -> None:
    with pytest.raises(ConfigError, match="suggester"):
        gateway_from_config(load_config(None), required=(Role.SUGGESTER,))


def test_seed_flag_overrides_config(workspace, capsys) -> None:
    records_path = workspace / "approved.jsonl"
    approved_record_file(records_path)
    ini = workspace / "medeval.ini"
    ini.write_text("[pipeline]\nseed = 5\n[curriculum]\nn1 = 2\nn3 = 2\n", encoding="utf-8")
    code, out, _ = run_cli(
        ["curriculum", "--in", str(records_path), "--out", str(workspace / "p1"), "--config", str(ini)],
        capsys,
    )
    assert code == EXIT_OK
    assert out["seed"] == 5
    code, out, _ = run_cli(
        [
            "curriculum",
            "--in",
            str(records_path),
            "--out",
            str(workspace / "p2"),
            "--config",
            str(ini),
            "--seed",
            "9",
        ],
        capsys,
    )
    assert code == EXIT_OK
    assert out["seed"] == 9
