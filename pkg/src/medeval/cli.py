"""Command-line entry points for the pipeline.

Every subcommand reads an optional INI config (--config), honors --seed,
and records provenance next to its artifacts: tool version, seed, config
hash, and a sha256 per input file. Errors are emitted as a single JSON
object on stderr; exit codes are 0 (ok), 1 (pipeline error), 2 (usage),
and 3 (waiting on open jury tickets).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .chain import ChainConfig, QueryMarkerMode, synthesize_records
from .classifier import classify, load_classifier, save_classifier, split_by_quality, train
from .config import PipelineConfig, gateway_from_config, load_config
from .curriculum import export_manifests, plan
from .gateway import Role
from .growth import (
    B_DEFAULT,
    C_DEFAULT,
    SigmoidFit,
    fit_amplitude,
    fit_full,
    forecast_plateau,
    load_points_csv,
    normalize_points,
    rss,
)
from .ingest import apply_filter, assemble_cases, default_rules, load_qa, load_rules
from .introspection import CorrectnessMode, IntrospectionState, OpenJuryTickets, run_iteration
from .jury import JuryQueue
from .knowledge import HashEmbedder, build_store, load_store
from .metrics import (
    ScoredCase,
    annotation_matrix,
    build_report,
    complete_rows,
    join_scored_cases,
    paired_model_columns,
    write_win_tie_csv,
)
from .model import (
    EvalCase,
    HumanAnnotation,
    InstructionRecord,
    MedevalError,
    Quality,
    Source,
    dumps_canonical,
    read_jsonl,
    sha256_file,
    write_jsonl,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_WAITING = 3


class UsageError(MedevalError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of printing usage and exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _print_error(error: str, message: str, **extra: Any) -> None:
    payload = {"error": error, "message": message, **extra}
    print(dumps_canonical(payload), file=sys.stderr)


def _print_summary(command: str, **fields: Any) -> None:
    print(dumps_canonical({"command": command, **fields}))


def _hash_inputs(inputs: dict[str, str | Path]) -> dict[str, str]:
    """sha256 per input; directories are hashed file-by-file."""
    out: dict[str, str] = {}
    for name, raw in sorted(inputs.items()):
        path = Path(raw)
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    out[f"{name}/{child.relative_to(path)}"] = sha256_file(child)
        else:
            out[name] = sha256_file(path)
    return out


def provenance_record(seed: int, config: PipelineConfig, inputs: dict[str, str | Path]) -> dict[str, Any]:
    return {
        "tool": "medeval",
        "version": __version__,
        "seed": seed,
        "config_hash": config.config_hash,
        "inputs": _hash_inputs(inputs),
    }


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(payload) + "\n", encoding="utf-8")


def _sidecar(out_path: str | Path) -> Path:
    return Path(out_path).with_suffix(".provenance.json")


def _label_path(value: str) -> tuple[str, str]:
    label, sep, path = value.partition("=")
    if not sep or not label or not path:
        raise argparse.ArgumentTypeError(f"expected LABEL=PATH, got {value!r}")
    return label, path


def _model_pair(value: str) -> tuple[str, str]:
    a, sep, b = value.partition(":")
    if not sep or not a or not b:
        raise argparse.ArgumentTypeError(f"expected LABEL_A:LABEL_B, got {value!r}")
    return a, b


def _load_outputs(path: str | Path) -> list[str]:
    """Responder output file: JSONL of strings or {"text": ...} objects."""
    out = []
    for line in read_jsonl(path):
        if isinstance(line, str):
            out.append(line)
        elif isinstance(line, dict) and isinstance(line.get("text"), str):
            out.append(line["text"])
        else:
            raise MedevalError(f"responder line in {path} must be a string or carry a 'text' field")
    return out


# --- subcommands ---------------------------------------------------------


def cmd_ingest(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    rules = load_rules(args.rules) if args.rules else default_rules()
    pairs, rejects = load_qa(args.input)
    kept, report = apply_filter(pairs, rules, rejects)
    responder_outputs = {}
    inputs: dict[str, str | Path] = {"corpus": args.input}
    if args.rules:
        inputs["rules"] = args.rules
    for label, path in args.responses or ():
        responder_outputs[label] = _load_outputs(path)
        inputs[f"responses.{label}"] = path
    cases = assemble_cases(kept, responder_outputs)
    write_jsonl(args.out, cases)
    write_json(args.report, report.to_dict() | {"provenance": provenance_record(seed, config, inputs)})
    _print_summary("ingest", cases=len(cases), filtered_out=report.filtered_out)


def cmd_build_db(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    window = args.window if args.window is not None else config.window
    overlap = args.overlap if args.overlap is not None else config.overlap
    dim = args.dim if args.dim is not None else config.embed_dim
    index = build_store(args.docs, args.out, HashEmbedder(dim), window, overlap)
    write_json(
        Path(args.out) / "provenance.json",
        provenance_record(seed, config, {"docs": args.docs}),
    )
    _print_summary("build-db", chunks=len(index), dim=dim, window=window, overlap=overlap)


def cmd_synthesize(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    chain_config = ChainConfig(
        max_rounds=args.max_rounds if args.max_rounds is not None else config.chain_max_rounds,
        top_k=args.top_k if args.top_k is not None else config.chain_top_k,
        query_marker_mode=(
            QueryMarkerMode(args.marker) if args.marker else config.chain_marker
        ),
    )
    index = load_store(args.store)
    gateway = gateway_from_config(config, required=(Role.EVALUATOR,))
    cases = list(read_jsonl(args.cases, EvalCase))
    source = Source.HIGH_TIER if args.tier == "high" else Source.LOW_TIER
    records, traces, failures = synthesize_records(cases, index, gateway, chain_config, source)
    write_jsonl(args.out, records)
    if args.traces:
        traces_dir = Path(args.traces)
        traces_dir.mkdir(parents=True, exist_ok=True)
        for trace in traces:
            write_json(traces_dir / f"{trace.case_id}.json", trace.to_dict())
    write_json(
        _sidecar(args.out),
        provenance_record(seed, config, {"cases": args.cases, "store": args.store}),
    )
    _print_summary(
        "synthesize",
        records=len(records),
        failures=[list(f) for f in failures],
        calls=sum(t.n_calls for t in traces),
    )


def cmd_classify(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    records = list(read_jsonl(args.input, InstructionRecord))
    dim = args.dim if args.dim is not None else config.embed_dim
    embedder = HashEmbedder(dim)
    inputs: dict[str, str | Path] = {"records": args.input}
    trained = False
    if args.train:
        labels = {d["record_id"]: Quality(d["quality"]) for d in read_jsonl(args.train)}
        by_id = {r.record_id: r for r in records}
        missing = sorted(set(labels) - set(by_id))
        if missing:
            raise MedevalError(f"label ids not found in records: {missing[:5]}")
        labeled = [(by_id[rid], quality) for rid, quality in sorted(labels.items())]
        clf = train(labeled, embedder, config.c_grid, seed)
        save_classifier(clf, args.model)
        inputs["labels"] = args.train
        trained = True
    else:
        clf = load_classifier(args.model)
    classified = classify(clf, records, embedder)
    write_jsonl(args.out, classified)
    high, low = split_by_quality(classified)
    write_json(_sidecar(args.out), provenance_record(seed, config, inputs))
    summary: dict[str, Any] = {"high": len(high), "low": len(low)}
    if trained:
        summary["val_accuracy"] = clf.val_accuracy
        summary["c_value"] = clf.c_value
    _print_summary("classify", **summary)


def cmd_curriculum(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    records = list(read_jsonl(args.input, InstructionRecord))
    high, low = split_by_quality(records)
    n1 = args.n1 if args.n1 is not None else config.n1
    n3 = args.n3 if args.n3 is not None else config.n3
    the_plan = plan(high, low, n1, n3, seed)
    manifest = export_manifests(the_plan, records, args.out)
    write_json(
        Path(args.out) / "provenance.json",
        provenance_record(seed, config, {"records": args.input}),
    )
    _print_summary("curriculum", counts=manifest["counts"], seed=seed)


def cmd_introspect(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    state_path = Path(args.state)
    if state_path.exists():
        state = IntrospectionState.load(state_path)
    else:
        records = list(read_jsonl(args.records, InstructionRecord))
        state = IntrospectionState(iteration=args.iteration, records=tuple(records))
    index = load_store(args.store)
    gateway = gateway_from_config(
        config, required=(Role.EVALUATOR, Role.SUGGESTER, Role.JUDGE)
    )
    queue = JuryQueue(args.queue_dir)
    chain_config = ChainConfig(
        max_rounds=config.chain_max_rounds,
        top_k=config.chain_top_k,
        query_marker_mode=config.chain_marker,
    )
    mode = CorrectnessMode(args.mode) if args.mode else config.introspection_mode
    try:
        result = run_iteration(
            state,
            index,
            gateway,
            queue,
            args.out,
            skip_jury=args.skip_jury,
            mode=mode,
            config=chain_config,
            top_k=config.introspection_top_k,
        )
    except OpenJuryTickets as exc:
        if exc.state is not None:
            exc.state.save(state_path)
        raise
    result.state.save(state_path)
    write_json(
        Path(args.out) / "provenance.json",
        provenance_record(seed, config, {"records": args.records, "store": args.store}),
    )
    _print_summary(
        "introspect",
        incorrect=len(result.state.incorrect),
        patched=list(result.patched_ids),
        next_iteration=result.state.iteration,
    )


def cmd_evaluate(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    raw = list(read_jsonl(args.scores))
    inputs: dict[str, str | Path] = {"scores": args.scores}
    annotations: list[HumanAnnotation] = []
    if args.annotations:
        annotations = [HumanAnnotation.from_dict(d) for d in read_jsonl(args.annotations)]
        inputs["annotations"] = args.annotations
    if raw and "human_scores" in raw[0]:
        cases = [ScoredCase.from_dict(d) for d in raw]
    else:
        if not annotations:
            raise MedevalError("instruction records need --annotations for human scores")
        records = [InstructionRecord.from_dict(d) for d in raw]
        cases = join_scored_cases(records, annotations)
    ratings = None
    alpha_ratings = None
    if annotations:
        _keys, annotators, matrix = annotation_matrix(annotations)
        if len(annotators) >= 2:
            alpha_ratings = matrix
            full = complete_rows(matrix)
            if len(full) >= 2:
                ratings = full
    pairs = [tuple(p) for p in (args.pairs or ())]
    t_test_pair = paired_model_columns(cases, pairs[0]) if pairs else None
    report = build_report(
        cases,
        ratings=ratings,
        alpha_ratings=alpha_ratings,
        t_test_pair=t_test_pair,
        model_pairs=pairs,
        tie_mode=config.tie_mode,
    )
    write_json(args.out, report.to_dict() | {"provenance": provenance_record(seed, config, inputs)})
    if args.tables:
        write_win_tie_csv(report.win_tie, args.tables)
    _print_summary(
        "evaluate",
        n_cases=report.n_cases,
        acc_2tuple=report.acc_2tuple,
        spearman=report.spearman,
    )


def cmd_fit(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    points = load_points_csv(args.points)
    if args.mode == "fixed":
        a = fit_amplitude(points)
        pts = tuple(normalize_points(points))
        fit = SigmoidFit(a=a, b=B_DEFAULT, c=C_DEFAULT, rss=rss(a, B_DEFAULT, C_DEFAULT, pts), points=pts)
    else:
        fit = fit_full(points)
    forecast = forecast_plateau(fit, args.horizon)
    write_json(
        args.out,
        {
            "mode": args.mode,
            "fit": fit.to_dict(),
            "forecast": forecast.to_dict(),
            "provenance": provenance_record(seed, config, {"points": args.points}),
        },
    )
    _print_summary("fit", a=fit.a, b=fit.b, c=fit.c, rss=fit.rss)


def cmd_serve(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    import uvicorn

    from .review import ReviewStore, create_app, load_reviewers

    store = ReviewStore(args.queue_dir)
    reviewers = load_reviewers(args.reviewers)
    app = create_app(store, reviewers, static_dir=args.static)
    logger.info("serving review queues from %s on %s:%d", args.queue_dir, args.host, args.port)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def cmd_demo(args: argparse.Namespace, config: PipelineConfig, seed: int) -> None:
    from .demo import run_demo

    summary = run_demo(seed=seed, out_dir=args.out)
    _print_summary("demo", **summary)


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=None, help="seed recorded in provenance")
    common.add_argument("--verbose", action="store_true", help="log at INFO level")

    parser = _Parser(prog="medeval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"medeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="filter a QA corpus and assemble cases")
    p.add_argument("--in", dest="input", required=True, help="QA corpus (JSONL)")
    p.add_argument("--rules", default=None, help="filter patterns, one per line")
    p.add_argument("--out", required=True, help="cases JSONL")
    p.add_argument("--report", required=True, help="filter report JSON")
    p.add_argument(
        "--responses",
        type=_label_path,
        action="append",
        metavar="LABEL=PATH",
        help="responder output file aligned with kept pairs (repeatable)",
    )
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-db", parents=[common], help="chunk and index knowledge documents")
    p.add_argument("--docs", required=True, help="directory of *.txt documents")
    p.add_argument("--out", required=True, help="store directory")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--overlap", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("synthesize", parents=[common], help="run the evaluation chain over cases")
    p.add_argument("--cases", required=True, help="cases JSONL")
    p.add_argument("--store", required=True, help="knowledge store directory")
    p.add_argument("--out", required=True, help="instruction records JSONL")
    p.add_argument("--max-rounds", type=int, default=None)
    p.add_argument("--marker", choices=["strict", "loose"], default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--tier", choices=["high", "low"], default="high")
    p.add_argument("--traces", default=None, help="directory for per-case chain traces")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("classify", parents=[common], help="score instruction quality")
    p.add_argument("--in", dest="input", required=True, help="instruction records JSONL")
    p.add_argument("--model", required=True, help="classifier JSON (read, or written with --train)")
    p.add_argument("--out", required=True, help="classified records JSONL")
    p.add_argument("--train", default=None, help="labels JSONL {record_id, quality} to train on")
    p.add_argument("--dim", type=int, default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("curriculum", parents=[common], help="plan and export training stages")
    p.add_argument("--in", dest="input", required=True, help="classified, approved records JSONL")
    p.add_argument("--n1", type=int, default=None, help="stage-1 sample size (low pool)")
    p.add_argument("--n3", type=int, default=None, help="stage-3 sample size (high pool)")
    p.add_argument("--out", required=True, help="plan directory")
    p.set_defaults(func=cmd_curriculum)

    p = sub.add_parser("introspect", parents=[common], help="one evaluate/suggest/judge iteration")
    p.add_argument("--records", required=True, help="instruction records JSONL")
    p.add_argument("--store", required=True, help="knowledge store directory")
    p.add_argument("--state", required=True, help="iteration state JSON (created or resumed)")
    p.add_argument("--iter", dest="iteration", type=int, default=1)
    p.add_argument("--out", required=True, help="refresh manifest directory")
    p.add_argument("--queue-dir", required=True, help="jury queue directory")
    p.add_argument("--skip-jury", action="store_true", help="drop open tickets as rejected")
    p.add_argument("--mode", choices=["rank", "exact"], default=None)
    p.set_defaults(func=cmd_introspect)

    p = sub.add_parser("evaluate", parents=[common], help="score agreement with human raters")
    p.add_argument("--scores", required=True, help="instruction records or scored cases JSONL")
    p.add_argument("--annotations", default=None, help="human annotations JSONL")
    p.add_argument("--out", required=True, help="metric report JSON")
    p.add_argument("--tables", default=None, help="win/tie/loss CSV")
    p.add_argument(
        "--pairs",
        type=_model_pair,
        action="append",
        metavar="LABEL_A:LABEL_B",
        help="model pair for win/tie tables and the paired t-test (repeatable)",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fit", parents=[common], help="fit the accuracy-growth curve")
    p.add_argument("--points", required=True, help="CSV of iteration,accuracy rows")
    p.add_argument("--mode", choices=["fixed", "full"], default="fixed")
    p.add_argument("--out", required=True, help="fit JSON")
    p.add_argument("--horizon", type=int, default=10)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("serve", parents=[common], help="run the human review service")
    p.add_argument("--queue-dir", required=True, help="review store directory")
    p.add_argument("--reviewers", required=True, help="name:token lines")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--static", default=None, help="static console assets to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("demo", parents=[common], help="run the whole pipeline on bundled data")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_demo)

    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _print_error("UsageError", str(exc))
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        seed = args.seed if args.seed is not None else config.seed
        logger.info("config hash %s", config.config_hash)
        args.func(args, config, seed)
    except OpenJuryTickets as exc:
        _print_error("OpenJuryTickets", str(exc), tickets=list(exc.ticket_ids))
        return EXIT_WAITING
    except UsageError as exc:
        _print_error("UsageError", str(exc))
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _print_error("FileNotFound", str(exc))
        return EXIT_ERROR
    except MedevalError as exc:
        _print_error(type(exc).__name__, str(exc))
        return EXIT_ERROR
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
