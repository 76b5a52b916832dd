"""
Sorting synthesized evaluations into high and low quality
=========================================================
"""

import tempfile
from pathlib import Path

from medeval.classifier import classify, load_classifier, save_classifier, split_by_quality, train
from medeval.knowledge import HashEmbedder
from medeval.model import (
    EvalCase,
    EvaluationResult,
    InstructionRecord,
    ModelResponse,
    Quality,
    Source,
)


def record(tag: str, analysis: str) -> InstructionRecord:
    case = EvalCase(
        case_id=f"id-{tag}",
        question=f"Question about {tag}?",
        responses=(ModelResponse(model_label="model-a", text=f"Answer {tag}."),),
        reference_answer=f"Reference {tag}.",
    )
    raw = f"Analyze: Step 1: {analysis}\nScore: Doctor 1: 4 points."
    evaluation = EvaluationResult(steps=(analysis,), scores={0: 4}, raw_text=raw)
    return InstructionRecord(case=case, evaluation=evaluation, source=Source.HIGH_TIER)


# Label a seed set by eye: detailed, evidence-citing rationales are HIGH,
# terse unsupported ones are LOW. The classifier is a linear SVM over
# embeddings of the evaluation text, picked by validation accuracy over a
# small C grid with a stratified split.
labeled = []
for i in range(8):
    labeled.append(
        (record(f"good{i}", f"thorough stepwise rationale citing guideline evidence {i}"), Quality.HIGH)
    )
    labeled.append((record(f"bad{i}", f"vague terse unsupported assertion {i}"), Quality.LOW))

embedder = HashEmbedder(dim=128)
classifier = train(labeled, embedder, seed=0)
print(f"validation accuracy {classifier.val_accuracy:.2f} at C={classifier.c_value}")

# Classifiers serialize to a single JSON file and refuse to run against a
# different embedder fingerprint.
path = Path(tempfile.mkdtemp()) / "classifier.json"
save_classifier(classifier, path)
classifier = load_classifier(path)

fresh = [
    record("unseen-good", "thorough stepwise rationale citing guideline evidence"),
    record("unseen-bad", "vague terse unsupported assertion"),
]
graded = classify(classifier, fresh, embedder)
for rec in graded:
    print(f"{rec.case.case_id}: {rec.quality.value}")

high, low = split_by_quality(graded)
print(f"{len(high)} high, {len(low)} low")
