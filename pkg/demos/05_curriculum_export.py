"""
Scheduling approved records into a three-stage training curriculum
==================================================================
"""

import json
import tempfile
from pathlib import Path

from medeval.curriculum import export_manifests, plan, training_pair
from medeval.model import (
    EvalCase,
    EvaluationResult,
    InstructionRecord,
    ModelResponse,
    Quality,
    Source,
    VerificationState,
)


def approved_record(tag: str, quality: Quality) -> InstructionRecord:
    case = EvalCase(
        case_id=f"id-{tag}",
        question=f"Question about {tag}?",
        responses=(ModelResponse(model_label="model-a", text=f"Answer {tag}."),),
        reference_answer=f"Reference {tag}.",
    )
    raw = f"Analyze: Step 1: Reviewed {tag}.\nScore: Doctor 1: 4 points."
    source = Source.HIGH_TIER if quality is Quality.HIGH else Source.LOW_TIER
    return InstructionRecord(
        case=case,
        source=source,
        evaluation=EvaluationResult(steps=(f"Reviewed {tag}.",), scores={0: 4}, raw_text=raw),
        quality=quality,
        verification=VerificationState.decide((True, True, True), reviewer_id="rev-1"),
    )


# Stage 1 warms up on a sample of the low-quality pool, stage 3 finishes on
# a sample of the high-quality pool, and stage 2 holds everything else.
low_pool = [approved_record(f"low{i}", Quality.LOW) for i in range(6)]
high_pool = [approved_record(f"high{i}", Quality.HIGH) for i in range(6)]

schedule = plan(low_pool, high_pool, n1=2, n3=3, seed=11)
print(f"stage sizes: {schedule.counts}")

# Export writes stage1..3.jsonl of (record_id, prompt, target) lines plus a
# manifest with per-file sha256 hashes; only Approved records may ship.
out = Path(tempfile.mkdtemp())
manifest = export_manifests(schedule, low_pool + high_pool, out)
print(f"manifest counts {manifest['counts']}, files {sorted(manifest['files'])}")

first = json.loads((out / "stage1.jsonl").read_text(encoding="utf-8").splitlines()[0])
print(f"a training pair: prompt starts {first['prompt'][:40]!r}")

# training_pair is the exact prompt/target serialization used in each stage.
pair = training_pair(high_pool[0])
print(f"target starts {pair['target'][:40]!r}")
