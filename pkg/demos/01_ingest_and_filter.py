"""
Loading a QA corpus, filtering junk rows, and assembling evaluation cases
=========================================================================
"""

import json
import tempfile
from pathlib import Path

from medeval.ingest import apply_filter, assemble_cases, default_rules, load_qa

# A corpus is JSONL: one question/answer object per line, optionally with
# per-model candidate responses inline.
rows = [
    {
        "question": "What is the first line drug for type 2 diabetes?",
        "answer": "Metformin, adjusted for kidney function.",
        "responses": {
            "model-a": "Start metformin unless contraindicated.",
            "model-b": "Insulin should always be started first.",
        },
    },
    {
        "question": "Please rephrase your previous answer in simpler words.",
        "answer": "Sure, here is a simpler version.",
        "responses": {"model-a": "ok", "model-b": "ok"},
    },
    {
        "question": "When should an adult with hypertension seek urgent care?",
        "answer": "Readings above 180/120 with symptoms need urgent assessment.",
        "responses": {
            "model-a": "Above 180/120 with chest pain or vision change, go now.",
            "model-b": "Any reading above 140 means call an ambulance.",
        },
    },
]

corpus = Path(tempfile.mkdtemp()) / "corpus.jsonl"
corpus.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")

# Malformed lines are reported, never silently dropped.
pairs, rejects = load_qa(corpus)
print(f"loaded {len(pairs)} pairs, {len(rejects)} rejected lines")

# The default rules drop meta requests ("rephrase ...") that are not
# medical QA; add your own FilterRule("pattern") entries as needed.
kept, report = apply_filter(pairs, default_rules(), rejects)
print(f"kept {report.kept} of {report.total_in}; rule hits: {report.rule_hits}")

# Cases pair each question with every candidate response, ordered by
# sorted model label, under a content-derived stable id.
cases = assemble_cases(kept)
for case in cases:
    labels = [r.model_label for r in case.responses]
    print(f"case {case.case_id}: {len(case.responses)} responses from {labels}")
