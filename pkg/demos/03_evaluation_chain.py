"""
The knowledge completion chain: evaluate doctor answers, retrieving on demand
=============================================================================
"""

from medeval.chain import parse_evaluation, run_chain, synthesize_records
from medeval.gateway import Role, scripted_gateway
from medeval.knowledge import HashEmbedder, VectorIndex, build_chunks
from medeval.model import EvalCase, ModelResponse

# The evaluator model sees the patient question, every doctor answer, and
# the reference answer. It must either emit a structured evaluation or ask
# for missing knowledge with a "[Question] ..." line, which triggers top-k
# retrieval and another round.
documents = {
    "asthma.txt": (
        "Inhaled corticosteroids are the cornerstone of persistent asthma "
        "control; short acting beta agonists are for rescue only."
    )
}
embedder = HashEmbedder(dim=128)
index = VectorIndex(build_chunks(documents, embedder, window=16, overlap=4), embedder)

case = EvalCase(
    case_id="asthma-1",
    question="How should persistent asthma be managed long term?",
    responses=(
        ModelResponse(model_label="model-a", text="Daily inhaled corticosteroid."),
        ModelResponse(model_label="model-b", text="Use the rescue inhaler more often."),
    ),
    reference_answer="A daily inhaled corticosteroid with a rescue inhaler as needed.",
)

# Scripted gateways replay canned replies in order, so the chain logic can
# be exercised without any backend. Swap in gateway_from_config(...) for a
# real HTTP deployment.
gateway = scripted_gateway(
    {
        Role.EVALUATOR: [
            "[Question] what is the cornerstone controller for persistent asthma",
            "Analyze: Step 1: Doctor 1 matches the controller guidance. "
            "Step 2: Doctor 2 leans on rescue dosing, which is wrong.\n"
            "Score: Doctor 1: 5 points. Doctor 2: 2 points.",
        ]
    }
)

result, trace = run_chain(case, index, gateway)
print(f"scores: {result.scores} after {trace.n_calls} calls, {trace.n_retrievals} retrievals")
for step in result.steps:
    print(f"  step: {step}")

# The same text format round-trips through the parser.
reparsed = parse_evaluation(result.raw_text, n_responses=2)
print(f"reparse agrees: {reparsed.scores == result.scores}")

# synthesize_records runs the chain over a batch and keeps per-case traces;
# failures are reported, not raised.
gateway = scripted_gateway(
    {
        Role.EVALUATOR: [
            "Analyze: Step 1: Both answers acceptable.\n"
            "Score: Doctor 1: 4 points. Doctor 2: 4 points."
        ]
    }
)
records, traces, failures = synthesize_records([case], index, gateway)
print(f"synthesized {len(records)} records, {len(failures)} failures")
