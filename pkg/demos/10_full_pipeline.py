"""
The whole pipeline in one deterministic run
===========================================

Corpus ingest, knowledge store, synthesis, quality split, human
verification replay, curriculum export, introspection with a jury verdict,
metric report, and the growth fit, all scripted and seeded. The same seed
always produces byte-identical artifacts.
"""

import tempfile
from pathlib import Path

from medeval.demo import run_demo

out = Path(tempfile.mkdtemp())
summary = run_demo(seed=7, out_dir=out)

for key in ("cases", "records", "high", "low", "approved", "curriculum_counts", "incorrect", "patched"):
    print(f"{key}: {summary[key]}")
print(f"fitted amplitude: {summary['fit_amplitude']:.4f}")

print("\nartifact tree:")
for path in sorted(out.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(out)}")
