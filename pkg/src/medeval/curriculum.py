"""Three-stage curriculum partition and training-manifest export.

Stage 1 draws from the low-quality pool, stage 3 from the high-quality pool,
and stage 2 takes everything left over. Export produces ordered (prompt,
target) manifests with content hashes so an external trainer can attest to
exactly what it consumed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .chain import render_prompt
from .model import (
    InstructionRecord,
    MedevalError,
    SuggestionAuthor,
    Verdict,
    VerificationStatus,
    dumps_canonical,
    sha256_file,
)

STAGE_FILES = ("stage1.jsonl", "stage2.jsonl", "stage3.jsonl")


class SampleTooLarge(MedevalError):
    pass


class UnresolvedId(MedevalError):
    pass


class UnapprovedRecord(MedevalError):
    pass


@dataclass(frozen=True)
class CurriculumPlan:
    stage1: tuple[str, ...]
    stage2: tuple[str, ...]
    stage3: tuple[str, ...]
    seed: int
    n1: int
    n3: int

    def __post_init__(self) -> None:
        stages = (set(self.stage1), set(self.stage2), set(self.stage3))
        total = len(self.stage1) + len(self.stage2) + len(self.stage3)
        if len(stages[0] | stages[1] | stages[2]) != total:
            raise MedevalError("curriculum stages overlap")

    @property
    def counts(self) -> tuple[int, int, int]:
        return (len(self.stage1), len(self.stage2), len(self.stage3))

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage1": list(self.stage1),
            "stage2": list(self.stage2),
            "stage3": list(self.stage3),
            "seed": self.seed,
            "n1": self.n1,
            "n3": self.n3,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CurriculumPlan":
        return cls(
            stage1=tuple(d["stage1"]),
            stage2=tuple(d["stage2"]),
            stage3=tuple(d["stage3"]),
            seed=int(d["seed"]),
            n1=int(d["n1"]),
            n3=int(d["n3"]),
        )


def _ids(pool: Iterable[InstructionRecord | str]) -> list[str]:
    out = []
    for item in pool:
        out.append(item if isinstance(item, str) else item.record_id)
    if len(set(out)) != len(out):
        raise MedevalError("duplicate record ids in pool")
    return out


def plan(
    r_prime: Sequence[InstructionRecord | str],
    s_prime: Sequence[InstructionRecord | str],
    n1: int,
    n3: int,
    seed: int,
) -> CurriculumPlan:
    """Sample stage 1 from the low-quality pool and stage 3 from the
    high-quality pool, both without replacement; stage 2 is the remainder.

    Sampling shuffles sorted ids with one seeded generator (low pool first),
    so the same inputs and seed always give the same plan.
    """
    high_ids = _ids(r_prime)
    low_ids = _ids(s_prime)
    if set(high_ids) & set(low_ids):
        raise MedevalError("high and low pools intersect")
    if n1 < 0 or n3 < 0:
        raise MedevalError("sample sizes must be non-negative")
    if n1 > len(low_ids):
        raise SampleTooLarge(f"n1={n1} exceeds low pool size {len(low_ids)}")
    if n3 > len(high_ids):
        raise SampleTooLarge(f"n3={n3} exceeds high pool size {len(high_ids)}")

    rng = random.Random(seed)
    low_shuffled = sorted(low_ids)
    rng.shuffle(low_shuffled)
    high_shuffled = sorted(high_ids)
    rng.shuffle(high_shuffled)

    stage1 = tuple(low_shuffled[:n1])
    stage3 = tuple(high_shuffled[:n3])
    stage2 = tuple(sorted(set(low_shuffled[n1:]) | set(high_shuffled[n3:])))
    return CurriculumPlan(stage1=stage1, stage2=stage2, stage3=stage3, seed=seed, n1=n1, n3=n3)


def training_target(record: InstructionRecord) -> str:
    """Training target: the evaluation text plus one revision-note block per
    accepted suggestion, in suggestion order."""
    parts = [record.evaluation.raw_text]
    for suggestion in record.suggestions:
        if suggestion.verdict in (Verdict.JUDGE_ACCEPTED, Verdict.JURY_ACCEPTED):
            parts.append(f"Revision note: {suggestion.text}")
    return "\n\n".join(parts)


def training_pair(record: InstructionRecord) -> dict[str, str]:
    return {
        "record_id": record.record_id,
        "prompt": render_prompt(record.case),
        "target": training_target(record),
    }


def export_manifests(
    plan_: CurriculumPlan,
    records: Sequence[InstructionRecord],
    out_dir: str | Path,
) -> dict[str, Any]:
    """Write stage1..3.jsonl of (prompt, target) lines plus manifest.json.

    Every plan id must resolve to an Approved record; the manifest records
    stage order, counts, seed, and a sha256 per stage file.
    """
    by_id = {r.record_id: r for r in records}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    stage_ids = (plan_.stage1, plan_.stage2, plan_.stage3)
    hashes = []
    for filename, ids in zip(STAGE_FILES, stage_ids):
        path = out / filename
        with path.open("w", encoding="utf-8") as fh:
            for record_id in ids:
                record = by_id.get(record_id)
                if record is None:
                    raise UnresolvedId(f"plan id {record_id} not in record set")
                if record.verification.status is not VerificationStatus.APPROVED:
                    raise UnapprovedRecord(
                        f"record {record_id} is {record.verification.status.value}"
                    )
                fh.write(dumps_canonical(training_pair(record)))
                fh.write("\n")
        hashes.append(sha256_file(path))

    manifest = {
        "order": list(STAGE_FILES),
        "counts": list(plan_.counts),
        "seed": plan_.seed,
        "n1": plan_.n1,
        "n3": plan_.n3,
        "files": {name: h for name, h in zip(STAGE_FILES, hashes)},
    }
    (out / "manifest.json").write_text(dumps_canonical(manifest) + "\n", encoding="utf-8")
    (out / "plan.json").write_text(dumps_canonical(plan_.to_dict()) + "\n", encoding="utf-8")
    return manifest
