"""HTTP layer over the review store.

Reviewers authenticate with a provisioned token (X-Reviewer-Token header);
tokens.txt maps `name:token` per line. Endpoints cover the three queues,
claims, decisions, stats, and the preference-experiment close.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..jury import TicketNotFound, TranscriptIncomplete
from ..model import MedevalError
from .store import (
    AlreadyDone,
    ExperimentClosed,
    ExperimentOpen,
    InvalidPayload,
    ItemKind,
    ItemNotFound,
    LeaseHeld,
    NoDecisions,
    NotClaimed,
    ReviewStore,
)

logger = logging.getLogger(__name__)

DEFAULT_GUIDELINES = {
    "knowledge_correct": (
        "Approve only if every medical statement in the evaluation is factually "
        "correct. Any wrong or outdated medical knowledge fails this criterion."
    ),
    "no_misattribution": (
        "Approve only if the evaluation never credits a doctor's answer with "
        "content it does not actually contain, and never ignores content it does."
    ),
    "fluent": (
        "Approve only if the evaluation reads as fluent, coherent prose a "
        "physician could act on without guessing at the meaning."
    ),
}

PREFERENCE_CRITERIA = [
    "Which evaluation analyzes the answers more accurately?",
    "Which evaluation's scores better reflect answer quality?",
    "Which evaluation is clearer and better organized?",
]

_STATUS_BY_ERROR = [
    (TicketNotFound, 404),
    (ItemNotFound, 404),
    (AlreadyDone, 409),
    (NotClaimed, 409),
    (LeaseHeld, 409),
    (ExperimentOpen, 409),
    (ExperimentClosed, 409),
    (NoDecisions, 409),
    (TranscriptIncomplete, 422),
    (InvalidPayload, 422),
]

_QUEUE_KINDS = {kind.value: kind for kind in ItemKind}


class DecisionBody(BaseModel):
    criteria: list[bool] = Field(min_length=3, max_length=3)
    note: str | None = None


class VerdictBody(BaseModel):
    accept: bool
    revised_text: str | None = None


class ChoiceBody(BaseModel):
    choice: str
    permutation: dict[str, Any] | None = None
    notes: dict[str, Any] | None = None


class EnqueueBody(BaseModel):
    kind: str
    payload: dict[str, Any]


def load_reviewers(path: str | Path) -> dict[str, str]:
    """tokens.txt: one `name:token` per line; '#' starts a comment."""
    reviewers: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, token = line.partition(":")
        if not sep or not name.strip() or not token.strip():
            raise MedevalError(f"bad reviewer line (want name:token): {raw!r}")
        reviewers[token.strip()] = name.strip()
    if not reviewers:
        raise MedevalError(f"no reviewer tokens in {path}")
    return reviewers


def create_app(
    store: ReviewStore,
    reviewers: dict[str, str],
    guidelines: dict[str, str] | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="medeval review service", docs_url=None, redoc_url=None)
    guidelines = guidelines or DEFAULT_GUIDELINES

    def reviewer_from_token(x_reviewer_token: str | None = Header(default=None)) -> str:
        if x_reviewer_token is None or x_reviewer_token not in reviewers:
            raise HTTPException(status_code=401, detail="missing or unknown reviewer token")
        return reviewers[x_reviewer_token]

    @app.exception_handler(MedevalError)
    async def medeval_error_handler(_request: Request, exc: MedevalError) -> JSONResponse:
        status = 400
        for cls, code in _STATUS_BY_ERROR:
            if isinstance(exc, cls):
                status = code
                break
        return JSONResponse(
            status_code=status,
            content={"error": exc.__class__.__name__, "message": str(exc)},
        )

    def queue_kind(queue: str) -> ItemKind:
        kind = _QUEUE_KINDS.get(queue)
        if kind is None:
            raise HTTPException(status_code=404, detail=f"unknown queue {queue!r}")
        return kind

    @app.get("/api/{queue}/pending")
    def pending(queue: str, reviewer: str = Depends(reviewer_from_token)) -> dict[str, Any]:
        kind = queue_kind(queue)
        if kind is ItemKind.JURY:
            store.sync_jury_tickets()
        now = store.clock()
        body: dict[str, Any] = {
            "items": [item.public_dict(now) for item in store.pending(kind)],
        }
        if kind is ItemKind.VERIFICATION:
            body["guidelines"] = guidelines
        if kind is ItemKind.PREFERENCE:
            body["criteria"] = PREFERENCE_CRITERIA
            counts = store.stats()["queues"][ItemKind.PREFERENCE.value]
            body["progress"] = {"done": counts["done"], "total": counts["total"]}
        return body

    @app.post("/api/{queue}/{item_id}/claim")
    def claim(queue: str, item_id: str, reviewer: str = Depends(reviewer_from_token)) -> dict[str, Any]:
        queue_kind(queue)
        item = store.claim(item_id, reviewer)
        return {
            "item_id": item.item_id,
            "reviewer": reviewer,
            "lease_expires_at": item.lease_expires_at,
        }

    @app.post("/api/verification/{item_id}/decision")
    def decide_verification(
        item_id: str, body: DecisionBody, reviewer: str = Depends(reviewer_from_token)
    ) -> dict[str, Any]:
        criteria = (body.criteria[0], body.criteria[1], body.criteria[2])
        state = store.submit_verification(item_id, criteria, reviewer, body.note)
        return {"item_id": item_id, "verification": state.to_dict()}

    @app.post("/api/jury/{ticket_id}/verdict")
    def decide_jury(
        ticket_id: str, body: VerdictBody, reviewer: str = Depends(reviewer_from_token)
    ) -> dict[str, Any]:
        ticket = store.submit_jury_verdict(ticket_id, body.accept, body.revised_text, reviewer)
        return {"ticket": ticket.to_dict()}

    @app.post("/api/preference/{item_id}/choice")
    def choose(
        item_id: str, body: ChoiceBody, reviewer: str = Depends(reviewer_from_token)
    ) -> dict[str, Any]:
        store.submit_preference_choice(
            item_id, body.choice, reviewer, permutation=body.permutation, notes=body.notes
        )
        counts = store.stats()["queues"][ItemKind.PREFERENCE.value]
        return {"item_id": item_id, "done": counts["done"], "total": counts["total"]}

    @app.post("/api/preference/close")
    def close_preference(reviewer: str = Depends(reviewer_from_token)) -> dict[str, Any]:
        store.close_preference()
        return {"closed": True, "results": store.preference_results()}

    @app.get("/api/preference/results")
    def preference_results(reviewer: str = Depends(reviewer_from_token)) -> dict[str, Any]:
        return store.preference_results()

    @app.get("/api/stats")
    def stats(reviewer: str = Depends(reviewer_from_token)) -> dict[str, Any]:
        return store.stats()

    @app.post("/api/enqueue")
    def enqueue(body: EnqueueBody, reviewer: str = Depends(reviewer_from_token)) -> dict[str, Any]:
        kind = queue_kind(body.kind)
        if kind is ItemKind.PREFERENCE:
            payload = dict(body.payload)
            item_id = store.enqueue_preference(
                text_a=payload.get("text_a", ""),
                text_b=payload.get("text_b", ""),
                source_a=payload.get("source_a", ""),
                source_b=payload.get("source_b", ""),
            )
        else:
            item_id = store.enqueue(kind, body.payload)
        return {"item_id": item_id}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app

