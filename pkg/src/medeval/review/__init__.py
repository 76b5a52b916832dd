"""Human review service: verification, jury adjudication, and blinded
preference queues over an append-only event log, plus the HTTP layer."""

from .store import (
    AlreadyDone,
    ExperimentClosed,
    ExperimentOpen,
    InvalidPayload,
    ItemKind,
    ItemNotFound,
    ItemStatus,
    LeaseHeld,
    NoDecisions,
    NotClaimed,
    ReviewQueueItem,
    ReviewStore,
)
from .service import DEFAULT_GUIDELINES, PREFERENCE_CRITERIA, create_app, load_reviewers

__all__ = [
    "AlreadyDone",
    "DEFAULT_GUIDELINES",
    "ExperimentClosed",
    "ExperimentOpen",
    "InvalidPayload",
    "ItemKind",
    "ItemNotFound",
    "ItemStatus",
    "LeaseHeld",
    "NoDecisions",
    "NotClaimed",
    "PREFERENCE_CRITERIA",
    "ReviewQueueItem",
    "ReviewStore",
    "create_app",
    "load_reviewers",
]
