"""Event-sourced state for the review queues.

All mutations append one JSON line to events.jsonl under a single writer
lock; replaying the log reconstructs the exact state, so the service can
crash and restart without losing a decision. Claim leases are not stored as
state transitions — expiry is computed against the clock on every read, so
an abandoned claim silently reopens.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from ..jury import JuryQueue, JuryTicket, JuryVerdict, TicketNotFound
from ..model import MedevalError, VerificationState, dumps_canonical

LEASE_SECONDS = 30 * 60

EVENTS_FILE = "events.jsonl"


class InvalidPayload(MedevalError):
    pass


class ItemNotFound(MedevalError):
    pass


class AlreadyDone(MedevalError):
    pass


class NotClaimed(MedevalError):
    pass


class LeaseHeld(MedevalError):
    pass


class NoDecisions(MedevalError):
    pass


class ExperimentOpen(MedevalError):
    pass


class ExperimentClosed(MedevalError):
    pass


class ItemKind(str, enum.Enum):
    VERIFICATION = "verification"
    JURY = "jury"
    PREFERENCE = "preference"


class ItemStatus(str, enum.Enum):
    OPEN = "open"
    CLAIMED = "claimed"
    DONE = "done"


@dataclass(frozen=True)
class ReviewQueueItem:
    """One queue entry. `payload` is what reviewers may see; `hidden` (the
    preference source mapping) is never serialized to clients before the
    experiment closes."""

    item_id: str
    kind: ItemKind
    payload: dict[str, Any]
    hidden: dict[str, Any] = field(default_factory=dict)
    created_at: float = 0.0
    claimed_by: str | None = None
    lease_expires_at: float | None = None
    done: bool = False
    result: dict[str, Any] | None = None

    def status(self, now: float) -> ItemStatus:
        if self.done:
            return ItemStatus.DONE
        if self.claimed_by is not None and (self.lease_expires_at or 0.0) > now:
            return ItemStatus.CLAIMED
        return ItemStatus.OPEN

    def public_dict(self, now: float) -> dict[str, Any]:
        status = self.status(now)
        out: dict[str, Any] = {
            "item_id": self.item_id,
            "kind": self.kind.value,
            "status": status.value,
            "payload": self.payload,
            "created_at": self.created_at,
        }
        if status is ItemStatus.CLAIMED:
            out["claimed_by"] = self.claimed_by
            out["lease_expires_at"] = self.lease_expires_at
        return out


def _validate_payload(kind: ItemKind, payload: dict[str, Any]) -> None:
    if not isinstance(payload, dict):
        raise InvalidPayload("payload must be an object")
    if kind is ItemKind.VERIFICATION:
        missing = {"case", "evaluation"} - payload.keys()
        if missing:
            raise InvalidPayload(f"verification payload missing {sorted(missing)}")
    elif kind is ItemKind.JURY:
        missing = {"ticket_id", "record_id", "transcript"} - payload.keys()
        if missing:
            raise InvalidPayload(f"jury payload missing {sorted(missing)}")
    elif kind is ItemKind.PREFERENCE:
        # Sources live on the hidden side; the listed payload is text only.
        missing = {"text_a", "text_b"} - payload.keys()
        if missing:
            raise InvalidPayload(f"preference payload missing {sorted(missing)}")
        forbidden = {"source_a", "source_b"} & payload.keys()
        if forbidden:
            raise InvalidPayload(f"preference payload must not expose {sorted(forbidden)}")


class ReviewStore:
    """Queues, decisions, and the preference experiment, backed by one log."""

    def __init__(self, root: str | Path, clock: Callable[[], float] = time.time):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.jury_queue = JuryQueue(self.root)
        self._lock = threading.Lock()
        self._items: dict[str, ReviewQueueItem] = {}
        self._verification_decisions: list[dict[str, Any]] = []
        self._preference_closed = False
        self._replay()

    @property
    def _log(self) -> Path:
        return self.root / EVENTS_FILE

    def _replay(self) -> None:
        if not self._log.exists():
            return
        with self._log.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._apply(json.loads(line))

    def _append(self, event: dict[str, Any]) -> None:
        with self._log.open("a", encoding="utf-8") as fh:
            fh.write(dumps_canonical(event))
            fh.write("\n")
            fh.flush()
        self._apply(event)

    def _apply(self, event: dict[str, Any]) -> None:
        etype = event["type"]
        if etype == "enqueue":
            item_id = event["item_id"]
            if item_id not in self._items:
                self._items[item_id] = ReviewQueueItem(
                    item_id=item_id,
                    kind=ItemKind(event["kind"]),
                    payload=event["payload"],
                    hidden=event.get("hidden", {}),
                    created_at=event["created_at"],
                )
        elif etype == "claim":
            item = self._items[event["item_id"]]
            self._items[item.item_id] = replace(
                item, claimed_by=event["reviewer"], lease_expires_at=event["expires_at"]
            )
        elif etype == "decision":
            item = self._items[event["item_id"]]
            self._items[item.item_id] = replace(item, done=True, result=event["result"])
            if item.kind is ItemKind.VERIFICATION:
                self._verification_decisions.append(event["result"])
        elif etype == "preference_close":
            self._preference_closed = True
        else:
            raise MedevalError(f"unknown event type {etype!r}")

    # -- queue operations ---------------------------------------------------

    def enqueue(self, kind: ItemKind, payload: dict[str, Any], hidden: dict[str, Any] | None = None) -> str:
        """Append a new item; a payload already enqueued (same content hash)
        is not duplicated and its existing id is returned."""
        _validate_payload(kind, payload)
        hidden = hidden or {}
        body = dumps_canonical({"kind": kind.value, "payload": payload, "hidden": hidden})
        item_id = hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]
        with self._lock:
            if item_id in self._items:
                return item_id
            self._append(
                {
                    "type": "enqueue",
                    "item_id": item_id,
                    "kind": kind.value,
                    "payload": payload,
                    "hidden": hidden,
                    "created_at": self.clock(),
                }
            )
        return item_id

    def enqueue_preference(self, text_a: str, text_b: str, source_a: str, source_b: str) -> str:
        """Preference pairs arrive unblinded; the source mapping moves to
        the hidden side before anything is listed."""
        if not (text_a.strip() and text_b.strip()):
            raise InvalidPayload("preference texts must be non-blank")
        if not (source_a.strip() and source_b.strip()):
            raise InvalidPayload("preference sources must be non-blank")
        return self.enqueue(
            ItemKind.PREFERENCE,
            {"text_a": text_a, "text_b": text_b},
            hidden={"source_a": source_a, "source_b": source_b},
        )

    def sync_jury_tickets(self) -> int:
        """Mirror open jury-queue tickets into the jury review queue."""
        added = 0
        for ticket in self.jury_queue.open_tickets():
            before = len(self._items)
            self.enqueue(ItemKind.JURY, ticket.to_dict())
            added += len(self._items) - before
        return added

    def get(self, item_id: str) -> ReviewQueueItem:
        item = self._items.get(item_id)
        if item is None:
            raise ItemNotFound(f"no item {item_id}")
        return item

    def items(self, kind: ItemKind | None = None) -> list[ReviewQueueItem]:
        out = [i for i in self._items.values() if kind is None or i.kind is kind]
        return sorted(out, key=lambda i: (i.created_at, i.item_id))

    def pending(self, kind: ItemKind) -> list[ReviewQueueItem]:
        now = self.clock()
        return [i for i in self.items(kind) if i.status(now) is ItemStatus.OPEN]

    def claim(self, item_id: str, reviewer: str) -> ReviewQueueItem:
        """Take a lease. Exactly one holder at a time; expired leases are
        free for the taking."""
        with self._lock:
            item = self.get(item_id)
            now = self.clock()
            status = item.status(now)
            if status is ItemStatus.DONE:
                raise AlreadyDone(f"item {item_id} already decided")
            if status is ItemStatus.CLAIMED and item.claimed_by != reviewer:
                raise LeaseHeld(f"item {item_id} is claimed by another reviewer")
            self._append(
                {
                    "type": "claim",
                    "item_id": item_id,
                    "reviewer": reviewer,
                    "expires_at": now + LEASE_SECONDS,
                }
            )
            return self.get(item_id)

    def _check_submittable(self, item: ReviewQueueItem, kind: ItemKind, reviewer: str) -> None:
        if item.kind is not kind:
            raise ItemNotFound(f"item {item.item_id} is a {item.kind.value} item")
        now = self.clock()
        status = item.status(now)
        if status is ItemStatus.DONE:
            raise AlreadyDone(f"item {item.item_id} already decided")
        if status is ItemStatus.CLAIMED and item.claimed_by != reviewer:
            raise NotClaimed(f"item {item.item_id} is leased to another reviewer")

    # -- verification -------------------------------------------------------

    def submit_verification(
        self,
        item_id: str,
        criteria: tuple[bool, bool, bool],
        reviewer: str,
        note: str | None = None,
    ) -> VerificationState:
        with self._lock:
            item = self.get(item_id)
            self._check_submittable(item, ItemKind.VERIFICATION, reviewer)
            state = VerificationState.decide(tuple(criteria), reviewer_id=reviewer, note=note)
            result = {
                "item_id": item_id,
                "record_id": item.payload.get("record_id"),
                "verification": state.to_dict(),
                "criteria": list(criteria),
                "reviewer": reviewer,
            }
            self._append({"type": "decision", "item_id": item_id, "result": result})
            return state

    def verification_decisions(self) -> list[dict[str, Any]]:
        return list(self._verification_decisions)

    def verification_stats(self) -> dict[str, Any]:
        """Per-criterion pass proportions over decided items, plus the
        approved/rejected split."""
        decisions = self._verification_decisions
        if not decisions:
            raise NoDecisions("no verification decisions yet")
        n = len(decisions)
        passes = [0, 0, 0]
        rejected = 0
        for decision in decisions:
            criteria = decision["criteria"]
            for i in range(3):
                passes[i] += bool(criteria[i])
            rejected += not all(criteria)
        return {
            "decided": n,
            "approved": n - rejected,
            "rejected": rejected,
            "criterion_pass_counts": passes,
            "criterion_proportions": [p / n for p in passes],
        }

    # -- jury ---------------------------------------------------------------

    def _jury_item_for_ticket(self, ticket_id: str) -> ReviewQueueItem:
        for item in self.items(ItemKind.JURY):
            if item.payload.get("ticket_id") == ticket_id:
                return item
        raise TicketNotFound(f"no jury item for ticket {ticket_id}")

    def submit_jury_verdict(
        self, ticket_id: str, accept: bool, revised_text: str | None, juror: str
    ) -> JuryTicket:
        """Record the human verdict; it lands in the shared jury queue where
        the introspection loop picks it up."""
        with self._lock:
            item = self._jury_item_for_ticket(ticket_id)
            self._check_submittable(item, ItemKind.JURY, juror)
            verdict = JuryVerdict(accept=accept, text=revised_text, juror_id=juror)
            decided = self.jury_queue.submit_verdict(item.payload["ticket_id"], verdict)
            result = {
                "item_id": item.item_id,
                "ticket_id": item.payload["ticket_id"],
                "verdict": verdict.to_dict(),
            }
            self._append({"type": "decision", "item_id": item.item_id, "result": result})
            return decided

    # -- preference ---------------------------------------------------------

    def submit_preference_choice(
        self,
        item_id: str,
        choice: str,
        reviewer: str,
        permutation: dict[str, Any] | None = None,
        notes: dict[str, Any] | None = None,
    ) -> ReviewQueueItem:
        if choice not in ("A", "B"):
            raise InvalidPayload(f"choice must be 'A' or 'B', got {choice!r}")
        with self._lock:
            if self._preference_closed:
                raise ExperimentClosed("preference experiment is closed")
            item = self.get(item_id)
            self._check_submittable(item, ItemKind.PREFERENCE, reviewer)
            result = {
                "item_id": item_id,
                "choice": choice,
                "reviewer": reviewer,
                "permutation": permutation or {},
                "notes": notes or {},
            }
            self._append({"type": "decision", "item_id": item_id, "result": result})
            return self.get(item_id)

    def close_preference(self) -> None:
        with self._lock:
            if not self._preference_closed:
                self._append({"type": "preference_close"})

    @property
    def preference_closed(self) -> bool:
        return self._preference_closed

    def preference_results(self) -> dict[str, Any]:
        """Unblind and aggregate. Only callable after close; this is the
        single place source labels leave the server."""
        if not self._preference_closed:
            raise ExperimentOpen("preference experiment still open")
        per_reviewer: dict[str, dict[str, int]] = {}
        pooled: dict[str, int] = {}
        unblinded = []
        for item in self.items(ItemKind.PREFERENCE):
            if not item.done or item.result is None:
                continue
            choice = item.result["choice"]
            source = item.hidden["source_a"] if choice == "A" else item.hidden["source_b"]
            reviewer = item.result["reviewer"]
            per_reviewer.setdefault(reviewer, {})
            per_reviewer[reviewer][source] = per_reviewer[reviewer].get(source, 0) + 1
            pooled[source] = pooled.get(source, 0) + 1
            unblinded.append(
                {
                    "item_id": item.item_id,
                    "choice": choice,
                    "chosen_source": source,
                    "source_a": item.hidden["source_a"],
                    "source_b": item.hidden["source_b"],
                    "reviewer": reviewer,
                }
            )

        def fractions(counts: dict[str, int]) -> dict[str, float]:
            total = sum(counts.values())
            return {src: n / total for src, n in sorted(counts.items())} if total else {}

        return {
            "per_reviewer": {
                rev: {"counts": counts, "fractions": fractions(counts), "n": sum(counts.values())}
                for rev, counts in sorted(per_reviewer.items())
            },
            "pooled": {"counts": pooled, "fractions": fractions(pooled), "n": sum(pooled.values())},
            "items": unblinded,
        }

    # -- stats ----------------------------------------------------------------

    def stats(self) -> dict[str, Any]:
        now = self.clock()
        queues: dict[str, dict[str, int]] = {}
        for kind in ItemKind:
            counts = {"open": 0, "claimed": 0, "done": 0}
            for item in self.items(kind):
                counts[item.status(now).value] += 1
            counts["total"] = sum(counts.values())
            queues[kind.value] = counts
        out: dict[str, Any] = {
            "queues": queues,
            "preference_closed": self._preference_closed,
        }
        try:
            out["verification"] = self.verification_stats()
        except NoDecisions:
            out["verification"] = None
        return out
