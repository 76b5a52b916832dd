"""Shared jury-ticket queue.

When the suggester/judge consensus protocol fails three rounds in a row,
the full transcript is escalated to a human jury. Tickets travel through a
directory shared by the introspection loop (producer/consumer) and the
review service (human front door): an append-only JSONL log of tickets plus
one verdict file per decided ticket. Both sides can crash and replay.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .model import MedevalError, dumps_canonical

MAX_ROUNDS = 3

TICKETS_FILE = "tickets.jsonl"
VERDICTS_DIR = "verdicts"


class TicketNotFound(MedevalError):
    pass


class TranscriptIncomplete(MedevalError):
    pass


class TicketStatus(str, enum.Enum):
    OPEN = "open"
    DECIDED = "decided"


@dataclass(frozen=True)
class JuryMessage:
    role: str  # "suggester" or "judge"
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("suggester", "judge"):
            raise MedevalError(f"unknown transcript role {self.role!r}")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "JuryMessage":
        return cls(role=d["role"], text=d["text"])


@dataclass(frozen=True)
class JuryVerdict:
    accept: bool
    text: str | None = None
    juror_id: str = ""
    note: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "accept": self.accept,
            "text": self.text,
            "juror_id": self.juror_id,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "JuryVerdict":
        return cls(
            accept=bool(d["accept"]),
            text=d.get("text"),
            juror_id=d.get("juror_id", ""),
            note=d.get("note"),
        )


@dataclass(frozen=True)
class JuryTicket:
    ticket_id: str
    record_id: str
    transcript: tuple[JuryMessage, ...]
    status: TicketStatus = TicketStatus.OPEN
    verdict: JuryVerdict | None = None

    def __post_init__(self) -> None:
        if self.rounds > MAX_ROUNDS:
            raise MedevalError(f"transcript has {self.rounds} rounds, max {MAX_ROUNDS}")
        if self.status is TicketStatus.DECIDED and self.verdict is None:
            raise MedevalError("decided ticket without a verdict")

    @property
    def rounds(self) -> int:
        return sum(1 for m in self.transcript if m.role == "suggester")

    @property
    def last_suggestion_text(self) -> str | None:
        for message in reversed(self.transcript):
            if message.role == "suggester":
                return message.text
        return None

    def decided(self, verdict: JuryVerdict) -> "JuryTicket":
        return JuryTicket(
            ticket_id=self.ticket_id,
            record_id=self.record_id,
            transcript=self.transcript,
            status=TicketStatus.DECIDED,
            verdict=verdict,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "ticket_id": self.ticket_id,
            "record_id": self.record_id,
            "transcript": [m.to_dict() for m in self.transcript],
            "status": self.status.value,
            "verdict": self.verdict.to_dict() if self.verdict else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "JuryTicket":
        verdict = d.get("verdict")
        return cls(
            ticket_id=d["ticket_id"],
            record_id=d["record_id"],
            transcript=tuple(JuryMessage.from_dict(m) for m in d["transcript"]),
            status=TicketStatus(d.get("status", "open")),
            verdict=JuryVerdict.from_dict(verdict) if verdict else None,
        )


def make_ticket(record_id: str, transcript: Sequence[JuryMessage]) -> JuryTicket:
    """Ticket ids are content hashes, so replaying the same consensus
    transcript yields the same ticket."""
    body = dumps_canonical(
        {"record_id": record_id, "transcript": [m.to_dict() for m in transcript]}
    )
    ticket_id = hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]
    return JuryTicket(ticket_id=ticket_id, record_id=record_id, transcript=tuple(transcript))


class JuryQueue:
    """Directory-backed ticket exchange: append-only log + verdict files."""

    def __init__(self, queue_dir: str | Path):
        self.root = Path(queue_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / VERDICTS_DIR).mkdir(exist_ok=True)

    @property
    def _log(self) -> Path:
        return self.root / TICKETS_FILE

    def publish(self, ticket: JuryTicket) -> None:
        """Append a ticket; re-publishing a known ticket_id is a no-op."""
        if ticket.ticket_id in self._published_ids():
            return
        with self._log.open("a", encoding="utf-8") as fh:
            fh.write(dumps_canonical(ticket.to_dict()))
            fh.write("\n")
            fh.flush()

    def _published_ids(self) -> set[str]:
        if not self._log.exists():
            return set()
        ids = set()
        with self._log.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    ids.add(json.loads(line)["ticket_id"])
        return ids

    def tickets(self) -> dict[str, JuryTicket]:
        """Replay the log and merge verdict files; later verdicts win."""
        out: dict[str, JuryTicket] = {}
        if self._log.exists():
            with self._log.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    ticket = JuryTicket.from_dict(json.loads(line))
                    out[ticket.ticket_id] = ticket
        for ticket_id, ticket in list(out.items()):
            verdict = self.verdict_for(ticket_id)
            if verdict is not None:
                out[ticket_id] = ticket.decided(verdict)
        return out

    def get(self, ticket_id: str) -> JuryTicket:
        ticket = self.tickets().get(ticket_id)
        if ticket is None:
            raise TicketNotFound(f"no ticket {ticket_id}")
        return ticket

    def open_tickets(self) -> list[JuryTicket]:
        return [t for t in self.tickets().values() if t.status is TicketStatus.OPEN]

    def verdict_for(self, ticket_id: str) -> JuryVerdict | None:
        path = self.root / VERDICTS_DIR / f"{ticket_id}.json"
        if not path.exists():
            return None
        return JuryVerdict.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def submit_verdict(self, ticket_id: str, verdict: JuryVerdict) -> JuryTicket:
        """Record a human verdict. The ticket must exist with a full
        three-round transcript."""
        ticket = self.tickets().get(ticket_id)
        if ticket is None:
            raise TicketNotFound(f"no ticket {ticket_id}")
        if ticket.rounds < MAX_ROUNDS:
            raise TranscriptIncomplete(
                f"ticket {ticket_id} has {ticket.rounds} rounds, needs {MAX_ROUNDS}"
            )
        path = self.root / VERDICTS_DIR / f"{ticket_id}.json"
        path.write_text(dumps_canonical(verdict.to_dict()) + "\n", encoding="utf-8")
        return ticket.decided(verdict)
