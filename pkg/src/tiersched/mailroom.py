"""In-process mail delivery, thread matching, and calendar invitation documents.

All email in the system flows through a Mailroom instance: delivery fans a
message out to every to/cc mailbox and appends it to a global transcript whose
order is the authority for "what happened when".
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .clock import iso_utc, parse_iso_utc

# ===== Errors =====


class UnknownRecipient(Exception):
    """Delivery addressed to a mailbox that was never registered."""


class InvalidInvitation(Exception):
    """Invitation fields violate the document contract (e.g. end <= start)."""


class MalformedDocument(Exception):
    """Invitation text that cannot be parsed back into an Invitation."""


# ===== Messages =====


@dataclass
class EmailMessage:
    """One email; attachments are (media_type, payload_text) pairs."""

    message_id: str
    from_addr: str
    to_addrs: List[str]
    subject: str
    body: str
    sent_at: datetime
    cc_addrs: List[str] = field(default_factory=list)
    in_reply_to: Optional[str] = None
    references: List[str] = field(default_factory=list)
    attachments: List[Tuple[str, str]] = field(default_factory=list)

    def recipients(self) -> List[str]:
        return list(self.to_addrs) + list(self.cc_addrs)

    def participants(self) -> List[str]:
        return [self.from_addr] + self.recipients()

    def to_record(self) -> Dict:
        """Mailbox JSONL record; attachments are delivery detail, not persisted."""
        return {
            "message_id": self.message_id,
            "in_reply_to": self.in_reply_to,
            "references": list(self.references),
            "from": self.from_addr,
            "to": list(self.to_addrs),
            "cc": list(self.cc_addrs),
            "subject": self.subject,
            "body": self.body,
            "sent_at": iso_utc(self.sent_at),
        }

    @staticmethod
    def from_record(rec: Dict) -> "EmailMessage":
        return EmailMessage(
            message_id=rec["message_id"],
            in_reply_to=rec.get("in_reply_to"),
            references=list(rec.get("references") or []),
            from_addr=rec["from"],
            to_addrs=list(rec["to"]),
            cc_addrs=list(rec.get("cc") or []),
            subject=rec["subject"],
            body=rec["body"],
            sent_at=parse_iso_utc(rec["sent_at"]),
        )


@dataclass
class DeliveryReceipt:
    message_id: str
    delivered_to: List[str]


# ===== Mailroom =====


class Mailroom:
    """Registry of mailboxes plus the ordered delivery transcript."""

    def __init__(self):
        self.mailboxes: Dict[str, List[EmailMessage]] = {}
        self.transcript: List[EmailMessage] = []
        self._last_sent: Dict[str, datetime] = {}

    def register(self, address: str) -> None:
        self.mailboxes.setdefault(address, [])

    def deliver(self, msg: EmailMessage) -> DeliveryReceipt:
        recipients = msg.recipients()
        if not recipients:
            raise UnknownRecipient("message has no recipients")
        for addr in recipients:
            if addr not in self.mailboxes:
                raise UnknownRecipient(addr)
        last = self._last_sent.get(msg.from_addr)
        if last is not None and msg.sent_at < last:
            raise ValueError(f"sent_at regressed for {msg.from_addr}")
        self._last_sent[msg.from_addr] = msg.sent_at
        for addr in recipients:
            self.mailboxes[addr].append(msg)
        self.transcript.append(msg)
        return DeliveryReceipt(message_id=msg.message_id, delivered_to=recipients)

    def save_mailboxes(self, directory: str) -> None:
        """One JSONL file per mailbox, delivery order preserved."""
        os.makedirs(directory, exist_ok=True)
        for address in sorted(self.mailboxes):
            path = os.path.join(directory, address.replace("@", "_at_") + ".jsonl")
            with open(path, "w", encoding="utf-8") as fh:
                for msg in self.mailboxes[address]:
                    fh.write(json.dumps(msg.to_record(), sort_keys=True) + "\n")

    @staticmethod
    def load_mailbox(path: str) -> List[EmailMessage]:
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(EmailMessage.from_record(json.loads(line)))
        return out


# ===== Thread matching =====


class MatchKind(str, Enum):
    HEADER_EXACT = "HeaderExact"
    SUBJECT_NORMALIZED = "SubjectNormalized"
    PARTICIPANT_OVERLAP = "ParticipantOverlap"
    NO_MATCH = "NoMatch"


@dataclass
class ThreadMatch:
    kind: MatchKind
    request_id: Optional[str] = None


_SUBJECT_PREFIX = re.compile(r"^(?:(?:re|fwd|fw)\s*:\s*)+", re.IGNORECASE)


def normalize_subject(subject: str) -> str:
    """Strip reply/forward prefixes, collapse whitespace, lowercase."""
    stripped = _SUBJECT_PREFIX.sub("", subject.strip())
    return re.sub(r"\s+", " ", stripped).strip().lower()


def match_thread(msg: EmailMessage, open_requests: Sequence) -> ThreadMatch:
    """Decide which open request a message belongs to.

    Each open request must expose request_id, message_ids, subject and
    participants. Only the header rung is trusted enough to skip human review;
    the caller routes weaker rungs through a classification microtask.
    """
    header_refs = set(msg.references)
    if msg.in_reply_to:
        header_refs.add(msg.in_reply_to)
    for req in open_requests:
        if header_refs & set(req.message_ids):
            return ThreadMatch(MatchKind.HEADER_EXACT, req.request_id)

    norm = normalize_subject(msg.subject)
    if norm:
        for req in open_requests:
            if normalize_subject(req.subject) == norm and msg.from_addr in req.participants:
                return ThreadMatch(MatchKind.SUBJECT_NORMALIZED, req.request_id)

    overlap = [req for req in open_requests if msg.from_addr in req.participants]
    if len(overlap) == 1:
        return ThreadMatch(MatchKind.PARTICIPANT_OVERLAP, overlap[0].request_id)

    return ThreadMatch(MatchKind.NO_MATCH, None)


# ===== Calendar invitation documents =====


class InvitationMethod(str, Enum):
    REQUEST = "REQUEST"
    CANCEL = "CANCEL"


@dataclass
class Invitation:
    uid: str
    summary: str
    start: datetime
    end: datetime
    organizer: str
    attendees: List[str] = field(default_factory=list)
    method: InvitationMethod = InvitationMethod.REQUEST


_PRODID = "-//tiersched//scheduling agent//EN"


def _ics_time(dt: datetime) -> str:
    if dt.tzinfo is None:
        raise InvalidInvitation("naive datetime in invitation")
    return dt.astimezone(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def _parse_ics_time(text: str) -> datetime:
    try:
        return datetime.strptime(text, "%Y%m%dT%H%M%SZ").replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise MalformedDocument(f"bad timestamp {text!r}") from exc


def _escape_text(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace(";", "\\;")
        .replace(",", "\\,")
        .replace("\n", "\\n")
    )


def _unescape_text(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({"n": "\n", "N": "\n"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def render_invitation(inv: Invitation) -> str:
    """Serialize an Invitation to its calendar document text (CRLF lines)."""
    if inv.end <= inv.start:
        raise InvalidInvitation("end must be after start")
    if not inv.uid:
        raise InvalidInvitation("uid required")
    lines = [
        "BEGIN:VCALENDAR",
        "VERSION:2.0",
        f"PRODID:{_PRODID}",
        f"METHOD:{inv.method.value}",
        "BEGIN:VEVENT",
        f"UID:{inv.uid}",
        f"DTSTART:{_ics_time(inv.start)}",
        f"DTEND:{_ics_time(inv.end)}",
        f"SUMMARY:{_escape_text(inv.summary)}",
        f"ORGANIZER:mailto:{inv.organizer}",
    ]
    for attendee in inv.attendees:
        lines.append(f"ATTENDEE:mailto:{attendee}")
    lines.extend(["END:VEVENT", "END:VCALENDAR"])
    return "\r\n".join(lines) + "\r\n"


def parse_invitation(text: str) -> Invitation:
    """Parse the document form produced by render_invitation."""
    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln != ""]
    if not lines or lines[0] != "BEGIN:VCALENDAR" or lines[-1] != "END:VCALENDAR":
        raise MalformedDocument("missing VCALENDAR envelope")
    if "BEGIN:VEVENT" not in lines or "END:VEVENT" not in lines:
        raise MalformedDocument("missing VEVENT")
    fields: Dict[str, str] = {}
    attendees: List[str] = []
    for line in lines:
        if ":" not in line:
            raise MalformedDocument(f"bad line {line!r}")
        key, value = line.split(":", 1)
        if key == "ATTENDEE":
            if not value.startswith("mailto:"):
                raise MalformedDocument("attendee must be a mailto")
            attendees.append(value[len("mailto:"):])
        elif key in ("UID", "DTSTART", "DTEND", "SUMMARY", "ORGANIZER", "METHOD"):
            if key in fields:
                raise MalformedDocument(f"duplicate {key}")
            fields[key] = value
    for required in ("UID", "DTSTART", "DTEND", "SUMMARY", "ORGANIZER", "METHOD"):
        if required not in fields:
            raise MalformedDocument(f"missing {required}")
    if not fields["ORGANIZER"].startswith("mailto:"):
        raise MalformedDocument("organizer must be a mailto")
    try:
        method = InvitationMethod(fields["METHOD"])
    except ValueError as exc:
        raise MalformedDocument(f"unknown method {fields['METHOD']!r}") from exc
    inv = Invitation(
        uid=fields["UID"],
        summary=_unescape_text(fields["SUMMARY"]),
        start=_parse_ics_time(fields["DTSTART"]),
        end=_parse_ics_time(fields["DTEND"]),
        organizer=fields["ORGANIZER"][len("mailto:"):],
        attendees=attendees,
        method=method,
    )
    if inv.end <= inv.start:
        raise MalformedDocument("end must be after start")
    return inv
