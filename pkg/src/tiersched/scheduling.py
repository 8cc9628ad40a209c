"""Meeting negotiation workflow: states, step actions, and ballot logic.

A meeting request lives entirely in its workflow instance blackboard. Step
actions read and update that state and emit action descriptors (send_email,
enqueue_task, install_timer, calendar_*) that the runtime executes after the
engine persists. Invitees are balloted one at a time with K options each;
silence walks a reminder/warning/cancel timer ladder; anything the automation
cannot settle becomes a tier-3 macrotask.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from . import automation, timeparse
from .calendar_store import CalendarStore, CalendarUnavailable, UnknownAccount
from .clock import iso_utc, next_business_open, parse_iso_utc
from .engine import StepContext, StepDef, StepOutcome, Trigger, WorkflowDefinition
from .mailroom import Invitation, InvitationMethod, render_invitation

# ===== Errors =====


class TerminalState(Exception):
    """Attempted transition out of Scheduled or Cancelled."""


class IncompleteConstraints(Exception):
    """propose_times called before duration and window are settled."""


# ===== Enums =====


class RequestState(str, Enum):
    INTAKE = "Intake"
    EXTRACTING = "Extracting"
    PROPOSING = "Proposing"
    AWAITING_RESPONSES = "AwaitingResponses"
    NEGOTIATING = "Negotiating"
    SCHEDULED = "Scheduled"
    CANCELLED = "Cancelled"
    ESCALATED_TIER3 = "EscalatedTier3"


TERMINAL_STATES = (RequestState.SCHEDULED, RequestState.CANCELLED)


class Confidence(str, Enum):
    AUTOMATED = "Automated"
    WORKER_CONFIRMED = "WorkerConfirmed"
    MISSING = "Missing"


class Modality(str, Enum):
    UNSPECIFIED = "Unspecified"
    IN_PERSON = "InPerson"
    PHONE = "Phone"
    VIDEO_CALL = "VideoCall"


class EscalationReason(str, Enum):
    MULTIPLE_OR_OUT_OF_BOUND = "MultipleOrOutOfBoundResponses"
    NO_ACCEPTABLE_TIME = "NoAcceptableTime"
    ATTENDEE_TIMEOUT = "AttendeeTimeout"
    OTHER = "Other"
    BALLOT_PROCESSING = "BallotProcessingEscalation"
    CALENDAR_INACCESSIBLE = "CalendarInaccessible"
    PROPOSE_TIMES = "ProposeTimesEscalation"
    DETERMINE_ATTENDEES = "DetermineAttendeesEscalation"


MACRO_ACTIONS = ("SendMessage", "SendInvitation", "Cancel", "UpdateInvitation", "PushBack")


# ===== Value types =====


@dataclass
class TimeOption:
    start: datetime
    end: datetime
    zone: str = "UTC"

    def to_dict(self) -> Dict:
        return {"start": iso_utc(self.start), "end": iso_utc(self.end), "zone": self.zone}

    @staticmethod
    def from_dict(d: Dict) -> "TimeOption":
        return TimeOption(start=parse_iso_utc(d["start"]), end=parse_iso_utc(d["end"]),
                          zone=d.get("zone", "UTC"))


@dataclass
class MeetingConstraints:
    duration_minutes: Optional[int] = None
    duration_conf: Confidence = Confidence.MISSING
    window_start: Optional[datetime] = None
    window_end: Optional[datetime] = None
    window_conf: Confidence = Confidence.MISSING
    modality: Modality = Modality.UNSPECIFIED
    modality_conf: Confidence = Confidence.MISSING
    needs_invitee_phone: bool = False

    def validate(self) -> None:
        if self.duration_minutes is not None and self.duration_minutes <= 0:
            raise ValueError("duration must be positive")
        if self.window_start and self.window_end and self.window_end <= self.window_start:
            raise ValueError("window end must be after start")
        if self.needs_invitee_phone and self.modality != Modality.PHONE:
            raise ValueError("invitee phone collection only applies to phone meetings")

    def complete(self) -> bool:
        return (self.duration_minutes is not None
                and self.window_start is not None and self.window_end is not None)

    def to_dict(self) -> Dict:
        return {
            "duration_minutes": self.duration_minutes,
            "duration_conf": self.duration_conf.value,
            "window_start": iso_utc(self.window_start) if self.window_start else None,
            "window_end": iso_utc(self.window_end) if self.window_end else None,
            "window_conf": self.window_conf.value,
            "modality": self.modality.value,
            "modality_conf": self.modality_conf.value,
            "needs_invitee_phone": self.needs_invitee_phone,
        }

    @staticmethod
    def from_dict(d: Dict) -> "MeetingConstraints":
        return MeetingConstraints(
            duration_minutes=d.get("duration_minutes"),
            duration_conf=Confidence(d.get("duration_conf", "Missing")),
            window_start=parse_iso_utc(d["window_start"]) if d.get("window_start") else None,
            window_end=parse_iso_utc(d["window_end"]) if d.get("window_end") else None,
            window_conf=Confidence(d.get("window_conf", "Missing")),
            modality=Modality(d.get("modality", "Unspecified")),
            modality_conf=Confidence(d.get("modality_conf", "Missing")),
            needs_invitee_phone=bool(d.get("needs_invitee_phone", False)),
        )


@dataclass
class Ballot:
    ballot_id: str
    invitee: str
    options: List[TimeOption]
    issued_at: datetime
    deadline: datetime
    reminders_sent: int = 0
    response_text: Optional[str] = None
    selections: Optional[List[bool]] = None
    resolved: bool = False
    message_ids: List[str] = field(default_factory=list)

    def validate(self) -> None:
        if not 0 <= self.reminders_sent <= 2:
            raise ValueError("reminders_sent must be 0..2")
        if self.selections is not None and len(self.selections) != len(self.options):
            raise ValueError("selections length must equal option count")

    def to_dict(self) -> Dict:
        return {
            "ballot_id": self.ballot_id,
            "invitee": self.invitee,
            "options": [o.to_dict() for o in self.options],
            "issued_at": iso_utc(self.issued_at),
            "deadline": iso_utc(self.deadline),
            "reminders_sent": self.reminders_sent,
            "response_text": self.response_text,
            "selections": self.selections,
            "resolved": self.resolved,
            "message_ids": list(self.message_ids),
        }

    @staticmethod
    def from_dict(d: Dict) -> "Ballot":
        return Ballot(
            ballot_id=d["ballot_id"], invitee=d["invitee"],
            options=[TimeOption.from_dict(o) for o in d["options"]],
            issued_at=parse_iso_utc(d["issued_at"]), deadline=parse_iso_utc(d["deadline"]),
            reminders_sent=int(d.get("reminders_sent", 0)),
            response_text=d.get("response_text"),
            selections=d.get("selections"),
            resolved=bool(d.get("resolved", False)),
            message_ids=list(d.get("message_ids") or []),
        )


@dataclass
class EscalationRecord:
    reason: EscalationReason
    source: str
    at: datetime
    details: str = ""

    def to_dict(self) -> Dict:
        return {"reason": self.reason.value, "source": self.source,
                "at": iso_utc(self.at), "details": self.details}

    @staticmethod
    def from_dict(d: Dict) -> "EscalationRecord":
        return EscalationRecord(reason=EscalationReason(d["reason"]), source=d["source"],
                                at=parse_iso_utc(d["at"]), details=d.get("details", ""))


@dataclass
class MeetingRequest:
    """Whole negotiation state; serialized into the instance blackboard."""

    request_id: str
    organizer: str
    assistant: str
    subject: str
    created_at: datetime
    state: RequestState = RequestState.INTAKE
    invitees: List[str] = field(default_factory=list)
    message_ids: List[str] = field(default_factory=list)
    thread: List[Dict] = field(default_factory=list)
    constraints: MeetingConstraints = field(default_factory=MeetingConstraints)
    pending_fields: Dict[str, str] = field(default_factory=dict)
    options: List[TimeOption] = field(default_factory=list)
    ballots: Dict[str, Ballot] = field(default_factory=dict)
    ballot_tasks: Dict[str, str] = field(default_factory=dict)
    phones: Dict[str, str] = field(default_factory=dict)
    phone_pending: List[str] = field(default_factory=list)
    agreed: Optional[TimeOption] = None
    event_uid: Optional[str] = None
    escalations: List[EscalationRecord] = field(default_factory=list)
    macro_open: Optional[str] = None
    keep_requested: bool = False
    warned: bool = False
    classify_task: Optional[str] = None
    intent: Optional[str] = None
    discarded: bool = False
    workflow_version: int = 1

    # ----- state machine -----

    def set_state(self, new_state: RequestState, force: bool = False) -> None:
        """Transition; terminal states only move under tier-3 authority."""
        if self.state in TERMINAL_STATES and new_state != self.state and not force:
            raise TerminalState(f"{self.request_id}: {self.state.value} is terminal")
        self.state = new_state

    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def participants(self) -> List[str]:
        return [self.organizer] + list(self.invitees)

    def assistant_signature(self) -> str:
        name = self.assistant.split("@")[0].capitalize()
        return f"Thanks,\n{name} (scheduling assistant for {self.organizer})"

    # ----- serialization -----

    def to_dict(self) -> Dict:
        return {
            "request_id": self.request_id,
            "organizer": self.organizer,
            "assistant": self.assistant,
            "subject": self.subject,
            "created_at": iso_utc(self.created_at),
            "state": self.state.value,
            "invitees": list(self.invitees),
            "message_ids": list(self.message_ids),
            "thread": list(self.thread),
            "constraints": self.constraints.to_dict(),
            "pending_fields": dict(self.pending_fields),
            "options": [o.to_dict() for o in self.options],
            "ballots": {k: b.to_dict() for k, b in self.ballots.items()},
            "ballot_tasks": dict(self.ballot_tasks),
            "phones": dict(self.phones),
            "phone_pending": list(self.phone_pending),
            "agreed": self.agreed.to_dict() if self.agreed else None,
            "event_uid": self.event_uid,
            "escalations": [e.to_dict() for e in self.escalations],
            "macro_open": self.macro_open,
            "keep_requested": self.keep_requested,
            "warned": self.warned,
            "classify_task": self.classify_task,
            "intent": self.intent,
            "discarded": self.discarded,
            "workflow_version": self.workflow_version,
        }

    @staticmethod
    def from_dict(d: Dict) -> "MeetingRequest":
        return MeetingRequest(
            request_id=d["request_id"],
            organizer=d["organizer"],
            assistant=d["assistant"],
            subject=d["subject"],
            created_at=parse_iso_utc(d["created_at"]),
            state=RequestState(d["state"]),
            invitees=list(d.get("invitees") or []),
            message_ids=list(d.get("message_ids") or []),
            thread=list(d.get("thread") or []),
            constraints=MeetingConstraints.from_dict(d.get("constraints") or {}),
            pending_fields=dict(d.get("pending_fields") or {}),
            options=[TimeOption.from_dict(o) for o in d.get("options") or []],
            ballots={k: Ballot.from_dict(b) for k, b in (d.get("ballots") or {}).items()},
            ballot_tasks=dict(d.get("ballot_tasks") or {}),
            phones=dict(d.get("phones") or {}),
            phone_pending=list(d.get("phone_pending") or []),
            agreed=TimeOption.from_dict(d["agreed"]) if d.get("agreed") else None,
            event_uid=d.get("event_uid"),
            escalations=[EscalationRecord.from_dict(e) for e in d.get("escalations") or []],
            macro_open=d.get("macro_open"),
            keep_requested=bool(d.get("keep_requested", False)),
            warned=bool(d.get("warned", False)),
            classify_task=d.get("classify_task"),
            intent=d.get("intent"),
            discarded=bool(d.get("discarded", False)),
            workflow_version=int(d.get("workflow_version", 1)),
        )


# ===== Pure operations =====


def propose_times(constraints: MeetingConstraints, calendar: CalendarStore,
                  organizer: str, k: int, grid_minutes: int) -> List[TimeOption]:
    """Earliest-first, pairwise non-overlapping options from organizer free slots."""
    if not constraints.complete():
        raise IncompleteConstraints("duration and window required")
    slots = calendar.free_slots(
        organizer, (constraints.window_start, constraints.window_end),
        constraints.duration_minutes, grid_minutes,
    )
    options: List[TimeOption] = []
    horizon: Optional[datetime] = None
    for start, end in slots:
        if horizon is not None and start < horizon:
            continue
        options.append(TimeOption(start=start, end=end))
        horizon = end
        if len(options) == k:
            break
    return options


def resolve_agreement(options: Sequence[TimeOption],
                      selections_by_invitee: Dict[str, List[bool]]) -> Optional[int]:
    """Index of the earliest option every invitee accepted; None if disjoint."""
    for idx in range(len(options)):
        if all(sels[idx] for sels in selections_by_invitee.values()):
            return idx
    return None


def process_ballot_response(ballot: Ballot, response_text: str,
                            model: Optional[automation.LogisticModel],
                            dictionary: Optional[Dict] = None,
                            assistant_tz: str = "UTC") -> Optional[Dict]:
    """Tier-1 attempt at a ballot reply; None means a human must interpret it."""
    if model is None:
        return None
    attrs = ballot_option_attrs(ballot)
    result = automation.classify_ballot_reply(model, response_text, attrs, dictionary)
    if not result["confident"]:
        return None
    return result


def ballot_option_attrs(ballot: Ballot) -> List[automation.OptionAttrs]:
    out = []
    for pos, opt in enumerate(ballot.options, start=1):
        out.append(automation.OptionAttrs(
            day_name=opt.start.strftime("%A"),
            date=opt.start.strftime("%Y-%m-%d"),
            clock=automation.clock_label(opt.start.hour, opt.start.minute),
            zone=opt.zone,
            position=pos,
            option_count=len(ballot.options),
        ))
    return out


def detect_modality(body: str) -> Tuple[Modality, bool]:
    """(modality, needs_invitee_phone) from request text keywords."""
    low = body.lower()
    if any(word in low for word in ("video call", "video chat", "zoom", "teams", "skype")):
        return Modality.VIDEO_CALL, False
    if any(word in low for word in ("phone", "call me", "give me a call")):
        needs = "number" in low
        return Modality.PHONE, needs
    if any(word in low for word in ("in person", "in-person", "my office", "conference room")):
        return Modality.IN_PERSON, False
    return Modality.UNSPECIFIED, False


def describe_time(opt: TimeOption) -> str:
    start = opt.start
    clock = automation.clock_label(start.hour, start.minute)
    return f"{start.strftime('%A, %B')} {start.day} at {clock} {opt.zone}"


def describe_option(opt: TimeOption, position: int) -> str:
    minutes = int((opt.end - opt.start).total_seconds() // 60)
    return f"{position}. {describe_time(opt)} ({minutes} minutes)"


# ===== Macrotask payload =====

MICRO_INSTRUCTIONS = {
    "ClassifyIntent": ("Read the email below and pick one option. Press \"I can't answer.\" "
                       "if neither fits."),
    "ExtractField": "Read the email below and answer the single question about it.",
    "InterpretBallotResponse": ("The email below answers a list of proposed meeting times. "
                                "Mark which options the sender accepted."),
}


def build_macrotask_payload(req: MeetingRequest, calendar_view: Dict,
                            reasons: List[str]) -> Dict:
    """Everything a tier-3 worker may see: full thread, collected state, a
    busy/free-only calendar view, and the invitation if one went out."""
    invitation_text = None
    if req.event_uid and req.agreed:
        invitation_text = render_invitation(Invitation(
            uid=req.event_uid, summary=meeting_summary(req), start=req.agreed.start,
            end=req.agreed.end, organizer=req.organizer, attendees=list(req.invitees),
        ))
    return {
        "request_id": req.request_id,
        "reasons": list(reasons),
        "instructions": ("Review the whole conversation and resolve the request with one "
                         "of the listed actions."),
        "thread": list(req.thread),
        "collected": {
            "state": req.state.value,
            "organizer": req.organizer,
            "invitees": list(req.invitees),
            "constraints": req.constraints.to_dict(),
            "options": [o.to_dict() for o in req.options],
            "ballots": {k: b.to_dict() for k, b in req.ballots.items()},
            "phones": dict(req.phones),
            "escalations": [e.to_dict() for e in req.escalations],
        },
        "invitation": invitation_text,
        "calendar_view": calendar_view,
        "actions": list(MACRO_ACTIONS),
    }


def meeting_summary(req: MeetingRequest) -> str:
    base = req.subject.strip() or f"Meeting with {req.organizer}"
    if req.phones:
        nums = ", ".join(f"{addr.split('@')[0]}: {num}" for addr, num in sorted(req.phones.items()))
        return f"{base} [phones: {nums}]"
    return base


# ===== Step actions =====
#
# Convention: every action loads the request from ctx.bb["request"], mutates a
# typed copy, and writes it back before returning. Side effects only leave as
# emitted descriptors; services are read-only inside actions.


def _load(ctx: StepContext) -> MeetingRequest:
    if "request" not in ctx.bb:
        ctx.bb["request"] = dict(ctx.bb["init"]["request"])
    return MeetingRequest.from_dict(ctx.bb["request"])


def _store(ctx: StepContext, req: MeetingRequest) -> None:
    ctx.bb["request"] = req.to_dict()


def _email_descriptor(ctx: StepContext, req: MeetingRequest, to: List[str], subject: str,
                      body: str, in_reply_to: Optional[str] = None,
                      references: Optional[List[str]] = None,
                      attachments: Optional[List] = None,
                      follow_up: bool = False) -> Tuple[str, Dict]:
    message_id = ctx.alloc("m")
    req.message_ids.append(message_id)
    record = {
        "message_id": message_id,
        "from": req.assistant,
        "to": list(to),
        "cc": [],
        "subject": subject,
        "body": body,
        "in_reply_to": in_reply_to,
        "references": list(references or []),
        "attachments": attachments or [],
        "request_id": req.request_id,
        "follow_up": follow_up,
    }
    req.thread.append({k: record[k] for k in
                       ("message_id", "from", "to", "cc", "subject", "body",
                        "in_reply_to", "references")})
    return ("send_email", record)


def _micro_task(ctx: StepContext, req: MeetingRequest, kind: str, email: Dict,
                extra: Optional[Dict] = None, field_name: Optional[str] = None) -> Tuple[str, Dict, str]:
    task_id = ctx.alloc("t")
    payload = {
        "email": {k: email.get(k) for k in ("message_id", "from", "to", "subject", "body")},
        "instructions": MICRO_INSTRUCTIONS[kind],
    }
    if extra:
        payload.update(extra)
    services = ctx.services
    suggestions = automation.assisted_suggestions(
        kind, payload, model=getattr(services, "model", None),
        dictionary=getattr(services, "dictionary", None),
        assistant_name=services.config.assistant_name,
    )
    descriptor = {
        "task_id": task_id,
        "tier": "micro",
        "kind": kind,
        "field": field_name,
        "request_id": req.request_id,
        "payload": payload,
        "suggestions": suggestions,
    }
    return ("enqueue_task", descriptor, task_id)


def _escalate(ctx: StepContext, req: MeetingRequest, reason: EscalationReason,
              source: str, details: str, emits: List) -> None:
    """Record the escalation; open a macrotask only if none is open."""
    req.escalations.append(EscalationRecord(reason=reason, source=source,
                                            at=ctx.now, details=details))
    if not req.terminal():
        req.set_state(RequestState.ESCALATED_TIER3)
    if req.macro_open:
        return
    try:
        view = ctx.services.calendar.anonymize(req.organizer)
    except (CalendarUnavailable, UnknownAccount):
        view = {"busy": []}
    task_id = ctx.alloc("t")
    reasons = sorted({e.reason.value for e in req.escalations})
    emits.append(("enqueue_task", {
        "task_id": task_id,
        "tier": "macro",
        "kind": "Macrotask",
        "field": None,
        "request_id": req.request_id,
        "payload": build_macrotask_payload(req, view, reasons),
        "suggestions": None,
    }))
    req.macro_open = task_id


def _install_timer(ctx: StepContext, req: MeetingRequest, name: str, at: datetime,
                   emits: List, **payload) -> None:
    event_id = ctx.alloc("e")
    emits.append(("install_timer", {
        "event_id": event_id,
        "at": iso_utc(at),
        "payload": dict(payload, timer=name),
    }))


def act_intake(ctx: StepContext) -> StepOutcome:
    """Queue the intent classification microtask for a fresh message."""
    req = _load(ctx)
    init = ctx.bb["init"]
    emits: List = []
    kind, descriptor, task_id = _micro_task(
        ctx, req, "ClassifyIntent", init["email"],
        extra={
            "options": ["new", "existing", "not_scheduling"],
            "match_kind": init.get("match_kind", "NoMatch"),
            "candidate_request_id": init.get("candidate_request_id"),
        },
    )
    emits.append((kind, descriptor))
    req.classify_task = task_id
    _store(ctx, req)
    return StepOutcome(emits=emits)


def act_intake_ack(ctx: StepContext) -> StepOutcome:
    """Intake variant that first acknowledges receipt to the organizer."""
    req = _load(ctx)
    ack = _email_descriptor(
        ctx, req, [req.organizer], f"Re: {req.subject}",
        ("Hi,\n\nGot it. I'll check calendars and follow up with everyone.\n\n"
         + req.assistant_signature()),
        in_reply_to=req.message_ids[0] if req.message_ids else None,
    )
    _store(ctx, req)
    rest = act_intake(ctx)
    rest.emits.insert(0, ack)
    return rest


def act_classify(ctx: StepContext) -> StepOutcome:
    """Apply the intent verdict; route, discard, or move to extraction."""
    req = _load(ctx)
    payload = ctx.event.payload
    if payload.get("task_id") != req.classify_task:
        return StepOutcome(rearm=True)
    emits: List = []
    skip: Tuple[str, ...] = ()
    if payload.get("cant_answer"):
        _escalate(ctx, req, EscalationReason.OTHER, "microtask",
                  "worker could not classify the message", emits)
        skip = ("s3_extract", "s4_gather", "s5_propose", "s6_ballots",
                "s7_negotiate", "s8_finalize", "s9_postwatch")
    else:
        verdict = payload["output"]["verdict"]
        req.intent = verdict
        if verdict == "not_scheduling":
            req.discarded = True
            emits.append(("discard_request", {"request_id": req.request_id}))
            skip = ("s3_extract", "s4_gather", "s5_propose", "s6_ballots",
                    "s7_negotiate", "s8_finalize", "s9_postwatch")
        elif verdict == "existing":
            target = payload["output"].get("request_id")
            req.discarded = True
            emits.append(("route_to_request", {
                "request_id": target,
                "email": ctx.bb["init"]["email"],
            }))
            emits.append(("discard_request", {"request_id": req.request_id}))
            skip = ("s3_extract", "s4_gather", "s5_propose", "s6_ballots",
                    "s7_negotiate", "s8_finalize", "s9_postwatch")
        else:
            req.set_state(RequestState.EXTRACTING)
    _store(ctx, req)
    return StepOutcome(emits=emits, skip=skip)


def act_extract(ctx: StepContext) -> StepOutcome:
    """Tier-1 field extraction; unresolved fields become microtasks."""
    req = _load(ctx)
    services = ctx.services
    cfg = services.config
    email = req.thread[0] if req.thread else ctx.bb["init"]["email"]
    body = email.get("body", "")
    message_id = email.get("message_id", "msg")
    expressions = timeparse.scan_message(body, message_id)
    picked = timeparse.select_meeting_fields(expressions, body, cfg.assistant_name)

    if picked.duration:
        req.constraints.duration_minutes = timeparse.resolve_duration_minutes(picked.duration.value)
        req.constraints.duration_conf = Confidence.AUTOMATED
    else:
        prefs = services.calendar.ensure(req.organizer).prefs
        req.constraints.duration_minutes = prefs.default_duration_minutes
        req.constraints.duration_conf = Confidence.AUTOMATED
    modality, needs_phone = detect_modality(body)
    req.constraints.modality = modality
    req.constraints.modality_conf = (Confidence.AUTOMATED if modality != Modality.UNSPECIFIED
                                     else Confidence.MISSING)
    req.constraints.needs_invitee_phone = needs_phone

    emits: List = []
    if picked.date:
        start, end = timeparse.resolve_date_window(
            picked.date.value, req.created_at, services.calendar.ensure(req.organizer).timezone)
        req.constraints.window_start = start
        req.constraints.window_end = end
        req.constraints.window_conf = Confidence.AUTOMATED
    else:
        req.constraints.window_conf = Confidence.MISSING
        kind, descriptor, task_id = _micro_task(
            ctx, req, "ExtractField", email,
            extra={"field": "window",
                   "question": "What date range does the sender want to meet in?"},
            field_name="window")
        emits.append((kind, descriptor))
        req.pending_fields["window"] = task_id

    if not req.invitees and _mentions_third_party(body):
        kind, descriptor, task_id = _micro_task(
            ctx, req, "ExtractField", email,
            extra={"field": "attendees",
                   "question": "Who should be invited? List email addresses."},
            field_name="attendees")
        emits.append((kind, descriptor))
        req.pending_fields["attendees"] = task_id

    skip: Tuple[str, ...] = ()
    if req.pending_fields:
        req.set_state(RequestState.EXTRACTING)
    else:
        req.set_state(RequestState.PROPOSING)
        skip = ("s4_gather",)
    _store(ctx, req)
    return StepOutcome(emits=emits, skip=skip)


def _mentions_third_party(body: str) -> bool:
    return bool(re.search(r"\bwith\s+[A-Z][a-z]+", body))


def act_gather(ctx: StepContext) -> StepOutcome:
    """Fold worker-confirmed field answers into the constraints."""
    req = _load(ctx)
    payload = ctx.event.payload
    task_id = payload.get("task_id")
    field_name = None
    for name, tid in req.pending_fields.items():
        if tid == task_id:
            field_name = name
            break
    if field_name is None:
        return StepOutcome(rearm=True)
    emits: List = []
    if payload.get("cant_answer"):
        reason = (EscalationReason.DETERMINE_ATTENDEES if field_name == "attendees"
                  else EscalationReason.OTHER)
        _escalate(ctx, req, reason, "microtask",
                  f"worker could not extract {field_name}", emits)
        _store(ctx, req)
        return StepOutcome(emits=emits, skip=(
            "s5_propose", "s6_ballots", "s7_negotiate", "s8_finalize", "s9_postwatch"))
    value = payload["output"]["value"]
    if field_name == "window":
        req.constraints.window_start = parse_iso_utc(value["start"])
        req.constraints.window_end = parse_iso_utc(value["end"])
        req.constraints.window_conf = Confidence.WORKER_CONFIRMED
    elif field_name == "duration":
        req.constraints.duration_minutes = int(value)
        req.constraints.duration_conf = Confidence.WORKER_CONFIRMED
    elif field_name == "attendees":
        req.invitees = [a for a in value if a not in (req.organizer, req.assistant)]
    del req.pending_fields[field_name]
    if req.pending_fields:
        _store(ctx, req)
        return StepOutcome(rearm=True)
    req.set_state(RequestState.PROPOSING)
    _store(ctx, req)
    return StepOutcome()


def act_propose(ctx: StepContext) -> StepOutcome:
    """Consult the organizer calendar and pick K candidate options."""
    req = _load(ctx)
    cfg = ctx.services.config
    emits: List = []
    try:
        options = propose_times(req.constraints, ctx.services.calendar, req.organizer,
                                cfg.ballot_options_k, cfg.grid_minutes)
    except CalendarUnavailable:
        _escalate(ctx, req, EscalationReason.CALENDAR_INACCESSIBLE, "automation",
                  "organizer calendar could not be consulted", emits)
        _store(ctx, req)
        return StepOutcome(emits=emits, skip=(
            "s6_ballots", "s7_negotiate", "s8_finalize", "s9_postwatch"))
    if not options:
        _escalate(ctx, req, EscalationReason.PROPOSE_TIMES, "automation",
                  "no free slots inside the requested window", emits)
        _store(ctx, req)
        return StepOutcome(emits=emits, skip=(
            "s6_ballots", "s7_negotiate", "s8_finalize", "s9_postwatch"))
    req.options = options
    if not req.invitees:
        # nothing to negotiate: book the earliest option directly
        req.agreed = options[0]
        _store(ctx, req)
        return StepOutcome(emits=emits, skip=("s6_ballots", "s7_negotiate"))
    req.set_state(RequestState.AWAITING_RESPONSES)
    _store(ctx, req)
    return StepOutcome(emits=emits)


def act_ballots(ctx: StepContext) -> StepOutcome:
    """Send one ballot email per invitee and arm the follow-up timers."""
    req = _load(ctx)
    if not req.invitees or req.terminal() or req.state == RequestState.ESCALATED_TIER3:
        return StepOutcome()
    cfg = ctx.services.config
    emits: List = []
    for invitee in sorted(req.invitees):
        ballot = Ballot(
            ballot_id=ctx.alloc("b"),
            invitee=invitee,
            options=list(req.options),
            issued_at=ctx.now,
            deadline=ctx.now + timedelta(hours=cfg.cancel_hours),
        )
        lines = "\n".join(describe_option(o, i) for i, o in enumerate(ballot.options, start=1))
        body = (
            f"Hi,\n\n{req.organizer} asked me to find "
            f"{req.constraints.duration_minutes} minutes for \"{req.subject}\". "
            f"Which of these times work for you?\n\n{lines}\n\n"
            "Reply to this email with the options that work (for example \"the first "
            "option\" or \"none of these work\").\n\n"
            f"{req.assistant_signature()}"
        )
        descriptor = _email_descriptor(ctx, req, [invitee],
                                       f"Meeting times: {req.subject}", body)
        ballot.message_ids.append(descriptor[1]["message_id"])
        emits.append(descriptor)
        req.ballots[invitee] = ballot

        base = ballot.issued_at
        t1 = next_business_open(base + timedelta(hours=cfg.reminder1_hours),
                                cfg.business_start_hour, cfg.business_end_hour)
        t2 = max(next_business_open(base + timedelta(hours=cfg.reminder2_hours),
                                    cfg.business_start_hour, cfg.business_end_hour), t1)
        tw = max(next_business_open(base + timedelta(hours=cfg.warning_hours),
                                    cfg.business_start_hour, cfg.business_end_hour), t2)
        tc = max(base + timedelta(hours=cfg.cancel_hours), tw + timedelta(hours=1))
        _install_timer(ctx, req, "reminder1", t1, emits, invitee=invitee)
        _install_timer(ctx, req, "reminder2", t2, emits, invitee=invitee)
        _install_timer(ctx, req, "warning", tw, emits, invitee=invitee)
        _install_timer(ctx, req, "cancel", tc, emits, invitee=invitee)
    _store(ctx, req)
    return StepOutcome(emits=emits)


def act_negotiate(ctx: StepContext) -> StepOutcome:
    """Drive the ballot loop: replies, interpret-task results, and timers."""
    req = _load(ctx)
    kind = ctx.event.kind
    emits: List = []
    try:
        if kind == "email_event":
            done = _on_email(ctx, req, ctx.event.payload["email"], emits)
        elif kind == "timer":
            done = _on_timer(ctx, req, ctx.event.payload, emits)
        elif kind == "task_result":
            done = _on_ballot_task(ctx, req, ctx.event.payload, emits)
        else:
            done = False
    finally:
        _store(ctx, req)
    if done == "cancelled":
        return StepOutcome(emits=emits, skip=("s8_finalize", "s9_postwatch"))
    if done is True:
        return StepOutcome(emits=emits)
    return StepOutcome(emits=emits, rearm=True)


def _on_email(ctx: StepContext, req: MeetingRequest, email: Dict, emits: List):
    sender = email.get("from")
    body = email.get("body", "")
    if req.terminal():
        return False
    if sender == req.organizer:
        if req.warned and not req.keep_requested and "keep" in body.lower():
            req.keep_requested = True
            _escalate(ctx, req, EscalationReason.ATTENDEE_TIMEOUT, "timer",
                      "organizer kept the meeting after an invitee timeout", emits)
        return False
    if sender not in req.invitees:
        return False
    if req.phone_pending and sender in req.phone_pending:
        number = _extract_phone(body)
        if number:
            req.phones[sender] = number
            req.phone_pending.remove(sender)
            if not req.phone_pending:
                return _finish_agreement(ctx, req, emits)
        return False
    ballot = req.ballots.get(sender)
    if ballot is None:
        return False
    if ballot.resolved:
        _escalate(ctx, req, EscalationReason.MULTIPLE_OR_OUT_OF_BOUND, "email",
                  f"{sender} replied again after selections were recorded", emits)
        return False
    if ballot.response_text is not None:
        # second reply while the first is still being interpreted
        _escalate(ctx, req, EscalationReason.MULTIPLE_OR_OUT_OF_BOUND, "email",
                  f"{sender} sent multiple replies to one ballot", emits)
        return False
    ballot.response_text = body
    tier1 = process_ballot_response(ballot, body, getattr(ctx.services, "model", None),
                                    getattr(ctx.services, "dictionary", None))
    if tier1 is not None:
        return _record_selections(ctx, req, ballot, tier1["selections"], emits)
    kind, descriptor, task_id = _micro_task(
        ctx, req, "InterpretBallotResponse", email,
        extra={"options": [a.to_dict() for a in ballot_option_attrs(ballot)],
               "ballot_id": ballot.ballot_id})
    emits.append((kind, descriptor))
    req.ballot_tasks[task_id] = sender
    return False


def _on_ballot_task(ctx: StepContext, req: MeetingRequest, payload: Dict, emits: List):
    task_id = payload.get("task_id")
    invitee = req.ballot_tasks.pop(task_id, None)
    if invitee is None:
        return False
    if payload.get("cant_answer"):
        _escalate(ctx, req, EscalationReason.BALLOT_PROCESSING, "microtask",
                  f"worker could not interpret the reply from {invitee}", emits)
        return False
    ballot = req.ballots[invitee]
    if ballot.resolved:
        return False
    return _record_selections(ctx, req, ballot, payload["output"]["selections"], emits)


def _on_timer(ctx: StepContext, req: MeetingRequest, payload: Dict, emits: List):
    name = payload.get("timer")
    invitee = payload.get("invitee")
    if req.terminal():
        return False
    if name == "phone_wait":
        if req.phone_pending:
            _escalate(ctx, req, EscalationReason.ATTENDEE_TIMEOUT, "timer",
                      "invitee never sent a phone number", emits)
        return False
    ballot = req.ballots.get(invitee)
    if ballot is None or ballot.resolved:
        return False
    if name in ("reminder1", "reminder2"):
        if req.state == RequestState.ESCALATED_TIER3 or req.keep_requested:
            return False
        if ballot.reminders_sent >= 2:
            return False
        ballot.reminders_sent += 1
        lines = "\n".join(describe_option(o, i) for i, o in enumerate(ballot.options, start=1))
        emits.append(_email_descriptor(
            ctx, req, [invitee], f"Re: Meeting times: {req.subject}",
            (f"Hi,\n\nJust checking in. Could you let me know which of these times "
             f"work for you?\n\n{lines}\n\n{req.assistant_signature()}"),
            in_reply_to=ballot.message_ids[0] if ballot.message_ids else None,
            follow_up=True,
        ))
        return False
    if name == "warning":
        if req.state == RequestState.ESCALATED_TIER3 or req.keep_requested:
            return False
        req.warned = True
        emits.append(_email_descriptor(
            ctx, req, [req.organizer], f"Re: {req.subject}",
            (f"Hi,\n\nI haven't heard back from {invitee} about \"{req.subject}\". "
             "I'll cancel this meeting request soon unless you reply with "
             "\"keep\" to keep it open.\n\n" + req.assistant_signature()),
            in_reply_to=req.message_ids[0] if req.message_ids else None,
            follow_up=True,
        ))
        return False
    if name == "cancel":
        if req.keep_requested or req.state == RequestState.ESCALATED_TIER3:
            return False
        req.set_state(RequestState.CANCELLED)
        emits.append(_email_descriptor(
            ctx, req, [req.organizer], f"Re: {req.subject}",
            (f"Hi,\n\nI never heard back from {invitee}, so I've cancelled the "
             f"request to meet (\"{req.subject}\").\n\n" + req.assistant_signature()),
            in_reply_to=req.message_ids[0] if req.message_ids else None,
        ))
        return "cancelled"
    return False


def _record_selections(ctx: StepContext, req: MeetingRequest, ballot: Ballot,
                       selections: List[bool], emits: List):
    ballot.selections = [bool(s) for s in selections]
    ballot.resolved = True
    ballot.validate()
    if req.macro_open:
        # an expert owns this request now; record the answer but do not act
        return False
    if any(not b.resolved for b in req.ballots.values()):
        req.set_state(RequestState.NEGOTIATING)
        return False
    chosen = resolve_agreement(req.options,
                               {b.invitee: b.selections for b in req.ballots.values()})
    if chosen is None:
        _escalate(ctx, req, EscalationReason.NO_ACCEPTABLE_TIME, "automation",
                  "no option was accepted by every invitee", emits)
        return False
    req.agreed = req.options[chosen]
    return _finish_agreement(ctx, req, emits)


def _finish_agreement(ctx: StepContext, req: MeetingRequest, emits: List):
    """Agreement reached; collect phone numbers first when required."""
    cfg = ctx.services.config
    if req.constraints.needs_invitee_phone:
        missing = [i for i in sorted(req.invitees) if i not in req.phones]
        if missing and not req.phone_pending:
            req.phone_pending = missing
            for invitee in missing:
                emits.append(_email_descriptor(
                    ctx, req, [invitee], f"Re: Meeting times: {req.subject}",
                    ("Hi,\n\nOne more thing: could you send me the phone number to "
                     "reach you at for this call?\n\n" + req.assistant_signature()),
                    in_reply_to=req.ballots[invitee].message_ids[0]
                    if req.ballots.get(invitee) and req.ballots[invitee].message_ids else None,
                ))
            _install_timer(ctx, req, "phone_wait",
                           ctx.now + timedelta(hours=cfg.phone_wait_hours), emits)
            return False
        if missing:
            return False
    return True


def _extract_phone(body: str) -> Optional[str]:
    m = re.search(r"\+?\d[\d\-\s().]{6,}\d", body)
    return m.group(0).strip() if m else None


def act_finalize(ctx: StepContext) -> StepOutcome:
    """Book the agreed option and notify every party individually."""
    req = _load(ctx)
    if req.terminal() or req.discarded or req.agreed is None or req.macro_open:
        return StepOutcome()
    emits = _finalize_emits(ctx, req)
    _store(ctx, req)
    return StepOutcome(emits=emits)


def _finalize_emits(ctx: StepContext, req: MeetingRequest) -> List:
    emits: List = []
    uid = req.event_uid or ctx.alloc("uid")
    req.event_uid = uid
    summary = meeting_summary(req)
    emits.append(("calendar_create", {
        "subscriber_id": req.organizer,
        "uid": uid,
        "summary": summary,
        "start": iso_utc(req.agreed.start),
        "end": iso_utc(req.agreed.end),
        "attendees": list(req.invitees),
    }))
    invitation = Invitation(uid=uid, summary=summary, start=req.agreed.start,
                            end=req.agreed.end, organizer=req.organizer,
                            attendees=list(req.invitees))
    ics = render_invitation(invitation)
    when = describe_time(req.agreed)
    for recipient in [req.organizer] + sorted(req.invitees):
        emits.append(_email_descriptor(
            ctx, req, [recipient], f"Scheduled: {req.subject}",
            (f"Hi,\n\nThis meeting is booked for {when}. A calendar invitation "
             "is attached.\n\n" + req.assistant_signature()),
            attachments=[["text/calendar", ics]],
        ))
    req.set_state(RequestState.SCHEDULED)
    return emits


def act_postwatch(ctx: StepContext) -> StepOutcome:
    """After scheduling, any participant reply goes straight to tier 3."""
    req = _load(ctx)
    email = ctx.event.payload.get("email", {})
    sender = email.get("from")
    emits: List = []
    if sender in req.participants():
        _escalate(ctx, req, EscalationReason.MULTIPLE_OR_OUT_OF_BOUND, "email",
                  f"{sender} wrote again after the meeting was scheduled", emits)
        _store(ctx, req)
    return StepOutcome(emits=emits, rearm=True)


def act_oversee(ctx: StepContext) -> StepOutcome:
    """Dependency-free umbrella step: records thread traffic and applies
    tier-3 macro actions at any phase of the workflow."""
    if ctx.event.kind == "email_event":
        req = _load(ctx)
        email = ctx.event.payload["email"]
        if email.get("message_id") not in req.message_ids:
            req.message_ids.append(email["message_id"])
            req.thread.append({k: email.get(k) for k in
                               ("message_id", "from", "to", "cc", "subject", "body",
                                "in_reply_to", "references")})
            _store(ctx, req)
        return StepOutcome(rearm=True)
    req = _load(ctx)
    action = ctx.event.payload["action"]
    emits: List = []
    skip: Tuple[str, ...] = ()
    atype = action["type"]
    if (ctx.event.payload.get("closes", True)
            and ctx.event.payload.get("task_id") == req.macro_open):
        req.macro_open = None
    if atype == "SendMessage":
        to = action.get("to") or req.organizer
        recipients = list(to) if isinstance(to, list) else [to]
        emits.append(_email_descriptor(
            ctx, req, recipients, f"Re: {req.subject}", action["body"],
            in_reply_to=req.message_ids[0] if req.message_ids else None,
        ))
    elif atype == "SendInvitation":
        req.agreed = _action_option(req, action)
        emits.extend(_finalize_emits(ctx, req))
        skip = ("s7_negotiate", "s8_finalize")
    elif atype == "UpdateInvitation":
        req.agreed = _action_option(req, action)
        summary = meeting_summary(req)
        emits.append(("calendar_update", {
            "subscriber_id": req.organizer,
            "uid": req.event_uid,
            "start": iso_utc(req.agreed.start),
            "end": iso_utc(req.agreed.end),
        }))
        ics = render_invitation(Invitation(
            uid=req.event_uid, summary=summary, start=req.agreed.start,
            end=req.agreed.end, organizer=req.organizer, attendees=list(req.invitees)))
        when = describe_time(req.agreed)
        for recipient in [req.organizer] + sorted(req.invitees):
            emits.append(_email_descriptor(
                ctx, req, [recipient], f"Updated: {req.subject}",
                (f"Hi,\n\nThis meeting moved to {when}. An updated invitation is "
                 "attached.\n\n" + req.assistant_signature()),
                attachments=[["text/calendar", ics]],
            ))
    elif atype == "Cancel":
        was_scheduled = req.state == RequestState.SCHEDULED and req.event_uid
        if was_scheduled:
            emits.append(("calendar_cancel", {
                "subscriber_id": req.organizer,
                "uid": req.event_uid,
            }))
            ics = render_invitation(Invitation(
                uid=req.event_uid, summary=meeting_summary(req), start=req.agreed.start,
                end=req.agreed.end, organizer=req.organizer, attendees=list(req.invitees),
                method=InvitationMethod.CANCEL))
            recipients = [req.organizer] + sorted(req.invitees)
            attachments = [["text/calendar", ics]]
        else:
            recipients = [req.organizer]
            attachments = None
        req.set_state(RequestState.CANCELLED, force=True)
        for recipient in recipients:
            emits.append(_email_descriptor(
                ctx, req, [recipient], f"Cancelled: {req.subject}",
                ("Hi,\n\nThis meeting request has been cancelled.\n\n"
                 + req.assistant_signature()),
                attachments=attachments,
            ))
        skip = ("s7_negotiate", "s8_finalize", "s9_postwatch")
    _store(ctx, req)
    return StepOutcome(emits=emits, rearm=True, skip=skip)


def _action_option(req: MeetingRequest, action: Dict) -> TimeOption:
    if "option_index" in action and action["option_index"] is not None:
        return req.options[int(action["option_index"])]
    return TimeOption(start=parse_iso_utc(action["start"]), end=parse_iso_utc(action["end"]))


# ===== Definition =====


def build_definition(version: int) -> WorkflowDefinition:
    """The negotiation DAG; v2 adds an organizer acknowledgment at intake."""
    intake_action = "intake" if version == 1 else "intake_ack"
    steps = (
        StepDef("s0_oversee", (), Trigger.await_event("macro_action", "email_event"), "oversee"),
        StepDef("s1_intake", (), Trigger.immediate(), intake_action),
        StepDef("s2_classify", ("s1_intake",), Trigger.await_event("task_result"), "classify"),
        StepDef("s3_extract", ("s2_classify",), Trigger.immediate(), "extract"),
        StepDef("s4_gather", ("s3_extract",), Trigger.await_event("task_result"), "gather"),
        StepDef("s5_propose", ("s4_gather",), Trigger.immediate(), "propose"),
        StepDef("s6_ballots", ("s5_propose",), Trigger.immediate(), "ballots"),
        StepDef("s7_negotiate", ("s6_ballots",),
                Trigger.await_event("email_event", "timer", "task_result"), "negotiate"),
        StepDef("s8_finalize", ("s7_negotiate",), Trigger.immediate(), "finalize"),
        StepDef("s9_postwatch", ("s8_finalize",), Trigger.await_event("email_event"), "postwatch"),
    )
    if version not in (1, 2):
        raise ValueError(f"unknown workflow version {version}")
    return WorkflowDefinition(version=version, steps=steps)


def build_actions() -> Dict:
    return {
        "oversee": act_oversee,
        "intake": act_intake,
        "intake_ack": act_intake_ack,
        "classify": act_classify,
        "extract": act_extract,
        "gather": act_gather,
        "propose": act_propose,
        "ballots": act_ballots,
        "negotiate": act_negotiate,
        "finalize": act_finalize,
        "postwatch": act_postwatch,
    }
