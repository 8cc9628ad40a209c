"""Runtime that wires the workflow engine to mail, tasks, timers, and calendars.

The agent is the only component with side effects: engine step actions emit
descriptors, and the agent executes them after the engine has persisted. Every
inbound email is either routed to an open request (trusted header match) or
becomes a new workflow instance whose first microtask confirms the intent.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from . import automation
from .calendar_store import CalendarEvent, CalendarStore, UnknownEvent
from .clock import SimClock, iso_utc, parse_iso_utc
from .config import AgentConfig
from .engine import Engine, Event
from .mailroom import EmailMessage, Mailroom, MatchKind, match_thread
from .scheduling import MeetingRequest, build_actions, build_definition
from .taskboard import Task, Taskboard, Tier

# ===== Services =====


@dataclass
class Services:
    """Read-only bundle handed to step actions."""

    config: AgentConfig
    calendar: CalendarStore
    model: Optional[automation.LogisticModel] = None
    dictionary: Optional[Dict] = None


class _RequestView:
    """Thin read model over an instance blackboard for thread matching."""

    def __init__(self, data: Dict):
        self.request_id = data["request_id"]
        self.message_ids = list(data.get("message_ids") or [])
        self.subject = data.get("subject", "")
        self.participants = ([data["organizer"]] + list(data.get("invitees") or []))
        self.state = data.get("state")
        self.discarded = bool(data.get("discarded", False))
        self.workflow_version = int(data.get("workflow_version", 1))
        self.data = data


# ===== Agent =====


class SchedulingAgent:
    """Deterministic scheduling runtime over a simulated clock."""

    def __init__(self, config: AgentConfig, data_dir: str, clock: SimClock,
                 model: Optional[automation.LogisticModel] = None,
                 dictionary: Optional[Dict] = None):
        self.config = config
        self.data_dir = data_dir
        self.clock = clock
        os.makedirs(data_dir, exist_ok=True)
        self.mailroom = Mailroom()
        self.mailroom.register(config.assistant_address)
        self.calendar = CalendarStore(os.path.join(data_dir, "calendar.jsonl"))
        self.services = Services(config=config, calendar=self.calendar,
                                 model=model, dictionary=dictionary)
        self.engine = Engine(os.path.join(data_dir, "snapshots"), build_actions(),
                             self.services)
        self.engine.register(build_definition(1))
        self.taskboard = Taskboard(clock, lease_seconds=config.lease_minutes * 60.0,
                                   save_path=os.path.join(data_dir, "taskboard.jsonl"))
        self.taskboard.event_sink = self._on_task_event
        self.taskboard.corpus_sink = self._on_corpus_row
        self.taskboard.state_probe = self.request_state
        self.taskboard.macro_validator = self._macro_semantics
        self.corpus_path = os.path.join(data_dir, "ballot_corpus.jsonl")
        self._timers_path = os.path.join(data_dir, "timers.jsonl")
        self._timers_fh = None
        self.timers: List[Dict] = []
        self._timer_at: Dict[int, object] = {}
        self._timer_seq = 0
        self._outbox_path = os.path.join(data_dir, "outbox.jsonl")
        self._outbox_fh = None
        self.sent_log: List[Dict] = []
        self.email_out: Optional[Callable[[EmailMessage, Dict], None]] = None
        self._resume()

    # ----- lifecycle -----

    def _resume(self) -> None:
        self.calendar.load()
        self.taskboard.load()
        if os.path.exists(self._outbox_path):
            with open(self._outbox_path, "r", encoding="utf-8") as fh:
                self.sent_log = [json.loads(raw) for raw in fh if raw.strip()]
        if os.path.exists(self._timers_path):
            alive: Dict[int, Dict] = {}
            with open(self._timers_path, "r", encoding="utf-8") as fh:
                for raw in fh:
                    raw = raw.strip()
                    if not raw:
                        continue
                    line = json.loads(raw)
                    if "add" in line:
                        alive[line["add"]["seq"]] = line["add"]
                        self._timer_seq = max(self._timer_seq, line["add"]["seq"])
                    else:
                        alive.pop(line["fire"], None)
            self.timers = [alive[seq] for seq in sorted(alive)]
            for entry in self.timers:
                self._timer_at[entry["seq"]] = parse_iso_utc(entry["at"])
        known = self.engine.known_instance_ids()
        versions = set()
        for iid in known:
            with open(self.engine._snapshot_path(iid), "r", encoding="utf-8") as fh:
                versions.add(json.load(fh)["snapshot"]["version"])
        for version in sorted(v for v in versions if v not in self.engine.definitions):
            self.adopt_version(version)
        for iid in known:
            self.engine.resume(iid)
        for iid in known:
            stranded = self.engine.pending_actions(iid)
            if stranded:
                self._execute(iid, stranded)

    def adopt_version(self, version: int) -> None:
        """Register a newer workflow definition; running requests keep theirs."""
        if version not in self.engine.definitions:
            self.engine.register(build_definition(version))

    # ----- request index -----

    def _view(self, instance_id: str) -> Optional[_RequestView]:
        inst = self.engine.instances.get(instance_id)
        if inst is None:
            return None
        data = inst.blackboard.get("request") or inst.blackboard.get("init", {}).get("request")
        if not data:
            return None
        return _RequestView(data)

    def request_ids(self) -> List[str]:
        return sorted(self.engine.instances)

    def match_views(self) -> List[_RequestView]:
        """Requests a new message may belong to; terminal ones still match so
        late replies reach the post-schedule watch instead of a new intake."""
        out = []
        for iid in self.request_ids():
            view = self._view(iid)
            if view and not view.discarded:
                out.append(view)
        return out

    def request_state(self, request_id: str) -> Optional[str]:
        view = self._view(request_id)
        return view.state if view else None

    def _next_request_id(self) -> str:
        highest = 0
        for iid in self.engine.instances:
            if iid.startswith("req-"):
                try:
                    highest = max(highest, int(iid.split("-")[1]))
                except (IndexError, ValueError):
                    continue
        return f"req-{highest + 1:04d}"

    # ----- inbound mail -----

    def receive_email(self, msg: EmailMessage) -> Dict:
        """Deliver, thread-match, and either route or open a new request."""
        for addr in [msg.from_addr] + msg.recipients():
            self.mailroom.register(addr)
        if msg.sent_at > self.clock.now():
            self.clock.advance_to(msg.sent_at)
        self.mailroom.deliver(msg)
        match = match_thread(msg, self.match_views())
        if match.kind == MatchKind.HEADER_EXACT:
            event = Event(event_id=msg.message_id, kind="email_event",
                          instance_id=match.request_id, occurred_at=msg.sent_at,
                          payload={"email": msg.to_record()})
            self._execute(match.request_id, self.engine.dispatch(event))
            return {"routed_to": match.request_id, "match": match.kind.value}
        return self._open_request(msg, match.kind.value, match.request_id)

    def _open_request(self, msg: EmailMessage, match_kind: str,
                      candidate: Optional[str]) -> Dict:
        request_id = self._next_request_id()
        version = self.engine.latest_version()
        invitees = [a for a in msg.recipients() if a != self.config.assistant_address]
        request = MeetingRequest(
            request_id=request_id,
            organizer=msg.from_addr,
            assistant=self.config.assistant_address,
            subject=msg.subject,
            created_at=msg.sent_at,
            invitees=invitees,
            workflow_version=version,
        )
        event = Event(
            event_id=msg.message_id, kind="email_event", instance_id=request_id,
            occurred_at=msg.sent_at,
            payload={"email": msg.to_record(), "request": request.to_dict(),
                     "match_kind": match_kind, "candidate_request_id": candidate},
        )
        self.engine.start_instance(event, instance_id=request_id, version=version)
        self._execute(request_id, self.engine.dispatch(event))
        return {"routed_to": request_id, "match": match_kind, "new": True}

    # ----- effect execution -----

    def _execute(self, instance_id: str, released: List[Dict]) -> None:
        for entry in sorted(released, key=lambda e: e["seq"]):
            kind, payload = entry["kind"], entry["payload"]
            if kind == "send_email":
                self._send_email(instance_id, payload)
            elif kind == "enqueue_task":
                descriptor = dict(payload, instance_id=instance_id)
                self.taskboard.enqueue(descriptor)
            elif kind == "install_timer":
                self._timer_seq += 1
                entry = {
                    "seq": self._timer_seq, "event_id": payload["event_id"],
                    "at": payload["at"], "instance_id": instance_id,
                    "payload": payload["payload"],
                }
                self.timers.append(entry)
                self._timer_at[entry["seq"]] = parse_iso_utc(entry["at"])
                self._journal_timer({"add": entry})
            elif kind == "calendar_create":
                self.calendar.ensure(payload["subscriber_id"])
                self.calendar.add_event(payload["subscriber_id"], CalendarEvent(
                    uid=payload["uid"], summary=payload["summary"],
                    start=parse_iso_utc(payload["start"]), end=parse_iso_utc(payload["end"]),
                    attendees=list(payload.get("attendees") or []),
                ))
            elif kind == "calendar_update":
                try:
                    self.calendar.update_event(payload["subscriber_id"], payload["uid"],
                                               parse_iso_utc(payload["start"]),
                                               parse_iso_utc(payload["end"]))
                except UnknownEvent:
                    pass
            elif kind == "calendar_cancel":
                try:
                    self.calendar.cancel_event(payload["subscriber_id"], payload["uid"])
                except UnknownEvent:
                    pass
            elif kind == "route_to_request":
                self._route(payload["request_id"], payload["email"])
            elif kind == "discard_request":
                pass  # state already lives on the request; nothing to execute

    def _send_email(self, instance_id: str, record: Dict) -> None:
        view = self._view(instance_id)
        msg = EmailMessage(
            message_id=record["message_id"],
            from_addr=record["from"],
            to_addrs=list(record["to"]),
            cc_addrs=list(record.get("cc") or []),
            subject=record["subject"],
            body=record["body"],
            sent_at=self.clock.now(),
            in_reply_to=record.get("in_reply_to"),
            references=list(record.get("references") or []),
            attachments=[tuple(a) for a in record.get("attachments") or []],
        )
        for addr in msg.recipients():
            self.mailroom.register(addr)
        self.mailroom.deliver(msg)
        logged = dict(msg.to_record())
        logged["request_id"] = record.get("request_id")
        logged["workflow_version"] = view.workflow_version if view else None
        logged["follow_up"] = bool(record.get("follow_up"))
        self.sent_log.append(logged)
        if self._outbox_fh is None:
            self._outbox_fh = open(self._outbox_path, "a", encoding="utf-8")
        self._outbox_fh.write(json.dumps(logged, sort_keys=True) + "\n")
        self._outbox_fh.flush()
        if self.email_out:
            self.email_out(msg, logged)

    def _route(self, target: str, email: Dict) -> None:
        if target not in self.engine.instances:
            return
        event = Event(event_id=email["message_id"], kind="email_event",
                      instance_id=target, occurred_at=self.clock.now(),
                      payload={"email": email})
        self._execute(target, self.engine.dispatch(event))

    # ----- taskboard hooks -----

    def _on_task_event(self, task: Task, payload: Dict) -> None:
        kind = "macro_action" if task.kind == "Macrotask" else "task_result"
        event = Event(event_id=f"{task.task_id}-r{task.submissions}", kind=kind,
                      instance_id=task.instance_id, occurred_at=self.clock.now(),
                      payload=payload)
        self._execute(task.instance_id, self.engine.dispatch(event))

    def _on_corpus_row(self, task: Task, output: Dict) -> None:
        if task.kind != "InterpretBallotResponse":
            return
        options = task.payload.get("options") or []
        selections = output.get("selections") or []
        rows = []
        for attrs, selected in zip(options, selections):
            rows.append(automation.BallotResponseRecord(
                ballot_id=task.payload.get("ballot_id", task.task_id),
                response_text=task.payload["email"]["body"],
                option=automation.OptionAttrs.from_dict(attrs),
                selected=bool(selected),
            ))
        if rows:
            automation.append_corpus(self.corpus_path, rows)

    def _macro_semantics(self, task: Task, action: Dict) -> Optional[str]:
        view = self._view(task.instance_id)
        if view is None:
            return f"request {task.request_id} no longer exists"
        atype = action["type"]
        if atype in ("SendInvitation", "UpdateInvitation"):
            idx = action.get("option_index")
            if idx is not None and idx >= len(view.data.get("options") or []):
                return f"option_index {idx} is out of range"
            if atype == "UpdateInvitation" and not view.data.get("event_uid"):
                return "no invitation has been sent yet"
        return None

    # ----- timers -----

    def _journal_timer(self, line: Dict) -> None:
        if self._timers_fh is None:
            self._timers_fh = open(self._timers_path, "a", encoding="utf-8")
        self._timers_fh.write(json.dumps(line, sort_keys=True) + "\n")
        self._timers_fh.flush()

    def due_timers(self, until) -> List[Dict]:
        return sorted((t for t in self.timers if self._timer_at[t["seq"]] <= until),
                      key=lambda t: (self._timer_at[t["seq"]], t["seq"]))

    def next_timer_at(self):
        if not self.timers:
            return None
        return min(self._timer_at[t["seq"]] for t in self.timers)

    def advance_to(self, when) -> None:
        """Move time forward, firing every timer that falls due on the way."""
        while True:
            due = self.due_timers(when)
            if not due:
                break
            timer = due[0]
            at = self._timer_at[timer["seq"]]
            if at > self.clock.now():
                self.clock.advance_to(at)
            self.timers.remove(timer)
            del self._timer_at[timer["seq"]]
            self._journal_timer({"fire": timer["seq"]})
            event = Event(event_id=timer["event_id"], kind="timer",
                          instance_id=timer["instance_id"], occurred_at=at,
                          payload=timer["payload"])
            self._execute(timer["instance_id"], self.engine.dispatch(event))
        if when > self.clock.now():
            self.clock.advance_to(when)

    # ----- introspection -----

    def inspect(self, request_id: Optional[str] = None) -> Dict:
        def one(iid: str) -> Dict:
            inst = self.engine.instances[iid]
            view = self._view(iid)
            return {
                "request_id": iid,
                "workflow_version": inst.version,
                "state": view.state if view else None,
                "step_states": {k: str(v.value if hasattr(v, "value") else v)
                                for k, v in sorted(inst.step_states.items())},
                "request": view.data if view else None,
                "open_tasks": [t.to_dict() for t in self.taskboard.by_request(iid)
                               if t.status.value in ("Queued", "Claimed", "Returned")],
            }
        if request_id is not None:
            if request_id not in self.engine.instances:
                raise KeyError(request_id)
            return one(request_id)
        return {"requests": [one(iid) for iid in self.request_ids()],
                "timers": sorted(self.timers, key=lambda t: (t["at"], t["seq"])),
                "queued_micro": self.taskboard.queue_depth(Tier.MICRO),
                "queued_macro": self.taskboard.queue_depth(Tier.MACRO)}
