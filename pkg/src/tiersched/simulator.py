"""Deterministic desk-scale simulation of the scheduling service.

A scenario declares personas (mail behaviors), the organizer emails that open
requests, per-request worker ground truth, and expert scripts for macrotasks.
The simulator owns a priority queue of external happenings (inbound mail,
worker polls, task resolutions, workflow upgrades); between happenings it
advances the shared clock through the agent so due timers fire in order.
Everything is seeded and clock-driven, so a run is reproducible byte for byte.
"""

from __future__ import annotations

import csv
import heapq
import json
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Dict, List, Optional, Tuple

from . import automation
from .agent import SchedulingAgent
from .clock import SimClock, iso_utc, parse_iso_utc
from .config import AgentConfig
from .mailroom import EmailMessage
from .taskboard import Task, TaskStatus, Tier

# ===== Errors =====


class ScenarioStuck(Exception):
    """The run exceeded its event budget or missed a declared expectation."""


# ===== Scenario declaration =====


@dataclass
class PersonaSpec:
    """How one mailbox behaves when the assistant writes to it."""

    address: str
    behavior: str = "accept_first"
    delay_minutes: float = 30.0
    drop_headers: bool = False
    phone: Optional[str] = None
    keep_on_warning: bool = False
    change_after_schedule: bool = False


@dataclass
class RequestSpec:
    """One organizer email plus the ground truth workers answer with."""

    subject: str
    organizer: str
    invitees: List[str]
    body: str
    at_minutes: float = 0.0
    classify: str = "new"  # new | existing | not_scheduling | cant
    fields: Dict = field(default_factory=dict)  # field name -> value or "cant"
    macro_script: List[Dict] = field(default_factory=list)
    expect: Optional[str] = None  # Scheduled | Cancelled | discarded | EscalatedTier3


@dataclass
class Scenario:
    name: str
    personas: List[PersonaSpec]
    requests: List[RequestSpec]
    start: str = "2026-09-03T09:00:00Z"
    calendar: List[Dict] = field(default_factory=list)
    upgrade_at_minutes: Optional[float] = None
    with_model: bool = False
    horizon_days: float = 10.0
    note: str = ""


# reply text and the selections it truly encodes, by behavior name
_BALLOT_REPLIES: Dict[str, Tuple[str, Optional[Callable[[int], List[bool]]]]] = {
    "accept_first": ("The first option works for me.",
                     lambda k: [i == 0 for i in range(k)]),
    "accept_second": ("Option 2 works best for me.",
                      lambda k: [i == 1 for i in range(k)]),
    "accept_all": ("Any of those times work for me.",
                   lambda k: [True] * k),
    "first_two": ("Either of the first two options would be fine.",
                  lambda k: [i < 2 for i in range(k)]),
    "reject_all": ("None of these work for me, sorry.",
                   lambda k: [False] * k),
    "gibberish": ("Let me check with my other calendar and circle back to you.",
                  None),
}

_OPTION_LINE = re.compile(r"^\d+\. ", re.MULTILINE)


# ===== Simulator =====


class Simulator:
    """Drives one scenario against a fresh agent in a data directory."""

    def __init__(self, scenario: Scenario, data_dir: str, seed: int = 0,
                 config: Optional[AgentConfig] = None, workers: bool = True):
        self.scenario = scenario
        self.seed = seed
        self.config = config or AgentConfig()
        self.start = parse_iso_utc(scenario.start)
        self.end = self.start + timedelta(days=scenario.horizon_days)
        self.clock = SimClock(self.start)
        model = dictionary = None
        if scenario.with_model:
            dictionary = automation.load_dictionary()
            corpus = automation.generate_ballot_corpus(120, seed=seed)
            model, _ = automation.train_classifier(corpus, seed=seed)
        self.agent = SchedulingAgent(self.config, data_dir, self.clock,
                                     model=model, dictionary=dictionary)
        for entry in scenario.calendar:
            self.agent.calendar.load_fixture_entry(entry)
        self.personas: Dict[str, PersonaSpec] = {p.address: p for p in scenario.personas}
        for address in self.personas:
            self.agent.mailroom.register(address)
        self.agent.email_out = self._on_agent_email

        self.heap: List[Tuple[datetime, int, str, object]] = []
        self._seq = 0
        self.workers_enabled = workers
        self._busy = {Tier.MICRO: False, Tier.MACRO: False}
        self._poll_armed = {Tier.MICRO: False, Tier.MACRO: False}
        self.claim_delay_minutes = {Tier.MICRO: 0.5, Tier.MACRO: 1.0}
        self.service_seconds = {Tier.MICRO: self.config.micro_service_seconds,
                                Tier.MACRO: self.config.macro_service_seconds}

        self.ballot_truth: Dict[str, Optional[List[bool]]] = {}
        self.request_specs: Dict[str, RequestSpec] = {}
        self.macro_cursor: Dict[str, int] = {}
        self._msg_counter: Dict[str, int] = {}
        self._changed_once: set = set()
        self._message_tags: Dict[str, Dict] = {}
        self.items_processed = 0
        self.item_budget = 250_000

        for spec in scenario.requests:
            msg = EmailMessage(
                message_id=self._next_msg_id(spec.organizer),
                from_addr=spec.organizer,
                to_addrs=[self.config.assistant_address],
                cc_addrs=list(spec.invitees),
                subject=spec.subject,
                body=spec.body,
                sent_at=self.start + timedelta(minutes=spec.at_minutes),
            )
            self._push(msg.sent_at, "email_in", (msg, spec))
        if scenario.upgrade_at_minutes is not None:
            self._push(self.start + timedelta(minutes=scenario.upgrade_at_minutes),
                       "upgrade", 2)

    # ----- plumbing -----

    def _push(self, at: datetime, kind: str, data) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (at, self._seq, kind, data))

    def _next_msg_id(self, address: str) -> str:
        local = address.split("@")[0]
        n = self._msg_counter.get(address, 0) + 1
        self._msg_counter[address] = n
        return f"{local}-{n}"

    # ----- persona reactions -----

    def _on_agent_email(self, msg: EmailMessage, logged: Dict) -> None:
        self._message_tags[msg.message_id] = {
            "request_id": logged.get("request_id"),
            "workflow_version": logged.get("workflow_version"),
        }
        for address in msg.recipients():
            persona = self.personas.get(address)
            if persona is None:
                continue
            self._react(persona, msg, logged)

    def _react(self, persona: PersonaSpec, msg: EmailMessage, logged: Dict) -> None:
        body, subject = msg.body, msg.subject
        options = len(_OPTION_LINE.findall(body))
        is_ballot = subject.startswith("Meeting times:") and options > 0 \
            and not logged.get("follow_up")
        delay = timedelta(minutes=persona.delay_minutes)
        if is_ballot:
            behavior = persona.behavior
            if behavior == "silent":
                return
            if behavior == "delayed":
                self._schedule_reply(persona, msg, "The first option works for me.",
                                     [i == 0 for i in range(options)],
                                     timedelta(hours=26))
                return
            if behavior == "multi_reply":
                self._schedule_reply(persona, msg, "The first option works for me.",
                                     [i == 0 for i in range(options)], delay)
                self._schedule_reply(persona, msg,
                                     "Actually, that whole day is filling up. Can we revisit?",
                                     None, delay + timedelta(minutes=1))
                return
            text, truth = _BALLOT_REPLIES[behavior]
            self._schedule_reply(persona, msg, text,
                                 truth(options) if truth else None, delay)
            return
        if "phone number" in body and persona.phone:
            self._schedule_reply(persona, msg,
                                 f"Sure - you can reach me at {persona.phone}.",
                                 None, timedelta(minutes=10))
            return
        if 'reply with "keep"' in body and persona.keep_on_warning:
            self._schedule_reply(persona, msg, "Please keep it open.", None,
                                 timedelta(minutes=15))
            return
        if subject.startswith("Scheduled:") and persona.change_after_schedule \
                and persona.address not in self._changed_once:
            self._changed_once.add(persona.address)
            self._schedule_reply(persona, msg,
                                 "Actually, could we push that 30 minutes later?",
                                 None, delay)

    def _schedule_reply(self, persona: PersonaSpec, msg: EmailMessage, text: str,
                        truth: Optional[List[bool]], delay: timedelta) -> None:
        reply = EmailMessage(
            message_id=self._next_msg_id(persona.address),
            from_addr=persona.address,
            to_addrs=[self.config.assistant_address],
            subject=f"Re: {msg.subject}",
            body=text,
            sent_at=self.clock.now() + delay,
            in_reply_to=None if persona.drop_headers else msg.message_id,
            references=[] if persona.drop_headers else [msg.message_id],
        )
        self.ballot_truth[reply.message_id] = truth
        self._push(reply.sent_at, "email_in", (reply, None))

    # ----- scripted workers -----

    def _sweep(self) -> None:
        """Arm worker polls for any tier with visible or returning work."""
        if not self.workers_enabled:
            return
        now = self.clock.now()
        for tier in (Tier.MICRO, Tier.MACRO):
            if self._busy[tier] or self._poll_armed[tier]:
                continue
            delay = timedelta(minutes=self.claim_delay_minutes[tier])
            if self.agent.taskboard.queue_depth(tier) > 0:
                self._poll_armed[tier] = True
                self._push(now + delay, "poll", tier)
                continue
            waiting = [due for due, tid in self.agent.taskboard.returned
                       if self.agent.taskboard.tasks[tid].tier == tier]
            if waiting:
                self._poll_armed[tier] = True
                self._push(max(min(waiting), now) + delay, "poll", tier)

    def _handle_poll(self, tier: Tier) -> None:
        self._poll_armed[tier] = False
        task = self.agent.taskboard.claim_next(f"sim-{tier.value}", tier)
        if task is None:
            return
        self._busy[tier] = True
        self._push(self.clock.now() + timedelta(seconds=self.service_seconds[tier]),
                   "resolve", task.task_id)

    def _handle_resolve(self, task_id: str) -> None:
        board = self.agent.taskboard
        task = board.get(task_id)
        worker = f"sim-{task.tier.value}"
        if task.kind == "ClassifyIntent":
            spec = self.request_specs.get(task.request_id)
            verdict = spec.classify if spec else "new"
            if verdict == "cant":
                board.cant_answer(task_id, worker)
            elif verdict == "existing":
                target = task.payload.get("candidate_request_id")
                board.submit(task_id, worker, {"verdict": "existing", "request_id": target})
            else:
                board.submit(task_id, worker, {"verdict": verdict})
        elif task.kind == "ExtractField":
            spec = self.request_specs.get(task.request_id)
            value = (spec.fields if spec else {}).get(task.field, "cant")
            if value == "cant":
                board.cant_answer(task_id, worker)
            else:
                board.submit(task_id, worker, {"field": task.field, "value": value})
        elif task.kind == "InterpretBallotResponse":
            truth = self.ballot_truth.get(task.payload["email"]["message_id"])
            if truth is None:
                board.cant_answer(task_id, worker)
            else:
                k = len(task.payload.get("options", []))
                board.submit(task_id, worker, {"selections": list(truth)[:k]})
        else:  # Macrotask: play the next scripted expert action
            spec = self.request_specs.get(task.request_id)
            script = spec.macro_script if spec else []
            cursor = self.macro_cursor.get(task.request_id, 0)
            action = script[cursor] if cursor < len(script) else {"type": "Cancel"}
            self.macro_cursor[task.request_id] = cursor + 1
            board.resolve_macro(task_id, worker, action)
            if board.get(task_id).status == TaskStatus.CLAIMED:
                # message sent, task still open: keep working it
                self._push(self.clock.now()
                           + timedelta(seconds=self.service_seconds[task.tier]),
                           "resolve", task_id)
                return
        self._busy[task.tier] = False

    # ----- inbound mail -----

    def _handle_email_in(self, msg: EmailMessage, spec: Optional[RequestSpec]) -> None:
        result = self.agent.receive_email(msg)
        rid = result["routed_to"]
        if result.get("new"):
            if spec is None:
                # a header-less reply opened its own instance; teach the worker
                # to hand it back to the matched request
                spec = RequestSpec(subject=msg.subject, organizer=msg.from_addr,
                                   invitees=[], body=msg.body, classify="existing")
            self.request_specs[rid] = spec
        view = self.agent._view(rid)
        self._message_tags[msg.message_id] = {
            "request_id": rid,
            "workflow_version": view.workflow_version if view else None,
        }

    # ----- main loop -----

    def _bound(self, view) -> int:
        return 8 + 6 * len(view.data.get("invitees") or [])

    def _check_budgets(self) -> None:
        for iid, inst in self.agent.engine.instances.items():
            view = self.agent._view(iid)
            if view is None:
                continue
            bound = self._bound(view)
            if len(inst.processed_events) > bound:
                raise ScenarioStuck(
                    f"{iid} consumed {len(inst.processed_events)} events "
                    f"(bound {bound}); runaway negotiation")

    def step_until(self, target: datetime) -> int:
        """Process every happening and timer due by the target time."""
        handled = 0
        while True:
            self.items_processed += 1
            if self.items_processed > self.item_budget:
                raise ScenarioStuck(f"exceeded {self.item_budget} scheduled items")
            next_timer = self.agent.next_timer_at()
            heap_at = self.heap[0][0] if self.heap else None
            candidates = [t for t in (next_timer, heap_at) if t is not None and t <= target]
            if not candidates:
                break
            if heap_at is not None and heap_at <= min(candidates):
                at, _, kind, data = heapq.heappop(self.heap)
                if at > self.clock.now():
                    self.agent.advance_to(at)
                if kind == "email_in":
                    self._handle_email_in(*data)
                elif kind == "poll":
                    self._handle_poll(data)
                elif kind == "resolve":
                    self._handle_resolve(data)
                elif kind == "upgrade":
                    self.agent.adopt_version(data)
            else:
                self.agent.advance_to(next_timer)
            self._check_budgets()
            self._sweep()
            handled += 1
        if target > self.clock.now():
            self.agent.advance_to(target)
        return handled

    def run(self, strict: bool = True) -> Dict:
        self.step_until(self.end)
        metrics = self.metrics()
        if strict and metrics["expectation_failures"]:
            raise ScenarioStuck("expectations missed: "
                                + json.dumps(metrics["expectation_failures"]))
        return metrics

    # ----- metrics and export -----

    def _request_rows(self) -> List[Dict]:
        rows = []
        for rid in self.agent.request_ids():
            inst = self.agent.engine.instances[rid]
            view = self.agent._view(rid)
            if view is None:
                continue
            tasks = self.agent.taskboard.by_request(rid)
            micro = [t for t in tasks if t.tier == Tier.MICRO]
            macro = [t for t in tasks if t.tier == Tier.MACRO]
            spec = self.request_specs.get(rid)
            state = "discarded" if view.discarded else view.state
            expected = spec.expect if spec else None
            rows.append({
                "request_id": rid,
                "subject": view.subject,
                "organizer": view.data.get("organizer"),
                "invitees": len(view.data.get("invitees") or []),
                "workflow_version": inst.version,
                "state": state,
                "events": len(inst.processed_events),
                "event_bound": self._bound(view),
                "micro_tasks": len(micro),
                "macro_tasks": len(macro),
                "micro_seconds": sum(t.work_seconds for t in micro),
                "macro_seconds": sum(t.work_seconds for t in macro),
                "escalations": "|".join(e["reason"] for e in
                                        view.data.get("escalations") or []),
                "emails_sent": sum(1 for m in self.agent.sent_log
                                   if m.get("request_id") == rid),
                "expected": expected,
                "ok": expected is None or state == expected,
            })
        return rows

    def metrics(self) -> Dict:
        rows = self._request_rows()
        states: Dict[str, int] = {}
        for row in rows:
            states[row["state"]] = states.get(row["state"], 0) + 1
        micro_only = [r for r in rows if r["macro_tasks"] == 0 and r["micro_tasks"] > 0]
        with_macro = [r for r in rows if r["macro_tasks"] > 0]

        def mean_minutes(group: List[Dict]) -> Optional[float]:
            if not group:
                return None
            total = sum(r["micro_seconds"] + r["macro_seconds"] for r in group)
            return round(total / len(group) / 60.0, 4)

        return {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "sim_started": iso_utc(self.start),
            "sim_ended": iso_utc(self.clock.now()),
            "requests": len(rows),
            "states": dict(sorted(states.items())),
            "emails_delivered": len(self.agent.mailroom.transcript),
            "tasks_micro": sum(r["micro_tasks"] for r in rows),
            "tasks_macro": sum(r["macro_tasks"] for r in rows),
            "mean_work_minutes_micro_only": mean_minutes(micro_only),
            "mean_work_minutes_with_macro": mean_minutes(with_macro),
            "max_events_per_request": max((r["events"] for r in rows), default=0),
            "event_bound_violations": [r["request_id"] for r in rows
                                       if r["events"] > r["event_bound"]],
            "escalation_reasons": sorted({reason for r in rows if r["escalations"]
                                          for reason in r["escalations"].split("|")}),
            "expectation_failures": [
                {"request_id": r["request_id"], "expected": r["expected"],
                 "actual": r["state"]} for r in rows if not r["ok"]],
            "per_request": rows,
        }

    def export(self, out_dir: str) -> Dict:
        os.makedirs(out_dir, exist_ok=True)
        metrics = self.metrics()
        with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
        rows = metrics.pop("per_request")
        fields = ["request_id", "subject", "organizer", "invitees", "workflow_version",
                  "state", "events", "event_bound", "micro_tasks", "macro_tasks",
                  "micro_seconds", "macro_seconds", "escalations", "emails_sent",
                  "expected", "ok"]
        with open(os.path.join(out_dir, "requests.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in fields})
        with open(os.path.join(out_dir, "transcript.jsonl"), "w", encoding="utf-8") as fh:
            for msg in self.agent.mailroom.transcript:
                record = msg.to_record()
                record.update(self._message_tags.get(msg.message_id, {}))
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.agent.mailroom.save_mailboxes(os.path.join(out_dir, "mailboxes"))
        return metrics


# ===== Scenario catalog =====

_ASSISTANT = "cal@assistant.test"


def _body(duration: int, who: Optional[str], when: str = "next Tuesday",
          extra: str = "") -> str:
    target = f" with {who}" if who else " for me"
    return (f"Hi Cal, please find {duration} minutes{target} {when}.{extra}").strip()


def happy_two_person(seed: int = 0) -> Scenario:
    return Scenario(
        name="happy_two_person",
        personas=[PersonaSpec("bob@corp.test", "accept_first")],
        requests=[RequestSpec(
            subject="Quarterly review", organizer="alice@corp.test",
            invitees=["bob@corp.test"], body=_body(30, "Bob"),
            expect="Scheduled")],
        note="one invitee accepts the first option; no timers fire",
    )


def multi_invitee(seed: int = 0) -> Scenario:
    invitees = [f"team{i}@corp.test" for i in range(3)]
    return Scenario(
        name="multi_invitee",
        personas=[PersonaSpec(a, "accept_all", delay_minutes=20 + 10 * i)
                  for i, a in enumerate(invitees)],
        requests=[RequestSpec(
            subject="Design jam", organizer="alice@corp.test",
            invitees=invitees, body=_body(45, "the design team"),
            expect="Scheduled")],
        note="three invitees accept every option; earliest option wins",
    )


def multi_invitee_11(seed: int = 0) -> Scenario:
    invitees = [f"guest{i:02d}@corp.test" for i in range(11)]
    return Scenario(
        name="multi_invitee_11",
        personas=[PersonaSpec(a, "accept_first", delay_minutes=30 + 5 * i)
                  for i, a in enumerate(invitees)],
        requests=[RequestSpec(
            subject="All hands prep", organizer="alice@corp.test",
            invitees=invitees, body=_body(30, "the leads"),
            expect="Scheduled")],
        note="stress case for the per-request event bound",
    )


def appointment_solo(seed: int = 0) -> Scenario:
    return Scenario(
        name="appointment_solo",
        personas=[],
        requests=[RequestSpec(
            subject="Prep block", organizer="alice@corp.test", invitees=[],
            body="Hi Cal, block 45 minutes for me next Tuesday to prepare the deck.",
            expect="Scheduled")],
        note="no invitees: the earliest free option is booked directly",
    )


def phone_meeting(seed: int = 0) -> Scenario:
    return Scenario(
        name="phone_meeting",
        personas=[PersonaSpec("dana@corp.test", "accept_first",
                              phone="+1 415 555 0101")],
        requests=[RequestSpec(
            subject="Intro call", organizer="alice@corp.test",
            invitees=["dana@corp.test"],
            body=("Hi Cal, set up a 30 minute phone call with Dana next Tuesday "
                  "and ask her for the number to reach her at."),
            expect="Scheduled")],
        note="phone modality: agreement waits for the invitee's number",
    )


def update_after_schedule(seed: int = 0) -> Scenario:
    return Scenario(
        name="update_after_schedule",
        personas=[PersonaSpec("erin@corp.test", "accept_first",
                              change_after_schedule=True)],
        requests=[RequestSpec(
            subject="Budget check-in", organizer="alice@corp.test",
            invitees=["erin@corp.test"], body=_body(30, "Erin"),
            macro_script=[{"type": "UpdateInvitation",
                           "start": "2026-09-08T09:30:00Z",
                           "end": "2026-09-08T10:00:00Z"}],
            expect="Scheduled")],
        note="post-schedule change request escalates; expert moves the meeting",
    )


def no_common_time(seed: int = 0) -> Scenario:
    return Scenario(
        name="no_common_time",
        personas=[PersonaSpec("bob@corp.test", "accept_first"),
                  PersonaSpec("carol@corp.test", "accept_second",
                              delay_minutes=45)],
        requests=[RequestSpec(
            subject="Vendor sync", organizer="alice@corp.test",
            invitees=["bob@corp.test", "carol@corp.test"],
            body=_body(30, "Bob and Carol"),
            macro_script=[{"type": "SendInvitation", "option_index": 0}],
            expect="Scheduled")],
        note="disjoint selections escalate; expert books the first option anyway",
    )


def unresponsive_cancel(seed: int = 0) -> Scenario:
    return Scenario(
        name="unresponsive_cancel",
        personas=[PersonaSpec("ghost@corp.test", "silent")],
        requests=[RequestSpec(
            subject="Catch up", organizer="alice@corp.test",
            invitees=["ghost@corp.test"], body=_body(30, "Victor"),
            expect="Cancelled")],
        note="no replies at all: reminder, reminder, warning, automated cancel",
    )


def unresponsive_keep(seed: int = 0) -> Scenario:
    return Scenario(
        name="unresponsive_keep",
        personas=[PersonaSpec("ghost@corp.test", "silent"),
                  PersonaSpec("alice@corp.test", keep_on_warning=True)],
        requests=[RequestSpec(
            subject="Contract review", organizer="alice@corp.test",
            invitees=["ghost@corp.test"], body=_body(60, "Victor"),
            macro_script=[
                {"type": "SendMessage", "to": "ghost@corp.test",
                 "body": "Hi, Alice would still like to find a time - could you "
                         "pick one of the proposed options?"},
                {"type": "PushBack", "delay_minutes": 45},
                {"type": "Cancel"},
            ],
            expect="Cancelled")],
        note="organizer keeps the request open; expert nudges, waits, cancels",
    )


def ballot_cant_answer(seed: int = 0) -> Scenario:
    return Scenario(
        name="ballot_cant_answer",
        personas=[PersonaSpec("dave@corp.test", "gibberish")],
        requests=[RequestSpec(
            subject="Pipeline review", organizer="alice@corp.test",
            invitees=["dave@corp.test"], body=_body(30, "Dave"),
            macro_script=[{"type": "SendInvitation", "option_index": 1}],
            expect="Scheduled")],
        note="uninterpretable ballot reply; worker escalates, expert resolves",
    )


def multiple_replies(seed: int = 0) -> Scenario:
    return Scenario(
        name="multiple_replies",
        personas=[PersonaSpec("frank@corp.test", "multi_reply")],
        requests=[RequestSpec(
            subject="Roadmap survey", organizer="alice@corp.test",
            invitees=["frank@corp.test"], body=_body(30, "Frank"),
            macro_script=[{"type": "Cancel"}],
            expect="Cancelled")],
        note="second reply lands before the first is interpreted",
    )


def busy_calendar(seed: int = 0) -> Scenario:
    return Scenario(
        name="busy_calendar",
        personas=[PersonaSpec("bob@corp.test", "accept_first")],
        calendar=[{"subscriber_id": "packed@corp.test",
                   "busy": [["2026-09-07T00:00:00Z", "2026-09-12T00:00:00Z"]]}],
        requests=[RequestSpec(
            subject="Escalation drill", organizer="packed@corp.test",
            invitees=["bob@corp.test"], body=_body(30, "Bob"),
            macro_script=[{"type": "SendInvitation",
                           "start": "2026-09-14T09:00:00Z",
                           "end": "2026-09-14T09:30:00Z"}],
            expect="Scheduled")],
        note="no free slot in the window; expert books outside it",
    )


def calendar_offline(seed: int = 0) -> Scenario:
    return Scenario(
        name="calendar_offline",
        personas=[PersonaSpec("bob@corp.test", "accept_first")],
        calendar=[{"subscriber_id": "offline@corp.test", "accessible": False}],
        requests=[RequestSpec(
            subject="Ops sync", organizer="offline@corp.test",
            invitees=["bob@corp.test"], body=_body(30, "Bob"),
            macro_script=[
                {"type": "PushBack", "delay_minutes": 30},
                {"type": "SendMessage",
                 "body": "I could not reach your calendar, so I have to drop "
                         "this request. Please retry once calendar access works."},
                {"type": "Cancel"},
            ],
            expect="Cancelled")],
        note="inaccessible calendar escalates; expert retries then cancels",
    )


def determine_attendees(seed: int = 0) -> Scenario:
    return Scenario(
        name="determine_attendees",
        personas=[],
        requests=[RequestSpec(
            subject="Kickoff", organizer="alice@corp.test", invitees=[],
            body="Hi Cal, find 45 minutes with Priya next Tuesday.",
            fields={"attendees": "cant"},
            macro_script=[
                {"type": "SendMessage",
                 "body": "I could not determine who to invite. Could you send "
                         "me their email address?"},
                {"type": "Cancel"},
            ],
            expect="Cancelled")],
        note="worker cannot resolve the invitee address; expert asks + cancels",
    )


def intent_mix(seed: int = 0) -> Scenario:
    return Scenario(
        name="intent_mix",
        personas=[],
        requests=[
            RequestSpec(subject="Lunch?", organizer="alice@corp.test", invitees=[],
                        body="Did you catch the game last night?",
                        classify="not_scheduling", expect="discarded"),
            RequestSpec(subject="fwd: invoice 8841", organizer="alice@corp.test",
                        invitees=[], body="see attached, weird one",
                        at_minutes=5.0, classify="cant",
                        macro_script=[{"type": "Cancel"}],
                        expect="Cancelled"),
        ],
        note="one clearly-not-scheduling mail, one the worker cannot call",
    )


def lost_headers(seed: int = 0) -> Scenario:
    return Scenario(
        name="lost_headers",
        personas=[PersonaSpec("bob@corp.test", "accept_first", drop_headers=True)],
        requests=[RequestSpec(
            subject="Board prep", organizer="alice@corp.test",
            invitees=["bob@corp.test"], body=_body(30, "Bob"),
            expect="Scheduled")],
        note="reply without headers: weak match, human confirms it is the same thread",
    )


def version_upgrade(seed: int = 0) -> Scenario:
    return Scenario(
        name="version_upgrade",
        personas=[PersonaSpec("bob@corp.test", "accept_first"),
                  PersonaSpec("carol@corp.test", "accept_first")],
        upgrade_at_minutes=5.0,
        requests=[
            RequestSpec(subject="Old flow", organizer="alice@corp.test",
                        invitees=["bob@corp.test"], body=_body(30, "Bob"),
                        expect="Scheduled"),
            RequestSpec(subject="New flow", organizer="alice@corp.test",
                        invitees=["carol@corp.test"], body=_body(30, "Carol"),
                        at_minutes=10.0, expect="Scheduled"),
        ],
        note="definition v2 lands mid-run; in-flight request stays on v1",
    )


def assisted_quantifier(seed: int = 0) -> Scenario:
    return Scenario(
        name="assisted_quantifier",
        with_model=True,
        personas=[PersonaSpec("gina@corp.test", "accept_all")],
        requests=[RequestSpec(
            subject="Office hours", organizer="alice@corp.test",
            invitees=["gina@corp.test"], body=_body(30, "Gina"),
            expect="Scheduled")],
        note="trained interpreter handles the quantifier reply without a human",
    )


def mixed_200(seed: int = 0) -> Scenario:
    durations = [30, 45, 60]
    days = ["next Tuesday", "next Wednesday", "next Thursday"]
    personas: Dict[str, PersonaSpec] = {}
    requests: List[RequestSpec] = []
    for i in range(200):
        organizer = f"org{i % 20:02d}@corp.test"
        pattern = i % 10
        invitees = [f"inv{i:03d}a@corp.test"]
        if i % 3 == 0:
            invitees.append(f"inv{i:03d}b@corp.test")
        behavior = {0: "accept_first", 1: "accept_second", 2: "accept_all",
                    3: "first_two", 4: "accept_first", 5: "accept_all",
                    6: "delayed", 7: "silent", 8: "reject_all",
                    9: "silent"}[pattern]
        if pattern in (1,):  # everyone must agree on the same option
            behavior_all = "accept_second"
        elif pattern == 3:
            behavior_all = "first_two"
        else:
            behavior_all = behavior
        for addr in invitees:
            personas[addr] = PersonaSpec(addr, behavior_all,
                                         delay_minutes=20 + (i % 7) * 5)
        macro_script: List[Dict] = []
        expect = "Scheduled"
        if pattern == 7:
            expect = "Cancelled"
        elif pattern == 8:
            macro_script = [{"type": "SendInvitation", "option_index": 0}]
        elif pattern == 9:
            personas[organizer] = PersonaSpec(organizer, keep_on_warning=True)
            macro_script = [{"type": "Cancel"}]
            expect = "Cancelled"
        extra = " We can do it over zoom." if i % 5 == 2 else ""
        requests.append(RequestSpec(
            subject=f"Planning sync {i:03d}", organizer=organizer,
            invitees=invitees,
            body=_body(durations[i % 3], "the team", days[i % 3], extra),
            at_minutes=3.0 * i, macro_script=macro_script, expect=expect))
    return Scenario(
        name="mixed_200",
        personas=list(personas.values()),
        requests=requests,
        horizon_days=14.0,
        note="volume mix used for the workload and termination measurements",
    )


def live_console(seed: int = 0) -> Scenario:
    """Seed scenario for the interactive console: humans do the tasks."""
    return Scenario(
        name="live_console",
        personas=[PersonaSpec("bob@corp.test", "accept_first", delay_minutes=2),
                  PersonaSpec("ghost@corp.test", "silent"),
                  PersonaSpec("alice@corp.test", keep_on_warning=True)],
        requests=[
            RequestSpec(subject="Quarterly review", organizer="alice@corp.test",
                        invitees=["bob@corp.test"], body=_body(30, "Bob")),
            RequestSpec(subject="Contract review", organizer="alice@corp.test",
                        invitees=["ghost@corp.test"], body=_body(60, "Victor"),
                        at_minutes=1.0),
        ],
        note="two requests for manual work via the HTTP console",
    )


SCENARIOS: Dict[str, Callable[[int], Scenario]] = {
    "happy_two_person": happy_two_person,
    "multi_invitee": multi_invitee,
    "multi_invitee_11": multi_invitee_11,
    "appointment_solo": appointment_solo,
    "phone_meeting": phone_meeting,
    "update_after_schedule": update_after_schedule,
    "no_common_time": no_common_time,
    "unresponsive_cancel": unresponsive_cancel,
    "unresponsive_keep": unresponsive_keep,
    "ballot_cant_answer": ballot_cant_answer,
    "multiple_replies": multiple_replies,
    "busy_calendar": busy_calendar,
    "calendar_offline": calendar_offline,
    "determine_attendees": determine_attendees,
    "intent_mix": intent_mix,
    "lost_headers": lost_headers,
    "version_upgrade": version_upgrade,
    "assisted_quantifier": assisted_quantifier,
    "mixed_200": mixed_200,
    "live_console": live_console,
}


def build_scenario(name: str, seed: int = 0) -> Scenario:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}")
    return SCENARIOS[name](seed)
