"""Task queues for human workers: micro (tier 2) and macro (tier 3).

Tiers get separate FIFO queues over one worker pool. Claims are exclusive
leases; an expired lease puts the task back at the queue front. Payloads are
policy-checked at enqueue time so a microtask can never leak thread history or
calendar contents, and a macrotask calendar view stays busy/free-only.
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Tuple

from .clock import SimClock, iso_utc, parse_iso_utc

# ===== Errors =====


class PayloadPolicyViolation(Exception):
    """Task payload contains material its tier must not see."""


class UnknownTask(Exception):
    pass


class NotClaimant(Exception):
    """Worker acting on a task it has not claimed."""


class SchemaMismatch(Exception):
    """Submitted output does not fit the task kind's schema."""


class InvalidAction(Exception):
    """Macro action is malformed or not applicable to the request."""


class AlreadyTerminal(Exception):
    """The owning request already reached a terminal state."""


# ===== Types =====


class Tier(str, Enum):
    MICRO = "micro"
    MACRO = "macro"


class TaskStatus(str, Enum):
    QUEUED = "Queued"
    CLAIMED = "Claimed"
    DONE = "Done"
    ESCALATED = "Escalated"
    RETURNED = "Returned"


MICRO_KINDS = ("ClassifyIntent", "ExtractField", "InterpretBallotResponse")
MACRO_KIND = "Macrotask"
MACRO_ACTION_TYPES = ("SendMessage", "SendInvitation", "Cancel", "UpdateInvitation", "PushBack")

CLASSIFY_VERDICTS = ("new", "existing", "not_scheduling")

# keys that must never appear anywhere inside a microtask payload
_MICRO_FORBIDDEN = {"thread", "collected", "calendar_view", "busy", "invitation"}
# keys that must never appear inside a macrotask calendar view
_VIEW_FORBIDDEN = {"summary", "title", "subject", "attendees", "organizer", "events"}


@dataclass
class Task:
    task_id: str
    tier: Tier
    kind: str
    request_id: str
    instance_id: str
    payload: Dict
    field: Optional[str] = None
    suggestions: Optional[Dict] = None
    status: TaskStatus = TaskStatus.QUEUED
    claimed_by: Optional[str] = None
    claimed_at: Optional[datetime] = None
    lease_expires_at: Optional[datetime] = None
    output: Optional[Dict] = None
    work_seconds: float = 0.0
    submissions: int = 0
    requeue_at: Optional[datetime] = None
    created_at: Optional[datetime] = None

    def to_dict(self) -> Dict:
        return {
            "task_id": self.task_id,
            "tier": self.tier.value,
            "kind": self.kind,
            "field": self.field,
            "request_id": self.request_id,
            "instance_id": self.instance_id,
            "payload": self.payload,
            "suggestions": self.suggestions,
            "status": self.status.value,
            "claimed_by": self.claimed_by,
            "claimed_at": iso_utc(self.claimed_at) if self.claimed_at else None,
            "lease_expires_at": iso_utc(self.lease_expires_at) if self.lease_expires_at else None,
            "output": self.output,
            "work_seconds": self.work_seconds,
            "submissions": self.submissions,
            "requeue_at": iso_utc(self.requeue_at) if self.requeue_at else None,
            "created_at": iso_utc(self.created_at) if self.created_at else None,
        }

    @staticmethod
    def from_dict(d: Dict) -> "Task":
        return Task(
            task_id=d["task_id"],
            tier=Tier(d["tier"]),
            kind=d["kind"],
            field=d.get("field"),
            request_id=d["request_id"],
            instance_id=d["instance_id"],
            payload=d["payload"],
            suggestions=d.get("suggestions"),
            status=TaskStatus(d["status"]),
            claimed_by=d.get("claimed_by"),
            claimed_at=parse_iso_utc(d["claimed_at"]) if d.get("claimed_at") else None,
            lease_expires_at=(parse_iso_utc(d["lease_expires_at"])
                              if d.get("lease_expires_at") else None),
            output=d.get("output"),
            work_seconds=float(d.get("work_seconds", 0.0)),
            submissions=int(d.get("submissions", 0)),
            requeue_at=parse_iso_utc(d["requeue_at"]) if d.get("requeue_at") else None,
            created_at=parse_iso_utc(d["created_at"]) if d.get("created_at") else None,
        )


# ===== Payload policy =====


def _scan_keys(obj, forbidden: set, where: str) -> None:
    if isinstance(obj, dict):
        for key, value in obj.items():
            if key in forbidden:
                raise PayloadPolicyViolation(f"{where}: key {key!r} not allowed")
            _scan_keys(value, forbidden, where)
    elif isinstance(obj, list):
        for item in obj:
            _scan_keys(item, forbidden, where)


def validate_payload(tier: Tier, kind: str, payload: Dict) -> None:
    """Enforce what each worker tier is allowed to see."""
    if tier == Tier.MICRO:
        if kind not in MICRO_KINDS:
            raise PayloadPolicyViolation(f"kind {kind!r} is not a microtask")
        for required in ("email", "instructions"):
            if required not in payload:
                raise PayloadPolicyViolation(f"microtask payload missing {required!r}")
        _scan_keys(payload, _MICRO_FORBIDDEN, "microtask payload")
        return
    if kind != MACRO_KIND:
        raise PayloadPolicyViolation(f"kind {kind!r} is not a macrotask")
    for required in ("thread", "collected", "calendar_view", "instructions", "actions"):
        if required not in payload:
            raise PayloadPolicyViolation(f"macrotask payload missing {required!r}")
    view = payload["calendar_view"]
    if not isinstance(view, dict) or set(view.keys()) != {"busy"}:
        raise PayloadPolicyViolation("calendar view must contain exactly a busy list")
    for entry in view["busy"]:
        if (not isinstance(entry, (list, tuple)) or len(entry) != 2
                or not all(isinstance(x, str) for x in entry)):
            raise PayloadPolicyViolation("busy entries must be [start, end] string pairs")
    _scan_keys(view, _VIEW_FORBIDDEN, "calendar view")


def validate_output(task: Task, output: Dict) -> None:
    """Schema check for microtask submissions."""
    if not isinstance(output, dict):
        raise SchemaMismatch("output must be an object")
    if task.kind == "ClassifyIntent":
        verdict = output.get("verdict")
        if verdict not in CLASSIFY_VERDICTS:
            raise SchemaMismatch(f"verdict must be one of {CLASSIFY_VERDICTS}")
        if verdict == "existing" and not output.get("request_id"):
            raise SchemaMismatch("verdict 'existing' requires a request_id")
        return
    if task.kind == "ExtractField":
        if output.get("field") != task.field:
            raise SchemaMismatch(f"output field must be {task.field!r}")
        value = output.get("value")
        if task.field == "duration":
            if not isinstance(value, int) or value <= 0:
                raise SchemaMismatch("duration value must be a positive integer")
        elif task.field == "window":
            if not isinstance(value, dict) or "start" not in value or "end" not in value:
                raise SchemaMismatch("window value must have start and end")
            start, end = parse_iso_utc(value["start"]), parse_iso_utc(value["end"])
            if end <= start:
                raise SchemaMismatch("window end must be after start")
        elif task.field == "attendees":
            if (not isinstance(value, list) or not value
                    or not all(isinstance(a, str) and "@" in a for a in value)):
                raise SchemaMismatch("attendees must be a non-empty list of addresses")
        return
    if task.kind == "InterpretBallotResponse":
        selections = output.get("selections")
        k = len(task.payload.get("options", []))
        if (not isinstance(selections, list) or len(selections) != k
                or not all(isinstance(s, bool) for s in selections)):
            raise SchemaMismatch(f"selections must be a list of {k} booleans")
        return
    raise SchemaMismatch(f"kind {task.kind!r} is not submitted this way")


def validate_macro_action(action: Dict) -> None:
    """Schema check for tier-3 resolutions."""
    if not isinstance(action, dict):
        raise InvalidAction("action must be an object")
    atype = action.get("type")
    if atype not in MACRO_ACTION_TYPES:
        raise InvalidAction(f"type must be one of {MACRO_ACTION_TYPES}")
    if atype == "SendMessage":
        if not action.get("body") or not isinstance(action["body"], str):
            raise InvalidAction("SendMessage requires a body")
        to = action.get("to")
        if to is not None and not (
                isinstance(to, str)
                or (isinstance(to, list) and to
                    and all(isinstance(a, str) for a in to))):
            raise InvalidAction("SendMessage 'to' must be an address or a list of them")
    elif atype in ("SendInvitation", "UpdateInvitation"):
        if action.get("option_index") is not None:
            if not isinstance(action["option_index"], int) or action["option_index"] < 0:
                raise InvalidAction("option_index must be a non-negative integer")
        else:
            try:
                start = parse_iso_utc(action["start"])
                end = parse_iso_utc(action["end"])
            except (KeyError, ValueError, TypeError) as exc:
                raise InvalidAction(f"{atype} requires start/end or option_index") from exc
            if end <= start:
                raise InvalidAction("end must be after start")
    elif atype == "PushBack":
        delay = action.get("delay_minutes")
        if not isinstance(delay, (int, float)) or delay <= 0:
            raise InvalidAction("PushBack requires a positive delay_minutes")


# ===== Board =====


class Taskboard:
    """FIFO queues per tier with lease-based claims and policy enforcement."""

    def __init__(self, clock: SimClock, lease_seconds: float = 600.0,
                 save_path: Optional[str] = None):
        self.clock = clock
        self.lease_seconds = lease_seconds
        self.save_path = save_path
        self.tasks: Dict[str, Task] = {}
        self.queues: Dict[Tier, Deque[str]] = {Tier.MICRO: deque(), Tier.MACRO: deque()}
        self.returned: List[Tuple[datetime, str]] = []
        self._journal_fh = None
        # runtime hooks
        self.event_sink: Optional[Callable[[Task, Dict], None]] = None
        self.corpus_sink: Optional[Callable[[Task, Dict], None]] = None
        self.state_probe: Optional[Callable[[str], Optional[str]]] = None
        self.macro_validator: Optional[Callable[[Task, Dict], Optional[str]]] = None

    # ----- intake -----

    def enqueue(self, descriptor: Dict) -> Task:
        tier = Tier(descriptor["tier"])
        kind = descriptor["kind"]
        validate_payload(tier, kind, descriptor["payload"])
        task = Task(
            task_id=descriptor["task_id"],
            tier=tier,
            kind=kind,
            field=descriptor.get("field"),
            request_id=descriptor["request_id"],
            instance_id=descriptor.get("instance_id", descriptor["request_id"]),
            payload=descriptor["payload"],
            suggestions=descriptor.get("suggestions"),
            created_at=self.clock.now(),
        )
        if task.task_id in self.tasks:
            raise ValueError(f"task {task.task_id} already exists")
        self.tasks[task.task_id] = task
        self.queues[tier].append(task.task_id)
        self._save([task])
        return task

    # ----- claims -----

    def claim_next(self, worker_id: str, tier: Tier) -> Optional[Task]:
        if not worker_id:
            raise ValueError("worker_id required")
        touched = self._expire_leases() + self._promote_returned()
        queue = self.queues[Tier(tier)]
        task = None
        if queue:
            task = self.tasks[queue.popleft()]
            task.status = TaskStatus.CLAIMED
            task.claimed_by = worker_id
            task.claimed_at = self.clock.now()
            task.lease_expires_at = self.clock.now() + timedelta(seconds=self.lease_seconds)
            touched.append(task)
        if touched:
            self._save(touched)
        return task

    def _expire_leases(self) -> List[Task]:
        now = self.clock.now()
        expired = [t for t in self.tasks.values()
                   if t.status == TaskStatus.CLAIMED and t.lease_expires_at
                   and t.lease_expires_at <= now]
        # earliest claim ends up at the very front
        for task in sorted(expired, key=lambda t: (t.claimed_at, t.task_id), reverse=True):
            task.status = TaskStatus.QUEUED
            task.claimed_by = None
            task.claimed_at = None
            task.lease_expires_at = None
            self.queues[task.tier].appendleft(task.task_id)
        return expired

    def _promote_returned(self) -> List[Task]:
        now = self.clock.now()
        promoted: List[Task] = []
        still_waiting: List[Tuple[datetime, str]] = []
        for due, task_id in sorted(self.returned, key=lambda p: (p[0], p[1])):
            task = self.tasks[task_id]
            if due <= now:
                task.status = TaskStatus.QUEUED
                task.requeue_at = None
                self.queues[task.tier].append(task_id)
                promoted.append(task)
            else:
                still_waiting.append((due, task_id))
        self.returned = still_waiting
        return promoted

    # ----- resolutions -----

    def get(self, task_id: str) -> Task:
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTask(task_id)
        return task

    def _checked_claim(self, task_id: str, worker_id: str) -> Task:
        task = self.get(task_id)
        if task.status != TaskStatus.CLAIMED or task.claimed_by != worker_id:
            raise NotClaimant(f"{worker_id} has not claimed {task_id}")
        return task

    def _accrue(self, task: Task) -> None:
        if task.claimed_at:
            task.work_seconds += (self.clock.now() - task.claimed_at).total_seconds()

    def submit(self, task_id: str, worker_id: str, output: Dict) -> Task:
        task = self._checked_claim(task_id, worker_id)
        validate_output(task, output)
        self._accrue(task)
        task.status = TaskStatus.DONE
        task.output = output
        task.submissions += 1
        self._save([task])
        if task.suggestions is not None and self.corpus_sink:
            self.corpus_sink(task, output)
        if self.event_sink:
            self.event_sink(task, {
                "task_id": task.task_id, "kind": task.kind, "field": task.field,
                "output": output, "cant_answer": False,
            })
        return task

    def cant_answer(self, task_id: str, worker_id: str) -> Task:
        task = self._checked_claim(task_id, worker_id)
        if task.tier != Tier.MICRO:
            raise InvalidAction("cant_answer applies to microtasks")
        if self.state_probe:
            state = self.state_probe(task.request_id)
            if state in ("Scheduled", "Cancelled"):
                raise AlreadyTerminal(f"request {task.request_id} is {state}")
        self._accrue(task)
        task.status = TaskStatus.ESCALATED
        task.submissions += 1
        self._save([task])
        if self.event_sink:
            self.event_sink(task, {
                "task_id": task.task_id, "kind": task.kind, "field": task.field,
                "output": None, "cant_answer": True,
            })
        return task

    def resolve_macro(self, task_id: str, worker_id: str, action: Dict) -> Task:
        """Apply one expert action.

        SendMessage leaves the task claimed so the expert can keep working;
        SendInvitation, UpdateInvitation and Cancel close it; PushBack returns
        it to the back of the queue after the requested delay.
        """
        task = self._checked_claim(task_id, worker_id)
        if task.tier != Tier.MACRO:
            raise InvalidAction("macro actions apply to macrotasks")
        validate_macro_action(action)
        if self.macro_validator:
            problem = self.macro_validator(task, action)
            if problem:
                raise InvalidAction(problem)
        task.submissions += 1
        if action["type"] == "PushBack":
            self._accrue(task)
            task.status = TaskStatus.RETURNED
            task.claimed_by = None
            task.claimed_at = None
            task.lease_expires_at = None
            task.requeue_at = self.clock.now() + timedelta(minutes=float(action["delay_minutes"]))
            self.returned.append((task.requeue_at, task.task_id))
            self._save([task])
            return task
        closes = action["type"] != "SendMessage"
        if closes:
            self._accrue(task)
            task.status = TaskStatus.DONE
            task.output = {"action": action}
        self._save([task])
        if self.event_sink:
            self.event_sink(task, {"task_id": task.task_id, "kind": task.kind,
                                   "action": action, "closes": closes})
        return task

    # ----- introspection / persistence -----

    def queue_depth(self, tier: Tier) -> int:
        return len(self.queues[Tier(tier)])

    def by_request(self, request_id: str) -> List[Task]:
        return sorted((t for t in self.tasks.values() if t.request_id == request_id),
                      key=lambda t: t.task_id)

    def _save(self, touched: List[Task]) -> None:
        """Append the mutated tasks plus current queue shape to the journal."""
        if not self.save_path:
            return
        if self._journal_fh is None:
            os.makedirs(os.path.dirname(os.path.abspath(self.save_path)), exist_ok=True)
            self._journal_fh = open(self.save_path, "a", encoding="utf-8")
        line = {
            "tasks": {t.task_id: t.to_dict() for t in touched},
            "queues": {tier.value: list(q) for tier, q in self.queues.items()},
            "returned": [[iso_utc(due), tid] for due, tid in self.returned],
        }
        self._journal_fh.write(json.dumps(line, sort_keys=True) + "\n")
        self._journal_fh.flush()

    def load(self) -> None:
        """Replay the journal: last write per task wins, last queue shape wins."""
        if not self.save_path or not os.path.exists(self.save_path):
            return
        last = None
        with open(self.save_path, "r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if not raw:
                    continue
                line = json.loads(raw)
                for tid, d in line["tasks"].items():
                    self.tasks[tid] = Task.from_dict(d)
                last = line
        if last is not None:
            self.queues = {Tier(t): deque(ids) for t, ids in last["queues"].items()}
            self.returned = [(parse_iso_utc(due), tid) for due, tid in last["returned"]]
