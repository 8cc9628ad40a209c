"""Versioned, event-driven workflow engine with crash-safe snapshots.

Definitions are dependency graphs of steps. A step runs either immediately
when its dependencies complete or when a matching event arrives. Step actions
mutate the instance blackboard and emit action descriptors; descriptors are
persisted in an outbox before they are released to the caller, so a crash
between persist and release re-emits instead of dropping work.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .clock import iso_utc, parse_iso_utc

# ===== Errors =====


class CycleDetected(Exception):
    """Definition dependency graph contains a cycle."""


class DuplicateVersion(Exception):
    """A definition with this version is already registered."""


class NoDefinition(Exception):
    """No registered definition satisfies the request."""


class UnknownInstance(Exception):
    """Instance id not present in memory or snapshots."""


class SnapshotMissing(Exception):
    """No snapshot file for the instance."""


class SnapshotCorrupt(Exception):
    """Snapshot checksum does not match its payload."""


# ===== Definitions =====


class TriggerKind(str, Enum):
    IMMEDIATE = "Immediate"
    AWAIT_EVENT = "AwaitEvent"


@dataclass(frozen=True)
class Trigger:
    kind: TriggerKind
    event_kinds: Tuple[str, ...] = ()

    @staticmethod
    def immediate() -> "Trigger":
        return Trigger(TriggerKind.IMMEDIATE)

    @staticmethod
    def await_event(*kinds: str) -> "Trigger":
        if not kinds:
            raise ValueError("await_event requires at least one event kind")
        return Trigger(TriggerKind.AWAIT_EVENT, tuple(kinds))


@dataclass(frozen=True)
class StepDef:
    step_id: str
    depends_on: Tuple[str, ...]
    trigger: Trigger
    action_id: str


@dataclass(frozen=True)
class WorkflowDefinition:
    version: int
    steps: Tuple[StepDef, ...]

    def step(self, step_id: str) -> StepDef:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)


def _validate_definition(defn: WorkflowDefinition) -> None:
    ids = [s.step_id for s in defn.steps]
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate step ids")
    known = set(ids)
    for s in defn.steps:
        for dep in s.depends_on:
            if dep not in known:
                raise ValueError(f"step {s.step_id} depends on unknown step {dep}")
    # Kahn's algorithm; leftover nodes mean a cycle
    indeg = {s.step_id: len(s.depends_on) for s in defn.steps}
    dependents: Dict[str, List[str]] = {sid: [] for sid in ids}
    for s in defn.steps:
        for dep in s.depends_on:
            dependents[dep].append(s.step_id)
    queue = sorted(sid for sid, d in indeg.items() if d == 0)
    seen = 0
    while queue:
        sid = queue.pop(0)
        seen += 1
        for nxt in dependents[sid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if seen != len(ids):
        raise CycleDetected("definition has a dependency cycle")


# ===== Events and step execution =====


@dataclass(frozen=True)
class Event:
    event_id: str
    kind: str
    instance_id: str
    occurred_at: datetime
    payload: Dict


@dataclass
class StepOutcome:
    """Result of running a step action."""

    emits: List[Tuple[str, Dict]] = field(default_factory=list)
    rearm: bool = False
    skip: Tuple[str, ...] = ()


class StepContext:
    """What an action sees: the live blackboard plus the triggering event."""

    def __init__(self, instance: "WorkflowInstance", step_id: str,
                 event: Optional[Event], now: datetime, services):
        self.instance_id = instance.instance_id
        self.step_id = step_id
        self.event = event
        self.now = now
        self.bb = instance.blackboard
        self.services = services

    def alloc(self, prefix: str) -> str:
        """Deterministic per-instance id; survives crash replay unchanged."""
        n = int(self.bb.get("_seq", 0)) + 1
        self.bb["_seq"] = n
        return f"{self.instance_id}-{prefix}{n}"


ActionFn = Callable[[StepContext], Optional[StepOutcome]]


class StepStatus(str, Enum):
    BLOCKED = "Blocked"
    READY = "Ready"
    AWAITING_EVENT = "AwaitingEvent"
    DONE = "Done"
    SKIPPED = "Skipped"


# ===== Instances =====


@dataclass
class WorkflowInstance:
    instance_id: str
    version: int
    blackboard: Dict
    step_states: Dict[str, str]
    processed_events: set
    outbox: List[Dict]
    event_cursor: int = 0
    outbox_seq: int = 0

    def is_complete(self) -> bool:
        return all(s in (StepStatus.DONE, StepStatus.SKIPPED) for s in self.step_states.values())

    def canonical_state(self) -> Dict:
        return {
            "blackboard": self.blackboard,
            "event_cursor": self.event_cursor,
            "instance_id": self.instance_id,
            "outbox": self.outbox,
            "outbox_seq": self.outbox_seq,
            "processed_events": sorted(self.processed_events),
            "step_states": {k: StepStatus(v).value for k, v in sorted(self.step_states.items())},
            "version": self.version,
        }


def canonical_bytes(state: Dict) -> bytes:
    return json.dumps(state, sort_keys=True, separators=(",", ":")).encode("utf-8")


# ===== Engine =====


class Engine:
    """Owns definitions, instances, snapshots, and per-instance journals."""

    def __init__(self, snapshot_dir: str, actions: Dict[str, ActionFn], services=None):
        self.snapshot_dir = snapshot_dir
        self.actions = actions
        self.services = services
        self.definitions: Dict[int, WorkflowDefinition] = {}
        self.instances: Dict[str, WorkflowInstance] = {}
        self._locks: Dict[str, threading.Lock] = {}
        os.makedirs(snapshot_dir, exist_ok=True)

    # ----- definitions -----

    def register(self, defn: WorkflowDefinition) -> None:
        if defn.version in self.definitions:
            raise DuplicateVersion(f"version {defn.version} already registered")
        _validate_definition(defn)
        self.definitions[defn.version] = defn

    def latest_version(self) -> int:
        if not self.definitions:
            raise NoDefinition("no definitions registered")
        return max(self.definitions)

    # ----- lifecycle -----

    def start_instance(self, event: Event, instance_id: Optional[str] = None,
                       version: Optional[int] = None) -> str:
        if version is None:
            version = self.latest_version()
        if version not in self.definitions:
            raise NoDefinition(f"version {version} not registered")
        defn = self.definitions[version]
        iid = instance_id or event.instance_id
        if not iid:
            raise ValueError("instance id required")
        if iid in self.instances or os.path.exists(self._snapshot_path(iid)):
            raise ValueError(f"instance {iid} already exists")
        states: Dict[str, str] = {}
        for step in defn.steps:
            if step.depends_on:
                states[step.step_id] = StepStatus.BLOCKED
            elif step.trigger.kind == TriggerKind.IMMEDIATE:
                states[step.step_id] = StepStatus.READY
            else:
                states[step.step_id] = StepStatus.AWAITING_EVENT
        inst = WorkflowInstance(
            instance_id=iid,
            version=version,
            blackboard={"init": dict(event.payload), "_seq": 0},
            step_states=states,
            processed_events=set(),
            outbox=[],
        )
        self.instances[iid] = inst
        self._persist(inst)
        return iid

    # ----- dispatch -----

    def dispatch(self, event: Event) -> List[Dict]:
        inst = self._get_instance(event.instance_id)
        with self._lock(inst.instance_id):
            if event.event_id in inst.processed_events:
                return []
            self._journal(inst, event)
            inst.processed_events.add(event.event_id)
            inst.event_cursor += 1
            self._run_wave(inst, event)
            self._persist(inst)
            self._crash_hook(inst)
            return self._release_pending_locked(inst)

    def pending_actions(self, instance_id: str) -> List[Dict]:
        """Release outbox entries stranded by a crash before release."""
        inst = self._get_instance(instance_id)
        with self._lock(instance_id):
            return self._release_pending_locked(inst)

    def _crash_hook(self, inst: WorkflowInstance) -> None:
        """Test seam; dispatch state is persisted but not yet released here."""

    def _release_pending_locked(self, inst: WorkflowInstance) -> List[Dict]:
        pending = [e for e in inst.outbox if not e["released"]]
        if not pending:
            return []
        for entry in pending:
            entry["released"] = True
        self._persist(inst)
        return [{"kind": e["kind"], "payload": e["payload"], "seq": e["seq"]} for e in pending]

    def _run_wave(self, inst: WorkflowInstance, event: Event) -> None:
        defn = self.definitions.get(inst.version)
        if defn is None:
            raise NoDefinition(f"version {inst.version} not registered")
        steps = {s.step_id: s for s in defn.steps}

        def deps_done(step: StepDef) -> bool:
            return all(
                inst.step_states[d] in (StepStatus.DONE, StepStatus.SKIPPED)
                for d in step.depends_on
            )

        def run(step: StepDef, ev: Optional[Event]) -> None:
            ctx = StepContext(inst, step.step_id, ev, event.occurred_at, self.services)
            action = self.actions.get(step.action_id)
            outcome = action(ctx) if action else None
            outcome = outcome or StepOutcome()
            for kind, payload in outcome.emits:
                inst.outbox_seq += 1
                inst.outbox.append(
                    {"seq": inst.outbox_seq, "kind": kind, "payload": payload, "released": False}
                )
            if step.trigger.kind == TriggerKind.AWAIT_EVENT and outcome.rearm:
                inst.step_states[step.step_id] = StepStatus.AWAITING_EVENT
            else:
                inst.step_states[step.step_id] = StepStatus.DONE
            for sid in outcome.skip:
                if sid in inst.step_states and inst.step_states[sid] not in (
                    StepStatus.DONE,
                    StepStatus.SKIPPED,
                ):
                    inst.step_states[sid] = StepStatus.SKIPPED

        # Await steps that can consume this event, in lexicographic order.
        for sid in sorted(inst.step_states):
            step = steps[sid]
            if (
                inst.step_states[sid] == StepStatus.AWAITING_EVENT
                and step.trigger.kind == TriggerKind.AWAIT_EVENT
                and event.kind in step.trigger.event_kinds
                and deps_done(step)
            ):
                run(step, event)

        # Cascade: unblock satisfied steps, run anything Ready, repeat.
        while True:
            progressed = False
            for sid in sorted(inst.step_states):
                if inst.step_states[sid] != StepStatus.BLOCKED:
                    continue
                step = steps[sid]
                if deps_done(step):
                    if step.trigger.kind == TriggerKind.IMMEDIATE:
                        inst.step_states[sid] = StepStatus.READY
                    else:
                        inst.step_states[sid] = StepStatus.AWAITING_EVENT
                    progressed = True
            ready = [sid for sid in sorted(inst.step_states) if inst.step_states[sid] == StepStatus.READY]
            for sid in ready:
                run(steps[sid], None)
                progressed = True
            if not progressed:
                break

    # ----- persistence -----

    def _snapshot_path(self, instance_id: str) -> str:
        return os.path.join(self.snapshot_dir, f"{instance_id}.snapshot")

    def _journal_path(self, instance_id: str) -> str:
        return os.path.join(self.snapshot_dir, f"{instance_id}.journal.jsonl")

    def _journal(self, inst: WorkflowInstance, event: Event) -> None:
        record = {
            "cursor": inst.event_cursor + 1,
            "event_id": event.event_id,
            "kind": event.kind,
            "occurred_at": iso_utc(event.occurred_at),
            "payload": event.payload,
        }
        with open(self._journal_path(inst.instance_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _persist(self, inst: WorkflowInstance) -> None:
        state = inst.canonical_state()
        payload = canonical_bytes(state)
        wrapper = {
            "checksum": hashlib.sha256(payload).hexdigest(),
            "snapshot": state,
        }
        data = json.dumps(wrapper, sort_keys=True, separators=(",", ":")).encode("utf-8")
        path = self._snapshot_path(inst.instance_id)
        fd, tmp = tempfile.mkstemp(dir=self.snapshot_dir, prefix=".tmp-snap-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def resume(self, instance_id: str) -> WorkflowInstance:
        """Load an instance from its snapshot, verifying the checksum."""
        path = self._snapshot_path(instance_id)
        if not os.path.exists(path):
            raise SnapshotMissing(instance_id)
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            wrapper = json.loads(raw)
            state = wrapper["snapshot"]
            checksum = wrapper["checksum"]
        except (ValueError, KeyError, TypeError) as exc:
            raise SnapshotCorrupt(f"{instance_id}: unreadable snapshot") from exc
        if hashlib.sha256(canonical_bytes(state)).hexdigest() != checksum:
            raise SnapshotCorrupt(f"{instance_id}: checksum mismatch")
        if state["version"] not in self.definitions:
            raise NoDefinition(f"version {state['version']} not registered")
        inst = WorkflowInstance(
            instance_id=state["instance_id"],
            version=state["version"],
            blackboard=state["blackboard"],
            step_states={k: StepStatus(v) for k, v in state["step_states"].items()},
            processed_events=set(state["processed_events"]),
            outbox=state["outbox"],
            event_cursor=state["event_cursor"],
            outbox_seq=state["outbox_seq"],
        )
        self.instances[instance_id] = inst
        return inst

    def known_instance_ids(self) -> List[str]:
        """Instance ids with a snapshot on disk."""
        out = []
        for name in sorted(os.listdir(self.snapshot_dir)):
            if name.endswith(".snapshot"):
                out.append(name[: -len(".snapshot")])
        return out

    # ----- helpers -----

    def _get_instance(self, instance_id: str) -> WorkflowInstance:
        inst = self.instances.get(instance_id)
        if inst is None:
            if os.path.exists(self._snapshot_path(instance_id)):
                return self.resume(instance_id)
            raise UnknownInstance(instance_id)
        return inst

    def _lock(self, instance_id: str) -> threading.Lock:
        lock = self._locks.get(instance_id)
        if lock is None:
            lock = self._locks.setdefault(instance_id, threading.Lock())
        return lock
