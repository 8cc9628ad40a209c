"""Task queues: claims, leases, schemas, macro actions, payload policy."""

from datetime import timedelta

import pytest

from tiersched.clock import SimClock, iso_utc, utc
from tiersched.taskboard import (AlreadyTerminal, InvalidAction, NotClaimant,
                                 PayloadPolicyViolation, SchemaMismatch, Task,
                                 Taskboard, TaskStatus, Tier, UnknownTask,
                                 validate_macro_action)

START = utc(2026, 9, 3, 9, 0)


def _board(tmp_path=None, lease_seconds=600.0):
    path = str(tmp_path / "tasks.jsonl") if tmp_path else None
    return Taskboard(SimClock(START), lease_seconds=lease_seconds, save_path=path)


def _micro(task_id, kind="ClassifyIntent", field=None, payload=None, **kw):
    body = {"email": {"subject": "Budget", "body": "hi"}, "instructions": "pick one"}
    body.update(payload or {})
    return {"task_id": task_id, "tier": "micro", "kind": kind, "field": field,
            "request_id": "req-1", "payload": body, **kw}


def _macro(task_id, view=None, payload=None):
    body = {"thread": [], "collected": {}, "instructions": "resolve",
            "actions": ["SendMessage"], "calendar_view": view or {"busy": []}}
    body.update(payload or {})
    return {"task_id": task_id, "tier": "macro", "kind": "Macrotask",
            "request_id": "req-1", "payload": body}


# ===== Claims and leases =====


def test_fifo_claim_order_per_tier():
    board = _board()
    board.enqueue(_micro("t1"))
    board.enqueue(_micro("t2"))
    board.enqueue(_macro("t3"))
    assert board.claim_next("w1", Tier.MICRO).task_id == "t1"
    assert board.claim_next("w2", Tier.MICRO).task_id == "t2"
    assert board.claim_next("w3", Tier.MICRO) is None
    assert board.claim_next("w3", Tier.MACRO).task_id == "t3"


def test_claims_are_exclusive():
    board = _board()
    board.enqueue(_micro("t1"))
    task = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(NotClaimant):
        board.submit(task.task_id, "w2", {"verdict": "new"})
    board.submit(task.task_id, "w1", {"verdict": "new"})


def test_expired_lease_requeues_at_the_front():
    board = _board(lease_seconds=60.0)
    board.enqueue(_micro("t1"))
    board.enqueue(_micro("t2"))
    abandoned = board.claim_next("w1", Tier.MICRO)
    assert abandoned.task_id == "t1"
    board.clock.advance_by(timedelta(seconds=61))
    reclaimed = board.claim_next("w2", Tier.MICRO)
    assert reclaimed.task_id == "t1"  # ahead of the still-queued t2
    assert reclaimed.claimed_by == "w2"


def test_submit_after_terminal_is_rejected():
    board = _board()
    board.enqueue(_micro("t1"))
    task = board.claim_next("w1", Tier.MICRO)
    board.submit(task.task_id, "w1", {"verdict": "new"})
    with pytest.raises(NotClaimant):
        board.submit(task.task_id, "w1", {"verdict": "new"})
    with pytest.raises(UnknownTask):
        board.get("ghost")


# ===== Output schemas =====


def test_classify_schema():
    board = _board()
    board.enqueue(_micro("t1"))
    task = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(SchemaMismatch):
        board.submit(task.task_id, "w1", {"verdict": "maybe"})
    with pytest.raises(SchemaMismatch):
        board.submit(task.task_id, "w1", {"verdict": "existing"})  # no request_id
    board.submit(task.task_id, "w1", {"verdict": "existing", "request_id": "req-9"})


def test_extract_schemas():
    board = _board()
    board.enqueue(_micro("t1", kind="ExtractField", field="duration"))
    board.enqueue(_micro("t2", kind="ExtractField", field="window"))
    board.enqueue(_micro("t3", kind="ExtractField", field="attendees"))

    dur = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(SchemaMismatch):
        board.submit(dur.task_id, "w1", {"field": "duration", "value": -5})
    with pytest.raises(SchemaMismatch):
        board.submit(dur.task_id, "w1", {"field": "window", "value": 30})
    board.submit(dur.task_id, "w1", {"field": "duration", "value": 30})

    win = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(SchemaMismatch):
        board.submit(win.task_id, "w1", {"field": "window", "value": {
            "start": "2026-09-04T00:00:00Z", "end": "2026-09-04T00:00:00Z"}})
    board.submit(win.task_id, "w1", {"field": "window", "value": {
        "start": "2026-09-04T00:00:00Z", "end": "2026-09-05T00:00:00Z"}})

    att = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(SchemaMismatch):
        board.submit(att.task_id, "w1", {"field": "attendees", "value": []})
    with pytest.raises(SchemaMismatch):
        board.submit(att.task_id, "w1", {"field": "attendees", "value": ["nodomain"]})
    board.submit(att.task_id, "w1", {"field": "attendees", "value": ["a@x.test"]})


def test_interpret_schema_matches_option_count():
    board = _board()
    board.enqueue(_micro("t1", kind="InterpretBallotResponse",
                         payload={"options": ["a", "b", "c"]}))
    task = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(SchemaMismatch):
        board.submit(task.task_id, "w1", {"selections": [True, False]})
    with pytest.raises(SchemaMismatch):
        board.submit(task.task_id, "w1", {"selections": [1, 0, 1]})
    board.submit(task.task_id, "w1", {"selections": [True, False, True]})


# ===== Escalation =====


def test_cant_answer_escalates_micro_only():
    board = _board()
    board.enqueue(_micro("t1"))
    board.enqueue(_macro("t2"))
    micro = board.claim_next("w1", Tier.MICRO)
    macro = board.claim_next("w1", Tier.MACRO)
    assert board.cant_answer(micro.task_id, "w1").status == TaskStatus.ESCALATED
    with pytest.raises(InvalidAction):
        board.cant_answer(macro.task_id, "w1")


def test_cant_answer_blocked_when_request_is_terminal():
    board = _board()
    board.state_probe = lambda request_id: "Scheduled"
    board.enqueue(_micro("t1"))
    task = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(AlreadyTerminal):
        board.cant_answer(task.task_id, "w1")


# ===== Macro actions =====


def test_send_message_keeps_the_claim():
    board = _board()
    board.enqueue(_macro("t1"))
    task = board.claim_next("w1", Tier.MACRO)
    done = board.resolve_macro(task.task_id, "w1", {"type": "SendMessage",
                                                    "body": "checking in"})
    assert done.status == TaskStatus.CLAIMED
    closed = board.resolve_macro(task.task_id, "w1", {"type": "Cancel"})
    assert closed.status == TaskStatus.DONE
    assert closed.output["action"]["type"] == "Cancel"


def test_pushback_requeues_at_the_back_after_delay():
    board = _board()
    board.enqueue(_macro("t1"))
    task = board.claim_next("w1", Tier.MACRO)
    board.resolve_macro(task.task_id, "w1", {"type": "PushBack",
                                             "delay_minutes": 30})
    assert board.get("t1").status == TaskStatus.RETURNED
    assert board.claim_next("w1", Tier.MACRO) is None  # not due yet

    board.enqueue(_macro("t2"))
    board.clock.advance_by(timedelta(minutes=31))
    assert board.claim_next("w1", Tier.MACRO).task_id == "t2"  # back of queue
    assert board.claim_next("w1", Tier.MACRO).task_id == "t1"


def test_macro_action_schemas():
    for bad in ({"type": "Explode"},
                {"type": "SendMessage"},
                {"type": "SendMessage", "body": "hi", "to": [42]},
                {"type": "SendMessage", "body": "hi", "to": []},
                {"type": "PushBack", "delay_minutes": 0},
                {"type": "SendInvitation", "start": "2026-09-04T10:00:00Z"},
                {"type": "SendInvitation", "option_index": -1}):
        with pytest.raises(InvalidAction):
            validate_macro_action(bad)
    validate_macro_action({"type": "SendInvitation", "option_index": 1})
    validate_macro_action({"type": "SendMessage", "body": "hi", "to": "a@x.test"})
    validate_macro_action({"type": "SendMessage", "body": "hi", "to": ["a@x.test"]})
    validate_macro_action({"type": "UpdateInvitation",
                           "start": "2026-09-04T10:00:00Z",
                           "end": "2026-09-04T10:30:00Z"})


def test_macro_actions_rejected_on_microtasks():
    board = _board()
    board.enqueue(_micro("t1"))
    task = board.claim_next("w1", Tier.MICRO)
    with pytest.raises(InvalidAction):
        board.resolve_macro(task.task_id, "w1", {"type": "Cancel"})


# ===== Payload policy =====


def test_micro_payloads_must_not_carry_calendar_data():
    board = _board()
    for key in ("calendar_view", "busy", "thread", "collected", "invitation"):
        with pytest.raises(PayloadPolicyViolation):
            board.enqueue(_micro(f"bad-{key}", payload={key: {}}))
    # nested occurrences are caught too
    with pytest.raises(PayloadPolicyViolation):
        board.enqueue(_micro("bad-nested", payload={"extra": [{"busy": []}]}))


def test_macro_view_must_be_busy_intervals_only():
    board = _board()
    with pytest.raises(PayloadPolicyViolation):
        board.enqueue(_macro("t1", view={"busy": [], "events": []}))
    with pytest.raises(PayloadPolicyViolation):
        board.enqueue(_macro("t2", view={"busy": [["2026-09-03T10:00:00Z"]]}))
    board.enqueue(_macro("ok", view={"busy": [["2026-09-03T10:00:00Z",
                                               "2026-09-03T11:00:00Z"]]}))


# ===== Persistence =====


def test_journal_reload_preserves_board_shape(tmp_path):
    board = _board(tmp_path)
    board.enqueue(_micro("t1"))
    board.enqueue(_micro("t2"))
    board.enqueue(_macro("t3"))
    claimed = board.claim_next("w1", Tier.MICRO)
    board.submit(claimed.task_id, "w1", {"verdict": "new"})
    macro = board.claim_next("w1", Tier.MACRO)
    board.resolve_macro(macro.task_id, "w1", {"type": "PushBack", "delay_minutes": 5})

    again = Taskboard(SimClock(START + timedelta(minutes=1)),
                      save_path=str(tmp_path / "tasks.jsonl"))
    again.load()
    assert again.get("t1").status == TaskStatus.DONE
    assert again.get("t3").status == TaskStatus.RETURNED
    assert [t for t in again.queues[Tier.MICRO]] == ["t2"]
    assert again.returned == [(START + timedelta(minutes=5), "t3")]
    # the returned task comes due against the restored clock as well
    again.clock.advance_by(timedelta(minutes=5))
    assert again.claim_next("w2", Tier.MACRO).task_id == "t3"


def test_task_record_round_trip():
    board = _board()
    board.enqueue(_micro("t1", suggestions={"verdict": "new"}))
    task = board.claim_next("w1", Tier.MICRO)
    record = task.to_dict()
    assert record["status"] == "Claimed"
    assert record["suggestions"] == {"verdict": "new"}
    again = Task.from_dict(record)
    assert again.to_dict() == record
    assert again.claimed_at == task.claimed_at
