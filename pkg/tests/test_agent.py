"""Agent behavior end to end: routing, tasks, timers, and crash recovery."""

from datetime import timedelta

from tiersched.agent import SchedulingAgent
from tiersched.clock import SimClock, utc
from tiersched.config import AgentConfig
from tiersched.mailroom import EmailMessage
from tiersched.taskboard import Tier

START = utc(2026, 9, 3, 9, 0)


def _intake(agent, message_id="m-intake", subject="Budget sync",
            organizer="alice@corp.test", invitees=("bob@corp.test",),
            body="Hi Cal, could you find 30 minutes for us next Tuesday?"):
    return agent.receive_email(EmailMessage(
        message_id=message_id, from_addr=organizer,
        to_addrs=[agent.config.assistant_address], cc_addrs=list(invitees),
        subject=subject, body=body, sent_at=agent.clock.now()))


def _work_classify(agent, output=None):
    task = agent.taskboard.claim_next("tester", Tier.MICRO)
    assert task.kind == "ClassifyIntent"
    agent.taskboard.submit(task.task_id, "tester", output or {"verdict": "new"})
    return task


def _reply_to_ballot(agent, invitee, body="Any of those times work for me."):
    ballot = next(m for m in reversed(agent.sent_log)
                  if m["to"] == [invitee] and m["subject"].startswith("Meeting times:"))
    agent.receive_email(EmailMessage(
        message_id=f"reply-{invitee}-{len(agent.sent_log)}", from_addr=invitee,
        to_addrs=[agent.config.assistant_address], subject="Re: " + ballot["subject"],
        body=body, sent_at=agent.clock.now(), in_reply_to=ballot["message_id"]))


def _subjects(agent):
    return [m["subject"] for m in agent.sent_log]


# ===== Intake and classification =====


def test_intake_opens_request_with_suggested_classification(make_agent):
    agent = make_agent()
    routed = _intake(agent)
    assert routed == {"routed_to": "req-0001", "match": "NoMatch", "new": True}
    task = agent.taskboard.claim_next("tester", Tier.MICRO)
    assert (task.kind, task.request_id) == ("ClassifyIntent", "req-0001")
    assert task.suggestions == {"verdict": "new", "request_id": None}
    assert set(task.payload) >= {"email", "instructions"}
    assert agent.request_state("req-0001") == "Intake"


def test_confident_extraction_skips_straight_to_ballots(make_agent):
    agent = make_agent()
    _intake(agent)
    _work_classify(agent)
    assert agent.request_state("req-0001") == "AwaitingResponses"
    ballots = [m for m in agent.sent_log if m["subject"] == "Meeting times: Budget sync"]
    assert [m["to"] for m in ballots] == [["bob@corp.test"]]
    assert "1." in ballots[0]["body"] and "3." in ballots[0]["body"]
    # nothing is waiting on a human: extraction was tier-1 confident
    assert agent.taskboard.claim_next("tester", Tier.MICRO) is None


def test_ballot_reply_interprets_and_schedules(make_agent):
    agent = make_agent()
    _intake(agent)
    _work_classify(agent)
    agent.advance_to(START + timedelta(minutes=10))
    _reply_to_ballot(agent, "bob@corp.test")

    task = agent.taskboard.claim_next("tester", Tier.MICRO)
    assert task.kind == "InterpretBallotResponse"
    assert len(task.payload["options"]) == agent.config.ballot_options_k
    agent.taskboard.submit(task.task_id, "tester", {"selections": [True, True, True]})

    assert agent.request_state("req-0001") == "Scheduled"
    assert any(m["subject"] == "Scheduled: Budget sync" for m in agent.sent_log)
    events = agent.calendar.get("alice@corp.test").events
    assert len(events) == 1
    held = next(iter(events.values()))
    assert held.start == utc(2026, 9, 8, 9, 0)  # earliest Tuesday slot
    assert agent.inspect("req-0001")["open_tasks"] == []


def test_same_subject_reply_suggests_existing_request(make_agent):
    agent = make_agent()
    _intake(agent)
    _work_classify(agent)
    # bob mails a brand-new thread (no headers) with the same subject
    agent.receive_email(EmailMessage(
        message_id="m-side", from_addr="bob@corp.test",
        to_addrs=[agent.config.assistant_address], subject="Re: Budget sync",
        body="Actually, Tuesday is bad.", sent_at=agent.clock.now()))
    task = agent.taskboard.claim_next("tester", Tier.MICRO)
    assert task.request_id == "req-0002"
    assert task.suggestions == {"verdict": "existing", "request_id": "req-0001"}
    agent.taskboard.submit(task.task_id, "tester",
                           {"verdict": "existing", "request_id": "req-0001"})
    merged = agent.inspect("req-0001")
    assert any(m["message_id"] == "m-side" for m in merged["request"]["thread"])
    assert agent.inspect("req-0002")["request"]["discarded"] is True


def test_not_scheduling_verdict_discards_quietly(make_agent):
    agent = make_agent()
    _intake(agent, body="Lunch was great, thanks!")
    _work_classify(agent, {"verdict": "not_scheduling"})
    assert agent.inspect("req-0001")["request"]["discarded"] is True
    assert agent.sent_log == []


def test_classify_cant_answer_escalates_to_expert(make_agent):
    agent = make_agent()
    _intake(agent)
    task = agent.taskboard.claim_next("tester", Tier.MICRO)
    agent.taskboard.cant_answer(task.task_id, "tester")
    assert agent.request_state("req-0001") == "EscalatedTier3"
    macro = agent.taskboard.claim_next("expert", Tier.MACRO)
    assert macro.kind == "Macrotask"
    assert macro.payload["reasons"] == ["Other"]
    assert set(macro.payload["calendar_view"]) == {"busy"}


# ===== Reminder ladder =====


def test_silent_invitee_walks_the_reminder_ladder(make_agent):
    agent = make_agent()
    _intake(agent)
    _work_classify(agent)
    for day in range(1, 11):
        agent.advance_to(START + timedelta(days=day))
    stages = []
    for m in agent.sent_log:
        if m["subject"].startswith("Meeting times:"):
            stages.append("ballot")
        elif "Just checking in" in m["body"]:
            stages.append("reminder")
        elif '"keep"' in m["body"]:
            stages.append("warning")
        elif "I never heard back" in m["body"]:
            stages.append("cancellation")
    assert stages == ["ballot", "reminder", "reminder", "warning", "cancellation"]
    assert agent.request_state("req-0001") == "Cancelled"


def test_organizer_keep_stops_the_cancellation(make_agent):
    agent = make_agent()
    _intake(agent)
    _work_classify(agent)
    # wait for the warning, then have the organizer answer "keep"
    for day in (1, 2, 3, 4):
        agent.advance_to(START + timedelta(days=day))
    warning = next(m for m in agent.sent_log if '"keep"' in m["body"])
    agent.receive_email(EmailMessage(
        message_id="m-keep", from_addr="alice@corp.test",
        to_addrs=[agent.config.assistant_address], subject=warning["subject"],
        body="Please keep it open.", sent_at=agent.clock.now(),
        in_reply_to=warning["message_id"]))
    for day in (5, 6, 7, 8, 9, 10):
        agent.advance_to(START + timedelta(days=day))
    assert not any("I never heard back" in m["body"] for m in agent.sent_log)
    assert agent.request_state("req-0001") == "EscalatedTier3"
    assert agent.taskboard.claim_next("expert", Tier.MACRO) is not None


# ===== Crash recovery =====


def test_resume_continues_where_the_run_stopped(make_agent, tmp_path):
    control = make_agent("control")
    _intake(control)
    _work_classify(control)
    control.advance_to(START + timedelta(minutes=10))
    _reply_to_ballot(control, "bob@corp.test")
    task = control.taskboard.claim_next("tester", Tier.MICRO)
    control.taskboard.submit(task.task_id, "tester", {"selections": [True, True, True]})

    first = make_agent("crashy")
    _intake(first)
    _work_classify(first)
    del first  # journals flush per write; no goodbye required

    second = SchedulingAgent(AgentConfig(), str(tmp_path / "crashy"), SimClock(START))
    assert second.request_state("req-0001") == "AwaitingResponses"
    second.advance_to(START + timedelta(minutes=10))
    _reply_to_ballot(second, "bob@corp.test")
    task = second.taskboard.claim_next("tester", Tier.MICRO)
    second.taskboard.submit(task.task_id, "tester", {"selections": [True, True, True]})

    assert second.request_state("req-0001") == "Scheduled"
    assert _subjects(second) == _subjects(control)
    assert (second.calendar.get("alice@corp.test").events.keys()
            == control.calendar.get("alice@corp.test").events.keys())


def test_resume_restores_pending_timers(make_agent, tmp_path):
    first = make_agent("timers")
    _intake(first)
    _work_classify(first)
    sent_before = len(first.sent_log)
    del first

    second = SchedulingAgent(AgentConfig(), str(tmp_path / "timers"), SimClock(START))
    assert len(second.sent_log) == sent_before  # outbox journal reloaded
    for day in range(1, 11):
        second.advance_to(START + timedelta(days=day))
    assert second.request_state("req-0001") == "Cancelled"
    assert any("I never heard back" in m["body"] for m in second.sent_log)
