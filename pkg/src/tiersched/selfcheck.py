"""Runnable checks for the package's documented guarantees.

Each check is independent of the code path it verifies: expected answers come
from recorded fixtures, counting identities, finite differences, or exported
run artifacts, never from re-running the code under test to produce its own
expectation.
"""

import hashlib
import json
import os
import random
import shutil
import tempfile
import time
from dataclasses import dataclass
from datetime import timedelta
from typing import Dict, List, Optional

import numpy as np

from . import automation, timeparse
from .agent import SchedulingAgent
from .clock import SimClock, parse_iso_utc
from .config import AgentConfig
from .engine import Event
from .mailroom import EmailMessage, Invitation, InvitationMethod, parse_invitation, render_invitation
from .scheduling import EscalationReason
from .simulator import SCENARIOS, Simulator, build_scenario
from .taskboard import Tier

FIXTURES_PATH = os.path.join(os.path.dirname(__file__), "data", "extractor_fixtures.json")

# ===== Results =====


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: str


def _result(name: str, passed: bool, details: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), details=details)


# ===== Shared catalog runs =====


def run_catalog(workspace: str, seed: int = 0) -> Dict[str, Dict]:
    """Run every scripted scenario once and export its artifacts."""
    runs: Dict[str, Dict] = {}
    for name in SCENARIOS:
        if name == "live_console":
            continue
        data_dir = os.path.join(workspace, f"run-{name}")
        out_dir = os.path.join(workspace, f"out-{name}")
        sim = Simulator(build_scenario(name, seed), data_dir, seed=seed)
        metrics = sim.run(strict=False)
        sim.export(out_dir)
        runs[name] = {"sim": sim, "metrics": metrics, "export_dir": out_dir}
    return runs


def _transcript(run: Dict) -> List[Dict]:
    path = os.path.join(run["export_dir"], "transcript.jsonl")
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ===== Individual checks =====


def check_classifier_beats_baseline(seed: int = 0) -> CheckResult:
    started = time.perf_counter()
    records = automation.generate_ballot_corpus(2000, seed=seed)
    model, report = automation.train_classifier(records, seed=seed)
    elapsed = time.perf_counter() - started
    gap_choice = (report["per_choice_accuracy"] - report["baseline_per_choice"]) * 100
    gap_exact = (report["exact_subset_accuracy"] - report["baseline_exact_subset"]) * 100
    passed = gap_choice >= 20.0 and gap_exact >= 40.0 and elapsed < 60.0
    return _result(
        "classifier_beats_baseline", passed,
        f"per-choice +{gap_choice:.1f}pt (need >= 20), exact-subset +{gap_exact:.1f}pt "
        f"(need >= 40), trained in {elapsed:.2f}s (limit 60s)")


def check_metric_identity(trials: int = 100, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    dictionary = automation.load_dictionary()
    names = automation.feature_names(dictionary)
    worst = -1.0
    for trial in range(trials):
        k = rng.randrange(2, 6)
        records = automation.generate_ballot_corpus(
            rng.randrange(10, 40), k=k, seed=rng.randrange(10_000))
        weights = np.array([rng.uniform(-2, 2) for _ in names])
        model = automation.LogisticModel(weights=weights,
                                         bias=rng.uniform(-1, 1),
                                         feature_names=names)
        report = automation.evaluate_classifier(model, records, dictionary)
        gap = report["per_choice_accuracy"] - report["exact_subset_accuracy"]
        base_gap = report["baseline_per_choice"] - report["baseline_exact_subset"]
        worst = max(worst, -gap, -base_gap)
        if gap < 0 or base_gap < 0:
            return _result("metric_identity", False,
                           f"violated on trial {trial}: subset exceeds per-choice by {-min(gap, base_gap):.4f}")
    return _result("metric_identity", True,
                   f"exact-subset <= per-choice on {trials} random corpora "
                   f"(min gap {-worst:.4f} >= 0)")


def check_gradient(instances: int = 50, seed: int = 0, tolerance: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(3, 40))
        d = int(rng.integers(2, 12))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n).astype(float)
        weights = rng.normal(size=d)
        bias = float(rng.normal())
        l2 = float(rng.uniform(0, 0.1))
        worst = max(worst, automation.numeric_gradient_error(X, y, weights, bias, l2))
    return _result("gradient_matches_finite_differences", worst <= tolerance,
                   f"max relative error {worst:.2e} over {instances} instances "
                   f"(tolerance {tolerance:.0e})")


class _Msg:
    def __init__(self, body: str, message_id: str):
        self.body = body
        self.message_id = message_id


def check_latest_message_invariance(threads: int = 100, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    noise = ["see you Monday", "30 minutes late", "next week is packed",
             "tomorrow then", "March 12 deadline", "an hour of prep",
             "half an hour commute", "9/15 release", "call Friday"]
    latest_bodies = [
        "Hi Cal, can you set up 45 minutes for us next Tuesday?",
        "Cal please block half an hour on Friday.",
        "We need 2 hours with the vendors March 12. Thanks Cal!",
        "nothing to extract here",
        "Cal: tomorrow, 20 min, whatever slot is free.",
    ]
    for t in range(threads):
        n = rng.randrange(2, 7)
        latest = _Msg(rng.choice(latest_bodies), f"latest-{t}")
        thread = [_Msg(f"placeholder {i}", f"early-{t}-{i}") for i in range(n - 1)] + [latest]
        before = timeparse.extract_time_expressions(thread)
        for msg in thread[:-1]:
            msg.body = " ".join(rng.choice(noise) for _ in range(rng.randrange(1, 5)))
        after = timeparse.extract_time_expressions(thread)
        key = lambda exprs: [(e.kind.value, e.text, e.span, e.value) for e in exprs]
        if key(before) != key(after):
            return _result("latest_message_invariance", False,
                           f"thread {t} changed after mutating earlier messages")
    return _result("latest_message_invariance", True,
                   f"extraction identical across {threads} threads with mutated history")


def check_nearest_name_fixtures() -> CheckResult:
    with open(FIXTURES_PATH, "r", encoding="utf-8") as fh:
        cases = json.load(fh)["cases"]
    matched = 0
    consistent = 0
    for case in cases:
        name_start, name_end = case["name_span"]
        anchor = (name_start + name_end) / 2.0
        expected = {}
        for kind, label in (("dur", "duration"), ("date", "date")):
            cands = [e for e in case["expressions"] if e["kind"] == kind]
            expected[label] = (min(cands, key=lambda e: (abs((e["start"] + e["end"]) / 2.0 - anchor),
                                                         e["start"]))["text"]
                               if cands else None)
        if expected == case["expected"]:
            consistent += 1
        exprs = timeparse.scan_message(case["body"], "fixture")
        selection = timeparse.select_meeting_fields(exprs, case["body"], case["assistant_name"])
        got = {"duration": selection.duration.text if selection.duration else None,
               "date": selection.date.text if selection.date else None}
        if got == case["expected"]:
            matched += 1
    n = len(cases)
    return _result("nearest_name_fixtures", matched == n and consistent == n and n == 50,
                   f"{matched}/{n} selections match the recorded character-distance "
                   f"answers; {consistent}/{n} answers re-derived from spans")


def check_escalation_coverage(catalog: Dict[str, Dict]) -> CheckResult:
    want = {reason.value for reason in EscalationReason}
    seen = set()
    for run in catalog.values():
        path = os.path.join(run["export_dir"], "metrics.json")
        with open(path, "r", encoding="utf-8") as fh:
            seen.update(json.load(fh)["escalation_reasons"])
    missing = sorted(want - seen)
    extra = sorted(seen - want)
    return _result("escalation_coverage", not missing and not extra,
                   f"reasons seen in exported metrics: {sorted(seen)}"
                   + (f"; missing {missing}" if missing else "")
                   + (f"; unknown {extra}" if extra else ""))


def check_reminder_pipeline(catalog: Dict[str, Dict],
                            assistant: str = "cal@assistant.test") -> CheckResult:
    sent = [m for m in _transcript(catalog["unresponsive_cancel"]) if m["from"] == assistant]
    stages = []
    for m in sent:
        if m["subject"].startswith("Meeting times:"):
            stages.append("ballot")
        elif "Just checking in" in m["body"]:
            stages.append("reminder")
        elif '"keep"' in m["body"]:
            stages.append("warning")
        elif "cancelled the" in m["body"]:
            stages.append("cancellation")
        else:
            stages.append("other")
    expected = ["ballot", "reminder", "reminder", "warning", "cancellation"]
    ordered = stages == expected

    keep_run = catalog["unresponsive_keep"]
    keep_mail = [m for m in _transcript(keep_run) if m["from"] == assistant]
    auto_cancelled = any("I never heard back" in m["body"] for m in keep_mail)
    row = keep_run["metrics"]["per_request"][0]
    kept_open = (not auto_cancelled and row["macro_tasks"] >= 1
                 and "AttendeeTimeout" in row["escalations"])
    return _result("reminder_pipeline", ordered and kept_open,
                   f"silent invitee drew {stages} (want {expected}); organizer 'keep' "
                   f"suppressed auto-cancel={not auto_cancelled}, opened "
                   f"{row['macro_tasks']} macrotask(s) with {row['escalations']!r}")


# ----- kill/resume determinism -----

_CHECK_START = "2026-09-03T09:00:00Z"


def _replay_ops(config: AgentConfig) -> List[Dict]:
    """A deterministic 20-event script: intake, classify, nine ballot rounds."""
    base = parse_iso_utc(_CHECK_START)
    organizer = "alice@corp.test"
    invitees = [f"inv{i:02d}@corp.test" for i in range(9)]
    ops: List[Dict] = [
        {"at": base, "op": "mail", "mail": {
            "message_id": "check-intake", "from": organizer,
            "to": [config.assistant_address], "cc": invitees,
            "subject": "Planning session",
            "body": "Hi Cal, could you find 30 minutes for all of us next Tuesday?"}},
        {"at": base + timedelta(minutes=2), "op": "micro", "output": {"verdict": "new"}},
    ]
    for i, invitee in enumerate(invitees):
        at = base + timedelta(minutes=10 + 3 * i)
        ops.append({"at": at, "op": "ballot_reply", "from": invitee,
                    "body": "Any of those times work for me."})
        ops.append({"at": at + timedelta(minutes=1), "op": "micro",
                    "output": {"selections": [True] * config.ballot_options_k}})
    return ops


def _apply_op(agent: SchedulingAgent, op: Dict, config: AgentConfig) -> None:
    agent.advance_to(op["at"])
    if op["op"] == "mail":
        m = op["mail"]
        agent.receive_email(EmailMessage(
            message_id=m["message_id"], from_addr=m["from"], to_addrs=list(m["to"]),
            cc_addrs=list(m.get("cc") or []), subject=m["subject"], body=m["body"],
            sent_at=op["at"]))
    elif op["op"] == "ballot_reply":
        sender = op["from"]
        ballot = next(m for m in reversed(agent.sent_log)
                      if m["to"] == [sender] and m["subject"].startswith("Meeting times:"))
        agent.receive_email(EmailMessage(
            message_id=f"reply-{sender}", from_addr=sender,
            to_addrs=[config.assistant_address], subject="Re: " + ballot["subject"],
            body=op["body"], sent_at=op["at"], in_reply_to=ballot["message_id"],
            references=[ballot["message_id"]]))
    elif op["op"] == "micro":
        task = agent.taskboard.claim_next("check", Tier.MICRO)
        agent.taskboard.submit(task.task_id, "check", op["output"])


def _dir_digest(path: str) -> str:
    digest = hashlib.sha256()
    for root, dirs, files in os.walk(path):
        dirs.sort()
        for name in sorted(files):
            full = os.path.join(root, name)
            digest.update(os.path.relpath(full, path).encode("utf-8"))
            with open(full, "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


def _fresh_agent(data_dir: str, start_at) -> SchedulingAgent:
    return SchedulingAgent(AgentConfig(), data_dir, SimClock(start_at))


def check_kill_resume(workspace: str) -> CheckResult:
    config = AgentConfig()
    ops = _replay_ops(config)
    base = parse_iso_utc(_CHECK_START)

    full_dir = os.path.join(workspace, "kr-full")
    agent = _fresh_agent(full_dir, base)
    for op in ops:
        _apply_op(agent, op, config)
    events = agent.engine.instances["req-0001"].event_cursor
    state = agent.request_state("req-0001")
    reference = _dir_digest(full_dir)

    mismatches = []
    for boundary in range(1, len(ops)):
        trial_dir = os.path.join(workspace, f"kr-{boundary:02d}")
        first = _fresh_agent(trial_dir, base)
        for op in ops[:boundary]:
            _apply_op(first, op, config)
        del first  # journals are flushed per write; drop without closing
        second = _fresh_agent(trial_dir, ops[boundary - 1]["at"])
        for op in ops[boundary:]:
            _apply_op(second, op, config)
        if _dir_digest(trial_dir) != reference:
            mismatches.append(boundary)

    duplicate = Event(event_id="check-intake", kind="email_event",
                      instance_id="req-0001", occurred_at=agent.clock.now(),
                      payload={"email": {"message_id": "check-intake"}})
    dup_actions = agent.engine.dispatch(duplicate)
    dup_clean = dup_actions == [] and _dir_digest(full_dir) == reference

    passed = (events >= 20 and state == "Scheduled" and not mismatches and dup_clean)
    return _result("kill_resume_determinism", passed,
                   f"{events}-event run (final state {state}); resume at "
                   f"{len(ops) - 1} boundaries reproduced the artifact tree"
                   + (f" except {mismatches}" if mismatches else "")
                   + f"; duplicate event released {len(dup_actions)} actions")


def check_version_pinning(catalog: Dict[str, Dict]) -> CheckResult:
    tags: Dict[str, set] = {}
    for m in _transcript(catalog["version_upgrade"]):
        if m.get("request_id"):
            tags.setdefault(m["request_id"], set()).add(m["workflow_version"])
    mixed = {rid: sorted(v) for rid, v in tags.items() if len(v) != 1}
    versions = {rid: next(iter(v)) for rid, v in tags.items() if len(v) == 1}
    pinned = (not mixed and versions.get("req-0001") == 1 and versions.get("req-0002") == 2)
    states = {row["request_id"]: row["state"]
              for row in catalog["version_upgrade"]["metrics"]["per_request"]}
    done = all(s == "Scheduled" for s in states.values())
    return _result("version_pinning", pinned and done,
                   f"transcript version tags {versions}"
                   + (f", mixed {mixed}" if mixed else "")
                   + f"; final states {states}")


def check_work_time_direction(catalog: Dict[str, Dict]) -> CheckResult:
    metrics = catalog["mixed_200"]["metrics"]
    micro_only = metrics["mean_work_minutes_micro_only"]
    with_macro = metrics["mean_work_minutes_with_macro"]
    violations = metrics["event_bound_violations"]
    passed = (micro_only is not None and with_macro is not None
              and 0.5 <= micro_only <= 5.0 and with_macro > micro_only
              and not violations and not metrics["expectation_failures"])
    return _result("work_time_direction", passed,
                   f"micro-only mean {micro_only} min (need within [0.5, 5]); "
                   f"with-macro mean {with_macro} min (need greater); "
                   f"{len(violations)} event-bound violations over 200 requests")


_MICRO_CALENDAR_KEYS = {"thread", "collected", "calendar_view", "busy",
                        "invitation", "events", "free_slots"}
_VIEW_TITLE_KEYS = {"summary", "title", "subject", "description", "attendees",
                    "organizer", "events", "location"}


def _keys_anywhere(obj) -> set:
    found = set()
    if isinstance(obj, dict):
        for key, value in obj.items():
            found.add(key)
            found |= _keys_anywhere(value)
    elif isinstance(obj, list):
        for item in obj:
            found |= _keys_anywhere(item)
    return found


def check_payload_policy(catalog: Dict[str, Dict]) -> CheckResult:
    micro_seen = 0
    macro_seen = 0
    offenders = []
    for name, run in catalog.items():
        for task in run["sim"].agent.taskboard.tasks.values():
            keys = _keys_anywhere(task.payload)
            if task.tier == Tier.MICRO:
                micro_seen += 1
                hit = keys & _MICRO_CALENDAR_KEYS
                if hit:
                    offenders.append((name, task.task_id, sorted(hit)))
            else:
                macro_seen += 1
                view = task.payload.get("calendar_view") or {}
                if set(view) != {"busy"}:
                    offenders.append((name, task.task_id, sorted(view)))
                    continue
                hit = _keys_anywhere(view) & _VIEW_TITLE_KEYS
                if hit:
                    offenders.append((name, task.task_id, sorted(hit)))
    passed = not offenders and micro_seen >= 400 and macro_seen >= 40
    return _result("payload_policy", passed,
                   f"scanned {micro_seen} micro and {macro_seen} macro payloads; "
                   f"{len(offenders)} leaks" + (f": {offenders[:3]}" if offenders else ""))


def check_ics_round_trip(trials: int = 200, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    summaries = ["Review", "Planning; budget", "Sync, part 2", "A\\B test recap",
                 "Notes\nwith newline", "semi;colon, comma\\slash"]
    required = ["BEGIN:VCALENDAR", "VERSION:2.0", "PRODID:", "METHOD:",
                "BEGIN:VEVENT", "UID:", "DTSTART:", "DTEND:", "SUMMARY:",
                "ORGANIZER:mailto:", "END:VEVENT", "END:VCALENDAR"]
    for trial in range(trials):
        start = parse_iso_utc(_CHECK_START) + timedelta(minutes=30 * rng.randrange(0, 10_000))
        inv = Invitation(
            uid=f"uid-{trial}-{rng.randrange(10**6)}@tiersched",
            summary=rng.choice(summaries),
            start=start,
            end=start + timedelta(minutes=rng.choice([15, 30, 45, 60, 90])),
            organizer=f"org{rng.randrange(50)}@corp.test",
            attendees=[f"a{j}@corp.test" for j in range(rng.randrange(0, 5))],
            method=rng.choice([InvitationMethod.REQUEST, InvitationMethod.CANCEL]),
        )
        text = render_invitation(inv)
        if "\r\n" not in text:
            return _result("ics_round_trip", False, f"trial {trial}: no CRLF line endings")
        missing = [marker for marker in required if marker not in text]
        if missing:
            return _result("ics_round_trip", False, f"trial {trial}: missing {missing}")
        back = parse_invitation(text)
        if back != inv:
            return _result("ics_round_trip", False,
                           f"trial {trial}: round-trip mismatch {inv} != {back}")
    return _result("ics_round_trip", True,
                   f"{trials} invitations round-tripped with all required lines")


# ===== Runner =====

CHECK_NAMES = [
    "classifier_beats_baseline",
    "metric_identity",
    "gradient_matches_finite_differences",
    "latest_message_invariance",
    "nearest_name_fixtures",
    "escalation_coverage",
    "reminder_pipeline",
    "kill_resume_determinism",
    "version_pinning",
    "work_time_direction",
    "payload_policy",
    "ics_round_trip",
]


def run_all(seed: int = 0, workspace: Optional[str] = None) -> List[CheckResult]:
    """Run every check, sharing one catalog pass; order matches CHECK_NAMES."""
    own_workspace = workspace is None
    workspace = workspace or tempfile.mkdtemp(prefix="tiersched-check-")
    try:
        catalog = run_catalog(os.path.join(workspace, "catalog"), seed=seed)
        results = [
            check_classifier_beats_baseline(seed=seed),
            check_metric_identity(seed=seed),
            check_gradient(seed=seed),
            check_latest_message_invariance(seed=seed),
            check_nearest_name_fixtures(),
            check_escalation_coverage(catalog),
            check_reminder_pipeline(catalog),
            check_kill_resume(os.path.join(workspace, "replay")),
            check_version_pinning(catalog),
            check_work_time_direction(catalog),
            check_payload_policy(catalog),
            check_ics_round_trip(seed=seed),
        ]
        return results
    finally:
        if own_workspace:
            shutil.rmtree(workspace, ignore_errors=True)


def render_report(results: List[CheckResult]) -> str:
    lines = []
    for res in results:
        lines.append(f"[{'PASS' if res.passed else 'FAIL'}] {res.name}: {res.details}")
    passed = sum(1 for r in results if r.passed)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
