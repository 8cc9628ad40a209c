"""Acceptance gate: thirteen product-level criteria, one pass/fail line each."""

import shutil
import subprocess
import sys

import pytest

from tiersched import selfcheck
from tiersched.selfcheck import CheckResult

RESULTS = []


# ===== Recording =====

def _record(number: int, result: CheckResult) -> None:
    """Append one pass/fail line for the terminal summary, then assert."""
    verdict = "PASS" if result.passed else "FAIL"
    line = f"[{verdict}] criterion {number:02d} {result.name}: {result.details}"
    RESULTS.append(line)
    print(line)
    assert result.passed, line


def _run(number: int, func, *args, **kwargs) -> None:
    """Run a check, converting an unexpected crash into a recorded failure."""
    try:
        result = func(*args, **kwargs)
    except Exception as exc:  # keep one line per criterion even on a crash
        result = CheckResult(func.__name__, False, f"{type(exc).__name__}: {exc}")
    _record(number, result)


@pytest.fixture(scope="module")
def catalog(tmp_path_factory):
    workspace = tmp_path_factory.mktemp("acceptance-catalog")
    return selfcheck.run_catalog(str(workspace), seed=0)


# ===== Criteria =====

def test_criterion_01_classifier_beats_baseline():
    """Trained ballot classifier beats the majority baseline by >=20 per-choice and >=40 exact points in <60s."""
    _run(1, selfcheck.check_classifier_beats_baseline, seed=0)


def test_criterion_02_metric_identity():
    """Exact-subset accuracy never exceeds per-choice accuracy on 100 random corpora (zero tolerance)."""
    _run(2, selfcheck.check_metric_identity, trials=100, seed=0)


def test_criterion_03_gradient_check():
    """Analytic training gradient matches central finite differences within 1e-5 on 50 instances."""
    _run(3, selfcheck.check_gradient, instances=50, seed=0, tolerance=1e-5)


def test_criterion_04_latest_message_invariance():
    """Time extraction ignores non-latest thread messages across 100 generated threads (exact equality)."""
    _run(4, selfcheck.check_latest_message_invariance, threads=100, seed=0)


def test_criterion_05_nearest_name_fixtures():
    """Field selection matches the character-distance oracle on all 50 hand-labelled fixtures."""
    _run(5, selfcheck.check_nearest_name_fixtures)


def test_criterion_06_escalation_coverage(catalog):
    """The scenario catalog produces every escalation reason at least once, read from exported metrics."""
    _run(6, selfcheck.check_escalation_coverage, catalog)


def test_criterion_07_reminder_pipeline(catalog):
    """Silence yields ballot, two reminders, warning, cancellation in order; a keep reply opens a macrotask instead."""
    _run(7, selfcheck.check_reminder_pipeline, catalog)


def test_criterion_08_kill_resume_determinism(tmp_path):
    """Kill/resume at every boundary of a 20-event run reproduces the uninterrupted state; duplicates change nothing."""
    _run(8, selfcheck.check_kill_resume, str(tmp_path / "replay"))


def test_criterion_09_version_pinning(catalog):
    """In-flight requests finish on their original workflow version while new requests take the upgrade."""
    _run(9, selfcheck.check_version_pinning, catalog)


def test_criterion_10_work_time_direction(catalog):
    """Macro-requiring requests cost strictly more worker time; micro-only mean lies in [0.5, 5.0] minutes."""
    _run(10, selfcheck.check_work_time_direction, catalog)


def test_criterion_11_payload_policy(catalog):
    """No micro payload carries calendar data and no macro payload carries event titles, across the catalog."""
    _run(11, selfcheck.check_payload_policy, catalog)


def test_criterion_12_ics_round_trip():
    """200 random invitations survive render/parse byte-exactly and carry the required document lines."""
    _run(12, selfcheck.check_ics_round_trip, trials=200, seed=0)


def test_criterion_13_cli_unattended(tmp_path):
    """Everything above runs unattended through the installed CLI with scripted workers only."""
    exe = shutil.which("tiersched")
    command = [exe] if exe else [sys.executable, "-m", "tiersched.cli"]
    sim = subprocess.run(
        command + ["simulate", "--scenario", "mixed_200", "--seed", "0",
                   "--strict", "--out", str(tmp_path / "run")],
        capture_output=True, text=True, timeout=300)
    check = subprocess.run(
        command + ["selfcheck", "--seed", "0"],
        capture_output=True, text=True, timeout=300)
    passed = (sim.returncode == 0 and check.returncode == 0
              and "12/12 checks passed" in check.stdout)
    details = (f"simulate rc={sim.returncode}, selfcheck rc={check.returncode}, "
               f"report tail: {check.stdout.strip().splitlines()[-1] if check.stdout.strip() else 'empty'}")
    _record(13, CheckResult("cli_unattended", passed, details))
