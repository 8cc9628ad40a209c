"""Time-expression scanning, field selection, and window resolution."""

import json
import random

from tiersched.clock import utc
from tiersched.selfcheck import FIXTURES_PATH
from tiersched.timeparse import (ExpressionKind, extract_time_expressions,
                                 resolve_date_window, resolve_duration_minutes,
                                 scan_message, select_meeting_fields)

# ===== Scanning =====


def _texts(body, kind=None):
    exprs = scan_message(body, "m1")
    if kind:
        exprs = [e for e in exprs if e.kind == kind]
    return [e.text for e in exprs]


def test_duration_forms():
    body = ("We need half an hour, maybe an hour and a half, or 2 hours, "
            "or just 45 minutes, or an hour.")
    assert _texts(body, ExpressionKind.DURATION) == [
        "half an hour", "an hour and a half", "2 hours", "45 minutes", "an hour"]


def test_date_forms():
    body = ("Options: next week, next Tuesday, today, tomorrow, "
            "March 12th, 9/15, or Friday.")
    assert _texts(body, ExpressionKind.DATE) == [
        "next week", "next Tuesday", "today", "tomorrow",
        "March 12th", "9/15", "Friday"]


def test_spans_slice_back_to_text():
    body = "Can we do 30 minutes next Monday?"
    for expr in scan_message(body, "m1"):
        lo, hi = expr.span
        assert body[lo:hi] == expr.text


def test_month_name_needs_word_boundary():
    assert _texts("Measure the decimal places.") == []
    assert _texts("Deadline in March.") == []  # month alone is not a date


def test_only_latest_message_is_scanned():
    class Msg:
        def __init__(self, body, message_id):
            self.body = body
            self.message_id = message_id

    thread = [Msg("old mail said 2 hours on Friday", "m1"),
              Msg("latest says 30 minutes tomorrow", "m2")]
    exprs = extract_time_expressions(thread)
    assert [e.text for e in exprs] == ["30 minutes", "tomorrow"]
    assert all(e.source_message == "m2" for e in exprs)


# ===== Selection =====


def test_selection_prefers_expression_nearest_the_name():
    body = "An hour works. Aim for 15 minutes, Cal. Either way 3 hours max."
    sel = select_meeting_fields(scan_message(body, "m1"), body, "Cal")
    assert sel.duration.text == "15 minutes"


def test_selection_name_match_is_whole_word():
    body = "Update the calendar first. 45 minutes on Friday, Cal."
    sel = select_meeting_fields(scan_message(body, "m1"), body, "Cal")
    # the anchor must be the trailing "Cal", not the "cal" inside "calendar"
    assert sel.duration.text == "45 minutes"
    assert sel.date.text == "Friday"


def test_selection_without_name_takes_earliest():
    body = "Maybe 2 hours? Or 30 minutes. Tomorrow or Friday."
    sel = select_meeting_fields(scan_message(body, "m1"), body, "Robin")
    assert sel.duration.text == "2 hours"
    assert sel.date.text == "Tomorrow"


def test_selection_tie_breaks_on_earlier_span():
    body = "30 minutes Cal 45 minutes"
    sel = select_meeting_fields(scan_message(body, "m1"), body, "Cal")
    assert sel.duration.text == "30 minutes"


def test_recorded_fixture_sample_matches():
    with open(FIXTURES_PATH, "r", encoding="utf-8") as fh:
        cases = json.load(fh)["cases"]
    rng = random.Random(7)
    for case in rng.sample(cases, 10):
        sel = select_meeting_fields(scan_message(case["body"], "m1"),
                                    case["body"], case["assistant_name"])
        got = {"duration": sel.duration.text if sel.duration else None,
               "date": sel.date.text if sel.date else None}
        assert got == case["expected"]


# ===== Resolution =====


def test_duration_minutes():
    cases = {"half an hour": 30, "an hour": 60, "an hour and a half": 90,
             "2 hours": 120, "45 minutes": 45}
    for text, minutes in cases.items():
        expr = scan_message(f"need {text} please", "m1")[0]
        assert resolve_duration_minutes(expr.value) == minutes


def test_date_windows_from_anchor():
    anchor = utc(2026, 9, 3, 9, 0)  # a Thursday
    expr = scan_message("next Tuesday works", "m1")[0]
    start, end = resolve_date_window(expr.value, anchor)
    assert (start, end) == (utc(2026, 9, 8), utc(2026, 9, 9))

    expr = scan_message("tomorrow works", "m1")[0]
    start, end = resolve_date_window(expr.value, anchor)
    assert (start, end) == (utc(2026, 9, 4), utc(2026, 9, 5))

    expr = scan_message("how about 9/15", "m1")[0]
    start, end = resolve_date_window(expr.value, anchor)
    assert (start, end) == (utc(2026, 9, 15), utc(2026, 9, 16))


def test_bare_weekday_means_upcoming_one():
    anchor = utc(2026, 9, 3, 9, 0)  # Thursday
    expr = scan_message("Friday then", "m1")[0]
    start, _ = resolve_date_window(expr.value, anchor)
    assert start == utc(2026, 9, 4)
    expr = scan_message("Thursday then", "m1")[0]
    start, _ = resolve_date_window(expr.value, anchor)
    assert start == utc(2026, 9, 10)  # same-day names roll a week ahead


def test_month_day_rolls_to_next_year_when_past():
    anchor = utc(2026, 9, 3, 9, 0)
    expr = scan_message("January 5 works", "m1")[0]
    start, _ = resolve_date_window(expr.value, anchor)
    assert start == utc(2027, 1, 5)
