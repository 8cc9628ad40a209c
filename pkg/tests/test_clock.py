"""Simulated clock, ISO formatting, and business-hours helpers."""

from datetime import timedelta, timezone

import pytest

from tiersched.clock import (SimClock, iso_utc, next_business_open, parse_iso_utc,
                             utc, within_business_hours)

# ===== Construction and movement =====


def test_clock_requires_timezone_aware_start():
    from datetime import datetime
    with pytest.raises(ValueError):
        SimClock(datetime(2026, 9, 3, 9, 0))


def test_clock_only_moves_forward():
    clk = SimClock(utc(2026, 9, 3, 9, 0))
    clk.advance_to(utc(2026, 9, 3, 10, 0))
    assert clk.now() == utc(2026, 9, 3, 10, 0)
    with pytest.raises(ValueError):
        clk.advance_to(utc(2026, 9, 3, 9, 30))


def test_advance_by_accumulates():
    clk = SimClock(utc(2026, 9, 3, 9, 0))
    clk.advance_by(timedelta(minutes=90))
    clk.advance_by(timedelta(seconds=30))
    assert iso_utc(clk.now()) == "2026-09-03T10:30:30Z"


# ===== ISO round-trip =====


def test_iso_round_trip():
    stamp = utc(2026, 12, 31, 23, 59, 59)
    assert parse_iso_utc(iso_utc(stamp)) == stamp


def test_iso_normalizes_other_zones():
    eastern = utc(2026, 9, 3, 14, 0).astimezone(timezone(timedelta(hours=-4)))
    assert iso_utc(eastern) == "2026-09-03T14:00:00Z"


# ===== Business hours =====


def test_next_business_open_skips_weekend():
    saturday = utc(2026, 9, 5, 11, 0)
    assert next_business_open(saturday, 9, 17) == utc(2026, 9, 7, 9, 0)


def test_next_business_open_keeps_open_hours():
    midday = utc(2026, 9, 3, 13, 0)  # a Thursday
    assert next_business_open(midday, 9, 17) == midday


def test_after_close_rolls_to_next_morning():
    evening = utc(2026, 9, 3, 18, 0)
    assert next_business_open(evening, 9, 17) == utc(2026, 9, 4, 9, 0)
    assert not within_business_hours(evening, 9, 17)
    assert within_business_hours(utc(2026, 9, 3, 9, 0), 9, 17)
