"""Simulated clock and time helpers shared by the runtime components."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone


def utc(year: int, month: int, day: int, hour: int = 0, minute: int = 0, second: int = 0) -> datetime:
    """Build a timezone-aware UTC datetime."""
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


def iso_utc(dt: datetime) -> str:
    """Render an aware datetime as RFC3339 UTC with a trailing Z."""
    if dt.tzinfo is None:
        raise ValueError("naive datetime not allowed")
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_iso_utc(text: str) -> datetime:
    """Parse the RFC3339 UTC form produced by iso_utc."""
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


class SimClock:
    """Monotone simulated clock; time only moves via advance_to."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("clock start must be timezone-aware")
        self._now = start.astimezone(timezone.utc)

    def now(self) -> datetime:
        return self._now

    def advance_to(self, when: datetime) -> None:
        when = when.astimezone(timezone.utc)
        if when < self._now:
            raise ValueError(f"clock cannot move backwards: {when} < {self._now}")
        self._now = when

    def advance_by(self, delta: timedelta) -> None:
        self.advance_to(self._now + delta)


def next_business_open(dt: datetime, start_hour: int, end_hour: int) -> datetime:
    """Shift dt forward to the next instant inside business hours (UTC wall time).

    Weekends are closed; dt already inside an open window is returned unchanged.
    """
    dt = dt.astimezone(timezone.utc)
    while True:
        if dt.weekday() >= 5:
            dt = (dt + timedelta(days=1)).replace(hour=start_hour, minute=0, second=0, microsecond=0)
            continue
        if dt.hour < start_hour:
            dt = dt.replace(hour=start_hour, minute=0, second=0, microsecond=0)
        if dt.hour >= end_hour:
            dt = (dt + timedelta(days=1)).replace(hour=start_hour, minute=0, second=0, microsecond=0)
            continue
        return dt


def within_business_hours(dt: datetime, start_hour: int, end_hour: int) -> bool:
    dt = dt.astimezone(timezone.utc)
    return dt.weekday() < 5 and start_hour <= dt.hour < end_hour
