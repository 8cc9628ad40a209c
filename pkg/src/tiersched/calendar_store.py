"""Subscriber calendars: busy time, free-slot search, and anonymized views."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, List, Optional, Tuple
from zoneinfo import ZoneInfo

from .clock import iso_utc, parse_iso_utc

# ===== Errors =====


class CalendarUnavailable(Exception):
    """The account exists but cannot be consulted right now."""


class UnknownAccount(Exception):
    pass


class UnknownEvent(Exception):
    pass


# ===== Types =====


@dataclass
class SubscriberPrefs:
    work_start_hour: int = 9
    work_end_hour: int = 17
    default_duration_minutes: int = 30

    def to_dict(self) -> Dict:
        return {
            "work_start_hour": self.work_start_hour,
            "work_end_hour": self.work_end_hour,
            "default_duration_minutes": self.default_duration_minutes,
        }

    @staticmethod
    def from_dict(d: Dict) -> "SubscriberPrefs":
        return SubscriberPrefs(
            work_start_hour=int(d.get("work_start_hour", 9)),
            work_end_hour=int(d.get("work_end_hour", 17)),
            default_duration_minutes=int(d.get("default_duration_minutes", 30)),
        )


@dataclass
class CalendarEvent:
    uid: str
    summary: str
    start: datetime
    end: datetime
    attendees: List[str] = field(default_factory=list)


@dataclass
class CalendarAccount:
    subscriber_id: str
    timezone: str = "UTC"
    accessible: bool = True
    prefs: SubscriberPrefs = field(default_factory=SubscriberPrefs)
    imported_busy: List[Tuple[datetime, datetime]] = field(default_factory=list)
    events: Dict[str, CalendarEvent] = field(default_factory=dict)

    def tzinfo(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)

    def busy_intervals(self) -> List[Tuple[datetime, datetime]]:
        """Imported blocks plus event times, merged and sorted."""
        raw = list(self.imported_busy)
        raw.extend((ev.start, ev.end) for ev in self.events.values())
        return merge_intervals(raw)


def merge_intervals(intervals: List[Tuple[datetime, datetime]]) -> List[Tuple[datetime, datetime]]:
    out: List[Tuple[datetime, datetime]] = []
    for start, end in sorted(intervals):
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], end))
        else:
            out.append((start, end))
    return out


def _overlaps(a0: datetime, a1: datetime, b0: datetime, b1: datetime) -> bool:
    return a0 < b1 and b0 < a1


# ===== Store =====


class CalendarStore:
    """All subscriber accounts known to the agent; optionally journaled."""

    def __init__(self, save_path: Optional[str] = None):
        self.accounts: Dict[str, CalendarAccount] = {}
        self.save_path = save_path
        self._journal_fh = None
        self._replaying = False

    def _journal(self, line: Dict) -> None:
        if not self.save_path or self._replaying:
            return
        if self._journal_fh is None:
            self._journal_fh = open(self.save_path, "a", encoding="utf-8")
        self._journal_fh.write(json.dumps(line, sort_keys=True) + "\n")
        self._journal_fh.flush()

    def load(self) -> None:
        """Replay the journal into memory."""
        if not self.save_path or not os.path.exists(self.save_path):
            return
        self._replaying = True
        try:
            with open(self.save_path, "r", encoding="utf-8") as fh:
                for raw in fh:
                    raw = raw.strip()
                    if raw:
                        self._apply(json.loads(raw))
        finally:
            self._replaying = False

    def _apply(self, line: Dict) -> None:
        if "fixture" in line:
            self.load_fixture_entry(line["fixture"])
        elif "ensure" in line:
            entry = line["ensure"]
            self.ensure(entry["subscriber_id"], entry.get("timezone", "UTC"),
                        SubscriberPrefs.from_dict(entry.get("prefs") or {}))
        elif "add" in line:
            entry = line["add"]
            self.add_event(entry["subscriber_id"], CalendarEvent(
                uid=entry["uid"], summary=entry["summary"],
                start=parse_iso_utc(entry["start"]), end=parse_iso_utc(entry["end"]),
                attendees=list(entry.get("attendees") or [])))
        elif "update" in line:
            entry = line["update"]
            self.update_event(entry["subscriber_id"], entry["uid"],
                              parse_iso_utc(entry["start"]), parse_iso_utc(entry["end"]))
        elif "cancel" in line:
            entry = line["cancel"]
            self.cancel_event(entry["subscriber_id"], entry["uid"])

    def ensure(self, subscriber_id: str, timezone: str = "UTC",
               prefs: Optional[SubscriberPrefs] = None) -> CalendarAccount:
        acct = self.accounts.get(subscriber_id)
        if acct is None:
            acct = CalendarAccount(subscriber_id=subscriber_id, timezone=timezone,
                                   prefs=prefs or SubscriberPrefs())
            self.accounts[subscriber_id] = acct
            self._journal({"ensure": {"subscriber_id": subscriber_id,
                                      "timezone": timezone,
                                      "prefs": acct.prefs.to_dict()}})
        return acct

    def get(self, subscriber_id: str) -> CalendarAccount:
        acct = self.accounts.get(subscriber_id)
        if acct is None:
            raise UnknownAccount(subscriber_id)
        return acct

    def free_slots(self, subscriber_id: str, window: Tuple[datetime, datetime],
                   duration_minutes: int, grid_minutes: int = 30) -> List[Tuple[datetime, datetime]]:
        """Grid-aligned candidate slots inside work hours with no busy overlap.

        Slots start every grid_minutes from the work-day opening (account
        timezone) and must fit entirely inside both the window and work hours.
        """
        acct = self.get(subscriber_id)
        if not acct.accessible:
            raise CalendarUnavailable(subscriber_id)
        if duration_minutes <= 0:
            raise ValueError("duration must be positive")
        win_start, win_end = window
        tz = acct.tzinfo()
        busy = acct.busy_intervals()
        duration = timedelta(minutes=duration_minutes)
        grid = timedelta(minutes=grid_minutes)
        slots: List[Tuple[datetime, datetime]] = []
        day = win_start.astimezone(tz).date()
        last_day = win_end.astimezone(tz).date()
        while day <= last_day:
            open_t = datetime(day.year, day.month, day.day,
                              acct.prefs.work_start_hour, tzinfo=tz)
            close_t = datetime(day.year, day.month, day.day,
                               acct.prefs.work_end_hour, tzinfo=tz)
            cursor = open_t
            while cursor + duration <= close_t:
                start = cursor
                end = cursor + duration
                cursor = cursor + grid
                if start < win_start or end > win_end:
                    continue
                if any(_overlaps(start, end, b0, b1) for b0, b1 in busy):
                    continue
                slots.append((start.astimezone(win_start.tzinfo), end.astimezone(win_start.tzinfo)))
            day = day + timedelta(days=1)
        return slots

    def add_event(self, subscriber_id: str, event: CalendarEvent) -> None:
        acct = self.get(subscriber_id)
        if not acct.accessible:
            raise CalendarUnavailable(subscriber_id)
        acct.events[event.uid] = event
        self._journal({"add": {"subscriber_id": subscriber_id, "uid": event.uid,
                               "summary": event.summary,
                               "start": iso_utc(event.start), "end": iso_utc(event.end),
                               "attendees": list(event.attendees)}})

    def update_event(self, subscriber_id: str, uid: str,
                     start: datetime, end: datetime) -> CalendarEvent:
        acct = self.get(subscriber_id)
        ev = acct.events.get(uid)
        if ev is None:
            raise UnknownEvent(uid)
        ev.start = start
        ev.end = end
        self._journal({"update": {"subscriber_id": subscriber_id, "uid": uid,
                                  "start": iso_utc(start), "end": iso_utc(end)}})
        return ev

    def cancel_event(self, subscriber_id: str, uid: str) -> None:
        acct = self.get(subscriber_id)
        if uid not in acct.events:
            raise UnknownEvent(uid)
        del acct.events[uid]
        self._journal({"cancel": {"subscriber_id": subscriber_id, "uid": uid}})

    def anonymize(self, subscriber_id: str) -> Dict:
        """Busy/free view safe to show a tier-3 worker: intervals only."""
        acct = self.get(subscriber_id)
        if not acct.accessible:
            raise CalendarUnavailable(subscriber_id)
        return {
            "busy": [[iso_utc(s), iso_utc(e)] for s, e in acct.busy_intervals()]
        }

    # ----- fixtures -----

    def load_fixture(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        for entry in data if isinstance(data, list) else [data]:
            self.load_fixture_entry(entry)

    def load_fixture_entry(self, entry: Dict) -> CalendarAccount:
        acct = CalendarAccount(
            subscriber_id=entry["subscriber_id"],
            timezone=entry.get("timezone", "UTC"),
            accessible=bool(entry.get("accessible", True)),
            prefs=SubscriberPrefs.from_dict(entry.get("prefs") or {}),
            imported_busy=[
                (parse_iso_utc(s), parse_iso_utc(e)) for s, e in entry.get("busy") or []
            ],
        )
        self.accounts[acct.subscriber_id] = acct
        self._journal({"fixture": dict(entry)})
        return acct
