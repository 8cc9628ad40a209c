"""Hand-written grammar for duration and date expressions in request email.

Deliberately narrow: only two expression kinds are extracted, only the latest
message of a thread is scanned, and when several candidates survive, the one
whose span midpoint sits closest to the first mention of the assistant's name
wins. Precision over recall; anything missed becomes a human microtask.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple
from zoneinfo import ZoneInfo

WEEKDAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]

_MONTHS = {
    "jan": 1, "january": 1, "feb": 2, "february": 2, "mar": 3, "march": 3,
    "apr": 4, "april": 4, "may": 5, "jun": 6, "june": 6, "jul": 7, "july": 7,
    "aug": 8, "august": 8, "sep": 9, "sept": 9, "september": 9, "oct": 10,
    "october": 10, "nov": 11, "november": 11, "dec": 12, "december": 12,
}


class ExpressionKind(str, Enum):
    DURATION = "Duration"
    DATE = "Date"


@dataclass
class TimeExpression:
    kind: ExpressionKind
    text: str
    span: Tuple[int, int]
    value: Dict
    source_message: str

    def midpoint(self) -> float:
        return (self.span[0] + self.span[1]) / 2.0


# ===== Pattern table =====

_DAY_ALT = "|".join(WEEKDAYS)
_MONTH_ALT = "|".join(sorted(_MONTHS, key=len, reverse=True))

# (kind, compiled pattern, value builder); order is match priority
_PATTERNS: List[Tuple[ExpressionKind, re.Pattern, object]] = [
    (ExpressionKind.DURATION, re.compile(r"\bhalf\s+an\s+hour\b", re.I),
     lambda m: {"minutes": 30}),
    (ExpressionKind.DURATION, re.compile(r"\ban\s+hour\s+and\s+a\s+half\b", re.I),
     lambda m: {"minutes": 90}),
    (ExpressionKind.DURATION, re.compile(r"\b(\d+)\s*(?:hours|hour|hrs|hr)\b", re.I),
     lambda m: {"minutes": int(m.group(1)) * 60}),
    (ExpressionKind.DURATION, re.compile(r"\ban\s+hour\b", re.I),
     lambda m: {"minutes": 60}),
    (ExpressionKind.DURATION, re.compile(r"\b(\d+)\s*(?:minutes|minute|mins|min)\b", re.I),
     lambda m: {"minutes": int(m.group(1))}),
    (ExpressionKind.DATE, re.compile(r"\bnext\s+week\b", re.I),
     lambda m: {"date_kind": "next_week"}),
    (ExpressionKind.DATE, re.compile(rf"\bnext\s+({_DAY_ALT})\b", re.I),
     lambda m: {"date_kind": "next_weekday", "weekday": WEEKDAYS.index(m.group(1).lower())}),
    (ExpressionKind.DATE, re.compile(r"\btoday\b", re.I),
     lambda m: {"date_kind": "relative", "days": 0}),
    (ExpressionKind.DATE, re.compile(r"\btomorrow\b", re.I),
     lambda m: {"date_kind": "relative", "days": 1}),
    (ExpressionKind.DATE, re.compile(rf"\b({_MONTH_ALT})\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?\b", re.I),
     lambda m: {"date_kind": "month_day", "month": _MONTHS[m.group(1).lower()], "day": int(m.group(2))}),
    (ExpressionKind.DATE, re.compile(r"\b(\d{1,2})/(\d{1,2})\b"),
     lambda m: {"date_kind": "month_day", "month": int(m.group(1)), "day": int(m.group(2))}),
    (ExpressionKind.DATE, re.compile(rf"\b({_DAY_ALT})\b", re.I),
     lambda m: {"date_kind": "weekday", "weekday": WEEKDAYS.index(m.group(1).lower())}),
]


def scan_message(body: str, message_id: str) -> List[TimeExpression]:
    """All non-overlapping expression matches in one message body."""
    raw: List[Tuple[int, int, int, ExpressionKind, Dict, str]] = []
    for priority, (kind, pattern, build) in enumerate(_PATTERNS):
        for m in pattern.finditer(body):
            raw.append((m.start(), -(m.end() - m.start()), priority, kind, build(m), m.group(0)))
    raw.sort(key=lambda t: (t[0], t[1], t[2]))
    taken: List[Tuple[int, int]] = []
    out: List[TimeExpression] = []
    for start, neg_len, _prio, kind, value, text in raw:
        end = start - neg_len
        if any(s < end and start < e for s, e in taken):
            continue
        taken.append((start, end))
        out.append(TimeExpression(kind=kind, text=text, span=(start, end),
                                  value=value, source_message=message_id))
    out.sort(key=lambda e: e.span)
    return out


def extract_time_expressions(thread: Sequence) -> List[TimeExpression]:
    """Scan only the latest message of a thread (items expose body/message_id)."""
    if not thread:
        return []
    latest = thread[-1]
    return scan_message(latest.body, latest.message_id)


# ===== Field selection =====


@dataclass
class FieldSelection:
    duration: Optional[TimeExpression]
    date: Optional[TimeExpression]


def _pick(candidates: List[TimeExpression], anchor: Optional[float]) -> Optional[TimeExpression]:
    if not candidates:
        return None
    if anchor is None:
        return min(candidates, key=lambda e: e.span)
    return min(candidates, key=lambda e: (abs(e.midpoint() - anchor), e.span[0]))


def select_meeting_fields(expressions: Sequence[TimeExpression], body: str,
                          assistant_name: str = "Cal") -> FieldSelection:
    """Pick one duration and one date candidate for the meeting fields.

    The anchor is the midpoint of the first assistant-name mention; without a
    mention the earliest expression of each kind wins.
    """
    anchor: Optional[float] = None
    mention = re.search(rf"\b{re.escape(assistant_name)}\b", body, re.IGNORECASE)
    if mention:
        anchor = (mention.start() + mention.end()) / 2.0
    durations = [e for e in expressions if e.kind == ExpressionKind.DURATION]
    dates = [e for e in expressions if e.kind == ExpressionKind.DATE]
    return FieldSelection(duration=_pick(durations, anchor), date=_pick(dates, anchor))


# ===== Value resolution =====


def resolve_duration_minutes(value: Dict) -> int:
    return int(value["minutes"])


def resolve_date_window(value: Dict, anchor: datetime, tz: str = "UTC") -> Tuple[datetime, datetime]:
    """Turn a date expression value into a concrete [start, end) UTC window."""
    zone = ZoneInfo(tz)
    local_anchor = anchor.astimezone(zone)
    kind = value["date_kind"]
    if kind == "relative":
        day = local_anchor.date() + timedelta(days=int(value["days"]))
        return _day_window(day, zone)
    if kind == "weekday":
        ahead = (int(value["weekday"]) - local_anchor.weekday()) % 7
        if ahead == 0:
            ahead = 7
        return _day_window(local_anchor.date() + timedelta(days=ahead), zone)
    if kind == "next_weekday":
        next_monday = local_anchor.date() + timedelta(days=7 - local_anchor.weekday())
        return _day_window(next_monday + timedelta(days=int(value["weekday"])), zone)
    if kind == "next_week":
        next_monday = local_anchor.date() + timedelta(days=7 - local_anchor.weekday())
        start = datetime(next_monday.year, next_monday.month, next_monday.day, tzinfo=zone)
        return (start, start + timedelta(days=7))
    if kind == "month_day":
        year = local_anchor.year
        candidate = datetime(year, int(value["month"]), int(value["day"]), tzinfo=zone)
        if candidate.date() < local_anchor.date():
            candidate = candidate.replace(year=year + 1)
        return _day_window(candidate.date(), zone)
    raise ValueError(f"unknown date expression kind {kind!r}")


def _day_window(day, zone: ZoneInfo) -> Tuple[datetime, datetime]:
    start = datetime(day.year, day.month, day.day, tzinfo=zone)
    return (start, start + timedelta(days=1))
