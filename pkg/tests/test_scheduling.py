"""Scheduling primitives: option proposal, agreement, modality, payloads."""

import numpy as np
import pytest

from tiersched.automation import LogisticModel, feature_names, load_dictionary
from tiersched.calendar_store import CalendarEvent, CalendarStore, SubscriberPrefs
from tiersched.clock import utc
from tiersched.scheduling import (Ballot, EscalationReason, IncompleteConstraints,
                                  MeetingConstraints, MeetingRequest, Modality,
                                  RequestState, TimeOption, build_macrotask_payload,
                                  describe_option, detect_modality, meeting_summary,
                                  process_ballot_response, propose_times,
                                  resolve_agreement)
from tiersched.taskboard import validate_payload, Tier

NOW = utc(2026, 9, 3, 9, 0)


def _constraints(duration=30, start=utc(2026, 9, 8), end=utc(2026, 9, 9)):
    return MeetingConstraints(duration_minutes=duration, window_start=start,
                              window_end=end)


def _calendar(**prefs):
    store = CalendarStore()
    store.ensure("org@corp.test",
                 prefs=SubscriberPrefs(**prefs) if prefs else None)
    return store


# ===== Proposing times =====


def test_propose_times_returns_disjoint_earliest_options():
    store = _calendar(work_start_hour=9, work_end_hour=12)
    options = propose_times(_constraints(duration=45), store, "org@corp.test",
                            k=3, grid_minutes=30)
    starts = [o.start for o in options]
    assert starts == [utc(2026, 9, 8, 9, 0), utc(2026, 9, 8, 10, 0),
                      utc(2026, 9, 8, 11, 0)]
    for first, second in zip(options, options[1:]):
        assert first.end <= second.start


def test_propose_times_avoids_busy_and_caps_at_k():
    store = _calendar(work_start_hour=9, work_end_hour=11)
    store.add_event("org@corp.test", CalendarEvent(
        "e1", "standup", utc(2026, 9, 8, 9, 0), utc(2026, 9, 8, 10, 0)))
    options = propose_times(_constraints(), store, "org@corp.test",
                            k=5, grid_minutes=30)
    assert [o.start for o in options] == [utc(2026, 9, 8, 10, 0),
                                          utc(2026, 9, 8, 10, 30)]


def test_propose_times_requires_complete_constraints():
    store = _calendar()
    with pytest.raises(IncompleteConstraints):
        propose_times(MeetingConstraints(duration_minutes=30), store,
                      "org@corp.test", k=3, grid_minutes=30)


# ===== Agreement =====


def test_agreement_picks_earliest_unanimous_option():
    options = [TimeOption(utc(2026, 9, 8, 9), utc(2026, 9, 8, 9, 30)),
               TimeOption(utc(2026, 9, 8, 10), utc(2026, 9, 8, 10, 30)),
               TimeOption(utc(2026, 9, 8, 11), utc(2026, 9, 8, 11, 30))]
    assert resolve_agreement(options, {
        "a": [False, True, True], "b": [True, True, False]}) == 1
    assert resolve_agreement(options, {
        "a": [True, False, False], "b": [False, False, True]}) is None
    assert resolve_agreement(options, {"a": [True, False, False]}) == 0


# ===== Modality =====


def test_detect_modality_keywords():
    assert detect_modality("can we do a zoom?") == (Modality.VIDEO_CALL, False)
    assert detect_modality("just call me") == (Modality.PHONE, False)
    assert detect_modality("call me, grab his number first") == (Modality.PHONE, True)
    assert detect_modality("meet in my office") == (Modality.IN_PERSON, False)
    assert detect_modality("whenever works") == (Modality.UNSPECIFIED, False)


def test_describe_option_is_readable():
    opt = TimeOption(utc(2026, 9, 8, 14, 30), utc(2026, 9, 8, 15, 0))
    assert describe_option(opt, 2) == "2. Tuesday, September 8 at 2:30pm UTC (30 minutes)"


# ===== Ballot interpretation =====


def _ballot():
    return Ballot(ballot_id="b1", invitee="inv@corp.test",
                  options=[TimeOption(utc(2026, 9, 8, 9), utc(2026, 9, 8, 9, 30)),
                           TimeOption(utc(2026, 9, 9, 14), utc(2026, 9, 9, 14, 30))],
                  issued_at=NOW, deadline=NOW)


def test_process_ballot_response_defers_without_a_model():
    assert process_ballot_response(_ballot(), "Tuesday works", None) is None


def test_process_ballot_response_defers_when_unsure():
    names = feature_names(load_dictionary())
    fence_sitter = LogisticModel(weights=np.zeros(len(names)), bias=0.0,
                                 feature_names=names)
    assert process_ballot_response(_ballot(), "Tuesday works", fence_sitter) is None


def test_process_ballot_response_answers_when_confident():
    names = feature_names(load_dictionary())
    weights = np.zeros(len(names))
    weights[names.index("opt:day_match")] = 12.0
    model = LogisticModel(weights=weights, bias=-6.0, feature_names=names)
    result = process_ballot_response(_ballot(), "Tuesday works for me", model)
    assert result["selections"] == [True, False]
    assert result["confident"] is True


# ===== Records and payloads =====


def _request():
    req = MeetingRequest(request_id="req-1", organizer="org@corp.test",
                         invitees=["inv@corp.test"], subject="Budget sync",
                         assistant="cal@assistant.test", created_at=NOW)
    req.constraints = _constraints()
    req.ballots["inv@corp.test"] = _ballot()
    req.options = list(req.ballots["inv@corp.test"].options)
    return req


def test_meeting_request_round_trip():
    req = _request()
    req.state = RequestState.AWAITING_RESPONSES
    again = MeetingRequest.from_dict(req.to_dict())
    assert again.to_dict() == req.to_dict()
    assert again.ballots["inv@corp.test"].options[0].start == utc(2026, 9, 8, 9)


def test_meeting_summary_includes_collected_phones():
    req = _request()
    assert meeting_summary(req) == "Budget sync"
    req.phones["inv@corp.test"] = "555-0101"
    assert meeting_summary(req) == "Budget sync [phones: inv: 555-0101]"


def test_macrotask_payload_passes_the_policy_gate():
    req = _request()
    payload = build_macrotask_payload(
        req, {"busy": [["2026-09-08T10:00:00Z", "2026-09-08T11:00:00Z"]]},
        [EscalationReason.NO_ACCEPTABLE_TIME.value])
    validate_payload(Tier.MACRO, "Macrotask", payload)
    assert payload["reasons"] == ["NoAcceptableTime"]
    assert payload["collected"]["constraints"]["duration_minutes"] == 30
    assert set(payload["calendar_view"]) == {"busy"}
    assert "SendMessage" in payload["actions"] and "PushBack" in payload["actions"]
