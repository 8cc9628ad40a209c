"""HTTP surface: envelopes, error mapping, and the full console workflow."""

import pytest
from fastapi.testclient import TestClient

from tiersched.api import create_app, create_live_app
from tiersched.simulator import Simulator, build_scenario


@pytest.fixture
def client(tmp_path):
    app = create_live_app(str(tmp_path / "live"))
    with TestClient(app) as tc:
        yield tc


def _claim(client, tier="micro", worker="w1"):
    return client.get(f"/api/tasks/next?tier={tier}&worker={worker}")


def _advance(client, minutes):
    response = client.post("/api/sim/advance", json={"minutes": minutes})
    assert response.status_code == 200
    return response.json()


# ===== Basic endpoints =====


def test_health_reports_simulated_time(client):
    body = client.get("/api/health").json()
    assert body["status"] == "ok"
    assert body["now"].endswith("Z")


def test_request_listing_and_detail(client):
    listing = client.get("/api/requests").json()
    ids = [r["request_id"] for r in listing["requests"]]
    assert ids == ["req-0001", "req-0002"]
    assert listing["queued"]["micro"] >= 1

    detail = client.get("/api/requests/req-0001").json()
    assert detail["state"] == "Intake"
    assert detail["request"]["subject"] == "Quarterly review"
    assert client.get("/api/requests/req-9999").status_code == 404


def test_error_statuses_for_bad_claims(client):
    assert _claim(client, tier="macro").status_code == 204  # nothing queued yet
    assert _claim(client, tier="bogus").status_code == 422
    assert _claim(client, worker="%20").status_code == 422
    assert client.get("/api/tasks/ghost-task").status_code == 404


# ===== Claim and submit =====


def test_claim_envelope_carries_suggestions(client):
    body = _claim(client).json()
    assert set(body) == {"task", "now"}
    task = body["task"]
    assert task["kind"] == "ClassifyIntent"
    assert task["status"] == "Claimed"
    assert task["suggestions"]["verdict"] in ("new", "existing")
    assert "email" in task["payload"]


def test_submit_validates_worker_and_schema(client):
    task = _claim(client).json()["task"]
    url = f"/api/tasks/{task['task_id']}/submit"
    assert client.post(url, json={"worker": "", "output": {}}).status_code == 422
    thief = client.post(url, json={"worker": "w2", "output": {"verdict": "new"}})
    assert (thief.status_code, thief.json()["error"]) == (409, "not_claimant")
    bad = client.post(url, json={"worker": "w1", "output": {"verdict": "nah"}})
    assert (bad.status_code, bad.json()["error"]) == (422, "schema_mismatch")
    good = client.post(url, json={"worker": "w1", "output": {"verdict": "new"}})
    assert good.status_code == 200
    assert good.json()["task"]["status"] == "Done"
    again = client.post(url, json={"worker": "w1", "output": {"verdict": "new"}})
    assert again.status_code == 409


def test_full_scheduling_round_trip_over_http(client):
    # both opening emails left a classification behind; work through them
    for _ in range(2):
        task = _claim(client).json()["task"]
        assert task["kind"] == "ClassifyIntent"
        client.post(f"/api/tasks/{task['task_id']}/submit",
                    json={"worker": "w1", "output": {"verdict": "new"}})
    _advance(client, 5)  # scripted invitee replies to the ballot
    reply_task = _claim(client).json()["task"]
    assert reply_task["kind"] == "InterpretBallotResponse"
    assert reply_task["request_id"] == "req-0001"
    done = client.post(f"/api/tasks/{reply_task['task_id']}/submit",
                       json={"worker": "w1",
                             "output": {"selections": [True, False, False]}})
    assert done.status_code == 200
    detail = client.get("/api/requests/req-0001").json()
    assert detail["state"] == "Scheduled"
    assert detail["open_tasks"] == []


# ===== Escalation and macro actions =====


def _schedule_first_then_escalate_second(client):
    """Drive req-0001 to Scheduled, then let silent req-0002 escalate."""
    for _ in range(2):
        task = _claim(client).json()["task"]
        client.post(f"/api/tasks/{task['task_id']}/submit",
                    json={"worker": "w1", "output": {"verdict": "new"}})
    _advance(client, 5)
    interpret = _claim(client).json()["task"]
    client.post(f"/api/tasks/{interpret['task_id']}/submit",
                json={"worker": "w1", "output": {"selections": [True, False, False]}})
    assert client.get("/api/requests/req-0001").json()["state"] == "Scheduled"

    _advance(client, 5 * 24 * 60)  # silent invitee: ladder runs, organizer keeps
    macro = _claim(client, tier="macro", worker="boss")
    assert macro.status_code == 200
    task = macro.json()["task"]
    assert task["request_id"] == "req-0002"
    return task


def test_cant_answer_escalates_over_http(client):
    task = _claim(client).json()["task"]
    res = client.post(f"/api/tasks/{task['task_id']}/cant-answer",
                      json={"worker": "w1"})
    assert res.status_code == 200
    assert res.json()["task"]["status"] == "Escalated"
    macro = _claim(client, tier="macro", worker="boss")
    assert macro.status_code == 200
    assert macro.json()["task"]["payload"]["reasons"] == ["Other"]


def test_macro_action_sequence_over_http(client):
    task = _schedule_first_then_escalate_second(client)
    url = f"/api/tasks/{task['task_id']}/macro-action"

    bad = client.post(url, json={"worker": "boss", "action": {"type": "Explode"}})
    assert (bad.status_code, bad.json()["error"]) == (422, "invalid_action")

    note = client.post(url, json={"worker": "boss", "action": {
        "type": "SendMessage", "to": ["ghost@corp.test"], "body": "any update?"}})
    assert note.json()["task"]["status"] == "Claimed"  # stays with the expert

    parked = client.post(url, json={"worker": "boss", "action": {
        "type": "PushBack", "delay_minutes": 30}})
    assert parked.json()["task"]["status"] == "Returned"

    _advance(client, 45)
    again = _claim(client, tier="macro", worker="boss").json()["task"]
    assert again["task_id"] == task["task_id"]
    closed = client.post(url, json={"worker": "boss", "action": {"type": "Cancel"}})
    assert closed.json()["task"]["status"] == "Done"
    assert client.get("/api/requests/req-0002").json()["state"] == "Cancelled"


# ===== Simulation control =====


def test_sim_advance_validation(client):
    bad = client.post("/api/sim/advance", json={"minutes": "soon"})
    assert bad.status_code == 422
    zero = client.post("/api/sim/advance", json={"minutes": 0})
    assert zero.status_code == 422
    moved = _advance(client, 1.5)
    assert set(moved) == {"now", "handled"}


def test_sim_state_snapshot(client):
    state = client.get("/api/sim/state").json()
    assert state["scenario"] == "live_console"
    assert {"micro", "macro"} <= set(state["queued"])


def test_sim_routes_absent_without_a_simulator(tmp_path):
    sim = Simulator(build_scenario("live_console", 0), str(tmp_path / "plain"),
                    workers=False)
    app = create_app(sim.agent)  # no simulator attached
    with TestClient(app) as tc:
        assert tc.post("/api/sim/advance", json={"minutes": 5}).status_code == 404
        assert tc.get("/api/health").status_code == 200
