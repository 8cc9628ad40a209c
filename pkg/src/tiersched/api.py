"""HTTP interface exposing the task queues and simulation control."""

import threading
from datetime import timedelta
from typing import Dict, Optional

from fastapi import Body, FastAPI, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .agent import SchedulingAgent
from .clock import iso_utc
from .config import AgentConfig
from .simulator import ScenarioStuck, Simulator, build_scenario
from .taskboard import (
    AlreadyTerminal,
    InvalidAction,
    NotClaimant,
    PayloadPolicyViolation,
    SchemaMismatch,
    Tier,
    UnknownTask,
)

# ===== Error mapping =====

_ERROR_STATUS = [
    (UnknownTask, 404, "unknown_task"),
    (NotClaimant, 409, "not_claimant"),
    (AlreadyTerminal, 409, "already_terminal"),
    (ScenarioStuck, 409, "scenario_stuck"),
    (SchemaMismatch, 422, "schema_mismatch"),
    (InvalidAction, 422, "invalid_action"),
    (PayloadPolicyViolation, 422, "payload_policy_violation"),
]


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


# ===== Application factory =====

def create_app(agent: SchedulingAgent, simulator: Optional[Simulator] = None) -> FastAPI:
    """Build the HTTP app over an agent, optionally with simulation control."""
    app = FastAPI(title="tiersched", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.agent = agent
    app.state.simulator = simulator
    lock = threading.Lock()

    for exc_type, status, code in _ERROR_STATUS:
        def handler(request, exc, status=status, code=code):
            return _error(status, code, str(exc))
        app.add_exception_handler(exc_type, handler)

    def envelope(task) -> Dict:
        return {"task": task.to_dict(), "now": iso_utc(agent.clock.now())}

    # ----- worker endpoints -----

    @app.get("/api/health")
    def health() -> Dict:
        return {"status": "ok", "now": iso_utc(agent.clock.now())}

    @app.get("/api/tasks/next")
    def claim_next(tier: str = Query(...), worker: str = Query(...)):
        if not worker.strip():
            return _error(422, "bad_request", "worker must be a non-empty string")
        try:
            tier_value = Tier(tier)
        except ValueError:
            choices = ", ".join(t.value for t in Tier)
            return _error(422, "bad_request", f"tier must be one of: {choices}")
        with lock:
            task = agent.taskboard.claim_next(worker, tier_value)
            if task is None:
                return Response(status_code=204)
            return envelope(task)

    @app.get("/api/tasks/{task_id}")
    def get_task(task_id: str) -> Dict:
        with lock:
            return envelope(agent.taskboard.get(task_id))

    @app.post("/api/tasks/{task_id}/submit")
    def submit(task_id: str, body: Dict = Body(...)):
        worker = body.get("worker")
        if not isinstance(worker, str) or not worker.strip():
            return _error(422, "bad_request", "worker must be a non-empty string")
        with lock:
            return envelope(agent.taskboard.submit(task_id, worker, body.get("output")))

    @app.post("/api/tasks/{task_id}/cant-answer")
    def cant_answer(task_id: str, body: Dict = Body(...)):
        worker = body.get("worker")
        if not isinstance(worker, str) or not worker.strip():
            return _error(422, "bad_request", "worker must be a non-empty string")
        with lock:
            return envelope(agent.taskboard.cant_answer(task_id, worker))

    @app.post("/api/tasks/{task_id}/macro-action")
    def macro_action(task_id: str, body: Dict = Body(...)):
        worker = body.get("worker")
        if not isinstance(worker, str) or not worker.strip():
            return _error(422, "bad_request", "worker must be a non-empty string")
        with lock:
            task = agent.taskboard.resolve_macro(task_id, worker, body.get("action"))
            return envelope(task)

    # ----- request inspection -----

    @app.get("/api/requests")
    def list_requests() -> Dict:
        with lock:
            report = agent.inspect()
            rows = [{
                "request_id": r["request_id"],
                "subject": (r["request"] or {}).get("subject"),
                "state": r["state"],
                "workflow_version": r["workflow_version"],
            } for r in report["requests"]]
            return {"requests": rows,
                    "queued": {"micro": report["queued_micro"],
                               "macro": report["queued_macro"]},
                    "now": iso_utc(agent.clock.now())}

    @app.get("/api/requests/{request_id}")
    def get_request(request_id: str):
        with lock:
            try:
                report = agent.inspect(request_id)
            except KeyError:
                return _error(404, "unknown_request", f"no request {request_id!r}")
            report["now"] = iso_utc(agent.clock.now())
            return report

    # ----- simulation control -----

    if simulator is not None:
        @app.post("/api/sim/advance")
        def advance(body: Dict = Body(...)):
            minutes = body.get("minutes")
            try:
                minutes = float(minutes)
            except (TypeError, ValueError):
                return _error(422, "bad_request", "minutes must be a number")
            if minutes <= 0:
                return _error(422, "bad_request", "minutes must be positive")
            with lock:
                target = agent.clock.now() + timedelta(minutes=minutes)
                handled = simulator.step_until(target)
                return {"now": iso_utc(agent.clock.now()), "handled": handled}

        @app.get("/api/sim/state")
        def sim_state() -> Dict:
            with lock:
                report = agent.inspect()
                return {
                    "now": iso_utc(agent.clock.now()),
                    "scenario": simulator.scenario.name,
                    "queued": {"micro": report["queued_micro"],
                               "macro": report["queued_macro"]},
                    "pending_items": len(simulator.heap),
                    "requests": [{
                        "request_id": r["request_id"],
                        "subject": (r["request"] or {}).get("subject"),
                        "state": r["state"],
                        "workflow_version": r["workflow_version"],
                    } for r in report["requests"]],
                }

    return app


def create_live_app(data_dir: str, scenario: str = "live_console", seed: int = 0,
                    config: Optional[AgentConfig] = None) -> FastAPI:
    """Build an app over a fresh scenario whose tasks humans work by hand."""
    sim = Simulator(build_scenario(scenario, seed), data_dir, seed=seed,
                    config=config, workers=False)
    # Deliver the scenario's opening mail so the console has work immediately.
    sim.step_until(sim.clock.now() + timedelta(minutes=2))
    return create_app(sim.agent, simulator=sim)
