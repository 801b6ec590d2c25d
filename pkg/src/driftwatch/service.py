"""HTTP JSON API over the monitoring pipeline."""

from __future__ import annotations

import logging
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .eventlog import EventLog
from .ingest import TrainingProfile, parse_jsonl_stream
from .pipeline import Monitor
from .registry import MalformedDocumentError, RegistrySchemaError, serialize_registry
from .respond import ApprovalConflictError, ApprovalState, UnknownApprovalError
from .schema import SchemaError

logger = logging.getLogger(__name__)


def build_monitor(config: ServiceConfig) -> Monitor:
    """Assemble a Monitor from the files named in the config."""
    config.validate_for_serve()
    profile = TrainingProfile.load(config.profile_path)
    event_log = EventLog(config.event_log_path)
    with open(config.registry_path, "rb") as fh:
        document = fh.read()
    monitor = Monitor(
        profile=profile,
        registry=None,  # replaced below so validation reports are surfaced
        event_log=event_log,
        config=config.pipeline(),
        command_log_path=config.command_log_path,
    )
    reports = monitor.replace_registry(document)
    bad = [r for r in reports if not r.ok]
    if bad:
        details = "; ".join(
            f"{r.scenario_id}: {v.field} {v.message}" for r in bad for v in r.violations
        )
        raise RegistrySchemaError("$.scenarios", f"registry rejected: {details}")
    return monitor


def create_app(monitor: Monitor, config: ServiceConfig) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app):
        yield
        monitor.event_log.close()  # graceful shutdown flushes the log

    app = FastAPI(title="driftwatch", version="0.1.0", lifespan=lifespan)

    @app.post("/observations", status_code=202)
    async def post_observations(request: Request):
        body = (await request.body()).decode("utf-8")
        try:
            observations = parse_jsonl_stream(body.splitlines())
            fills = monitor.ingest(observations)
        except (SchemaError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"accepted": len(observations), "fills": fills}

    @app.get("/alerts")
    def get_alerts(model: Optional[str] = None, limit: int = Query(50, ge=1, le=1000)):
        alerts = monitor.alerts(limit=limit)
        if model is not None:
            alerts = [a for a in alerts if a["model"] == model]
        return {"alerts": alerts}

    @app.get("/assessments/latest")
    def get_latest_assessment(model: Optional[str] = None):
        record = monitor.latest_assessment()
        if record is None or (model is not None and record["model"] != model):
            raise HTTPException(status_code=404, detail="no assessment yet")
        return record

    @app.get("/assessments/{window_id}")
    def get_assessment(window_id: str):
        record = monitor.assessment_for(window_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown window {window_id}")
        return record

    @app.get("/decisions")
    def get_decisions(model: Optional[str] = None, limit: int = Query(50, ge=1, le=1000)):
        decisions = monitor.decisions(limit=limit)
        if model is not None:
            decisions = [d for d in decisions if d["model"] == model]
        return {"decisions": decisions}

    @app.get("/scenarios")
    def get_scenarios():
        return monitor.registry.to_json()

    @app.put("/scenarios")
    def put_scenarios(document: dict = Body(...)):
        import json as _json

        try:
            reports = monitor.replace_registry(_json.dumps(document))
        except (MalformedDocumentError, RegistrySchemaError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        payload = {"reports": [r.to_json() for r in reports]}
        if any(not r.ok for r in reports):
            return JSONResponse(status_code=400, content=payload)
        payload["accepted"] = len(reports)
        return payload

    @app.get("/approvals")
    def get_approvals(state: Optional[str] = None):
        state_filter = None
        if state is not None:
            try:
                state_filter = ApprovalState(state)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown state {state!r}") from None
        return {"approvals": [i.to_json() for i in monitor.approvals.list(state_filter)]}

    @app.post("/approvals/{approval_id}")
    def post_approval(approval_id: str, body: dict = Body(...)):
        verdict = body.get("verdict")
        if verdict not in ("approve", "reject"):
            raise HTTPException(status_code=400, detail="verdict must be approve or reject")
        try:
            item = monitor.resolve_approval(approval_id, verdict,
                                            resolver=body.get("resolver", "api"))
        except UnknownApprovalError:
            raise HTTPException(status_code=404, detail=f"unknown approval {approval_id}") from None
        except ApprovalConflictError as exc:
            return JSONResponse(status_code=409, content={
                "detail": str(exc), "state": exc.state,
            })
        return item.to_json()

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "models": list(monitor.store.models),
            "bf_threshold": config.bf_threshold,
            "window_size": config.window_size,
            "cooldown_windows": config.cooldown_windows,
            "scenarios": len(monitor.registry),
        }

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted; the event log flushes on shutdown."""
    import uvicorn

    monitor = build_monitor(config)
    app = create_app(monitor, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
