"""HTTP API for authoring math and troubleshooting sessions.

All payloads are JSON mirroring the persistence field names. Sessions live in
an in-memory store guarded by optimistic sequence numbers: each accepted
mutation bumps ``seq`` by exactly one, and a mutation carrying a stale ``seq``
is rejected with 409 so the client refetches. Per-session mutations are
serialized with a lock; responses are a pure function of store state and
request.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from bats import engine
from bats.compiler import CompiledNetwork, compile_model
from bats.config import CliConfig
from bats.elicitation import (
    Wish,
    WishTable,
    collapse_cause_tree,
    fit_probabilities,
    slider_update,
)
from bats.engine import Recommendation, Session, Terminal
from bats.errors import (
    BatsError,
    CompileBlocked,
    EngineError,
    ParseError,
    SchemaVersionMismatch,
)
from bats.model import ErrorConditionModel, GeneralQuestion, validate_model
from bats.persistence import model_to_document, parse_model, session_to_document


@dataclass
class _SessionRecord:
    session: Session
    network: CompiledNetwork
    model_id: str
    profile: str
    seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """Models and sessions shared by all requests; one lock per session."""

    def __init__(self, config: CliConfig):
        self.config = config
        self.models: dict[str, ErrorConditionModel] = {}
        self.sessions: dict[str, _SessionRecord] = {}
        self._models_lock = threading.Lock()


def _report_body(report) -> dict:
    return {
        "errors": [
            {"code": f.code, "path": f.path, "message": f.message}
            for f in report.errors
        ],
        "warnings": [
            {"code": f.code, "path": f.path, "message": f.message}
            for f in report.warnings
        ],
    }


def _recommendation_body(rec: Recommendation | Terminal | None,
                         model: ErrorConditionModel,
                         network: CompiledNetwork) -> tuple[dict | None, dict | None]:
    """Split the planner's answer into (recommendation, terminal) JSON halves."""
    if rec is None:
        return None, None
    if isinstance(rec, Terminal):
        return None, {"status": rec.status, "resolved_by": rec.resolved_by}
    step = network.step_by_id(rec.step_id)
    source = model.action_by_id(rec.step_id) or model.question_by_id(rec.step_id)
    return {
        "step_id": rec.step_id,
        "kind": rec.kind,
        "name": source.name if source else rec.step_id,
        "explanation": source.explanation if source else "",
        "outcomes": list(step.outcomes) if step else [],
        "cost": step.cost if step else 0.0,
        "ecr": rec.ecr,
        "success_probability": rec.success_probability,
        "answer_distribution": (dict(rec.answer_distribution)
                                if rec.answer_distribution is not None else None),
        "rationale": dict(rec.rationale),
    }, None


def _session_body(record: _SessionRecord, session_id: str,
                  store: SessionStore) -> dict:
    session = record.session
    model = store.models[record.model_id]
    post = engine.posterior(session)
    recommendation, terminal = _recommendation_body(
        engine.next_step(session), model, record.network)
    doc = session_to_document(session, model_id=record.model_id, profile=record.profile)
    return {
        "session_id": session_id,
        "seq": record.seq,
        "model_id": record.model_id,
        "profile": record.profile,
        "status": session.status,
        "resolved_by": session.resolved_by,
        "posterior": dict(post.entries),
        "recommendation": recommendation,
        "terminal": terminal,
        "evidence": doc["evidence"],
        "history": [
            {"step_id": h["step_id"], "outcome": h["outcome"], "at": h["at"]}
            for h in doc["history"]
        ],
    }


def create_app(config: CliConfig | None = None,
               static_dir: str | Path | None = None) -> FastAPI:
    config = config or CliConfig()
    store = SessionStore(config)
    app = FastAPI(title="bats", docs_url=None, redoc_url=None)
    app.state.store = store

    def error_response(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": code, "message": message})

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/api/models")
    async def upload_model(request: Request):
        body = await request.body()
        try:
            model = parse_model(body, strict=True)
        except (ParseError, SchemaVersionMismatch) as exc:
            return JSONResponse(status_code=422, content={
                "errors": [{"code": exc.code, "path": "", "message": str(exc)}],
                "warnings": [],
            })
        report = validate_model(model)
        if not report.ok:
            return JSONResponse(status_code=422, content=_report_body(report))
        with store._models_lock:
            store.models[model.id] = model
        return {"model_id": model.id}

    @app.get("/api/models")
    def list_models() -> dict:
        return {"models": [
            {"id": m.id, "name": m.name} for m in store.models.values()
        ]}

    @app.get("/api/models/{model_id}")
    def get_model(model_id: str):
        model = store.models.get(model_id)
        if model is None:
            return error_response(404, "unknown-model", f"no model {model_id!r}")
        return model_to_document(model)

    @app.post("/api/models/{model_id}/validate")
    def validate(model_id: str):
        model = store.models.get(model_id)
        if model is None:
            return error_response(404, "unknown-model", f"no model {model_id!r}")
        return _report_body(validate_model(model))

    def _general_question(model_id: str, question_id: str):
        model = store.models.get(model_id)
        if model is None:
            return None, None, error_response(404, "unknown-model", f"no model {model_id!r}")
        question = model.question_by_id(question_id)
        if question is None:
            return None, None, error_response(
                404, "unknown-question", f"no question {question_id!r} in {model_id!r}")
        if not isinstance(question, GeneralQuestion):
            return None, None, error_response(
                400, "wrong-question-kind",
                f"question {question_id!r} is {question.kind}; only general questions "
                "have an anti-causal table to edit")
        return model, question, None

    def _store_question(model: ErrorConditionModel, question) -> None:
        questions = tuple(question if q.id == question.id else q for q in model.questions)
        from dataclasses import replace as _replace

        with store._models_lock:
            store.models[model.id] = _replace(model, questions=questions)

    @app.post("/api/models/{model_id}/questions/{question_id}/fit")
    async def fit(model_id: str, question_id: str, request: Request):
        model, question, failure = _general_question(model_id, question_id)
        if failure is not None:
            return failure
        payload = await request.json()
        try:
            wishes = WishTable(tuple(
                Wish(w["cause_id"], w["answer"], int(w["level"]))
                for w in payload.get("wishes", [])))
            prior = collapse_cause_tree(model.cause_tree)
            fitted, report = fit_probabilities(question, wishes, prior)
        except (BatsError, ValueError, KeyError) as exc:
            return error_response(400, "fit-failed", str(exc))
        _store_question(model, fitted)
        return {
            "table": {c: dict(r) for c, r in fitted.cause_rows.items()},
            "answer_priors": dict(fitted.answer_priors),
            "fit_report": {
                "wishes": [
                    {
                        "cause_id": o.cause_id,
                        "answer": o.answer,
                        "requested_level": o.requested_level,
                        "final_level": o.final_level,
                        "status": o.status,
                        "note": o.note,
                    }
                    for o in report.wish_outcomes
                ],
                "residuals": dict(report.residuals),
                "column_sums": dict(report.column_sums),
                "rescaled_answers": list(report.rescaled_answers),
            },
        }

    @app.post("/api/models/{model_id}/questions/{question_id}/slider")
    async def slider(model_id: str, question_id: str, request: Request):
        model, question, failure = _general_question(model_id, question_id)
        if failure is not None:
            return failure
        payload = await request.json()
        try:
            prior = collapse_cause_tree(model.cause_tree)
            updated, changes = slider_update(
                question, prior,
                cause_id=payload["cause"],
                answer=payload["answer"],
                value=float(payload["value"]),
            )
        except (BatsError, ValueError, KeyError) as exc:
            return error_response(400, "slider-failed", str(exc))
        _store_question(model, updated)
        return {
            "changed_cells": [
                {"cause": c.cause_id, "answer": c.answer, "old": c.old, "value": c.new}
                for c in changes
            ],
            "table": {c: dict(r) for c, r in updated.cause_rows.items()},
        }

    @app.post("/api/sessions")
    async def create_session(request: Request):
        payload = await request.json()
        model_id = payload.get("model_id")
        model = store.models.get(model_id)
        if model is None:
            return error_response(404, "unknown-model", f"no model {model_id!r}")
        profile = payload.get("profile") or config.default_profile
        try:
            weights = config.weights(profile)
        except ValueError as exc:
            return error_response(400, "unknown-profile", str(exc))
        try:
            network = compile_model(model, weights)
        except (CompileBlocked, BatsError) as exc:
            return JSONResponse(status_code=422, content={
                "error": exc.code, "message": str(exc)})
        session_id = uuid.uuid4().hex
        record = _SessionRecord(
            session=Session(network), network=network,
            model_id=model_id, profile=profile)
        store.sessions[session_id] = record
        return _session_body(record, session_id, store)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        record = store.sessions.get(session_id)
        if record is None:
            return error_response(404, "unknown-session", f"no session {session_id!r}")
        with record.lock:
            return _session_body(record, session_id, store)

    def apply_session_mutation(session_id: str, expected_seq: Any, mutate):
        """Optimistic-concurrency gate shared by outcome and undo."""
        record = store.sessions.get(session_id)
        if record is None:
            return error_response(404, "unknown-session", f"no session {session_id!r}")
        with record.lock:
            if expected_seq != record.seq:
                return JSONResponse(status_code=409, content={
                    "error": "sequence-mismatch",
                    "message": f"expected seq {record.seq}, got {expected_seq}",
                    "seq": record.seq,
                })
            try:
                mutate(record.session)
            except EngineError as exc:
                return error_response(400, exc.code, str(exc))
            record.seq += 1
            return _session_body(record, session_id, store)

    @app.post("/api/sessions/{session_id}/outcome")
    async def record(session_id: str, request: Request):
        payload = await request.json()
        return apply_session_mutation(
            session_id, payload.get("seq"),
            lambda s: engine.record_outcome(s, payload.get("step_id"), payload.get("outcome")))

    @app.post("/api/sessions/{session_id}/undo")
    async def undo(session_id: str, request: Request):
        payload = await request.json()
        return apply_session_mutation(
            session_id, payload.get("seq"), engine.undo_last)

    resolved_static = static_dir or config.webui_dir
    if resolved_static and Path(resolved_static).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(resolved_static), html=True), name="webui")

    return app


def serve(config: CliConfig, static_dir: str | Path | None = None) -> None:
    """Run the HTTP service until interrupted."""
    import uvicorn

    host, _, port = config.bind.partition(":")
    uvicorn.run(create_app(config, static_dir=static_dir),
                host=host or "127.0.0.1", port=int(port or 8330), log_level="warning")
