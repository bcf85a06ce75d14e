"""HTTP service exposing ask, benchmark-run and evaluation-session endpoints.

Session-facing payloads are blinded: they never carry configuration names
while a session is open. Resolution happens server-side only.
"""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import Depends, FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .benchmark import RunLedger
from .config import ServiceConfig, load_resources
from .errors import (
    ConfigError,
    DuplicateJudgment,
    MissingResponses,
    NoJudgments,
    RagforgeError,
    SessionClosed,
    SessionStillOpen,
    UnknownConfig,
    UnknownQid,
    UnknownRun,
)
from .evaluation import (
    EvaluationStore,
    PairwiseJudgment,
    SingleJudgment,
    build_report,
    render_csv,
    render_text,
)
from .pipeline import answer_full

logger = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


_ERROR_STATUS: list[tuple[type, int, str]] = [
    (DuplicateJudgment, 409, "DUPLICATE_JUDGMENT"),
    (SessionClosed, 409, "SESSION_CLOSED"),
    (SessionStillOpen, 409, "SESSION_STILL_OPEN"),
    (UnknownRun, 404, "UNKNOWN_RUN"),
    (UnknownQid, 404, "UNKNOWN_QID"),
    (UnknownConfig, 404, "UNKNOWN_CONFIG"),
    (MissingResponses, 400, "MISSING_RESPONSES"),
    (NoJudgments, 404, "NO_JUDGMENTS"),
    (ConfigError, 400, "BAD_CONFIG"),
]


def _to_api_error(exc: RagforgeError) -> ApiError:
    for klass, status, code in _ERROR_STATUS:
        if isinstance(exc, klass):
            return ApiError(status, code, str(exc))
    return ApiError(400, type(exc).__name__, str(exc))


class AskBody(BaseModel):
    question: str
    config: str


class SessionBody(BaseModel):
    run_id: str
    evaluator_id: str
    pairing: list[str] = Field(min_length=2, max_length=2)
    seed: int
    qids: list[str] | None = None


class JudgmentBody(BaseModel):
    kind: str  # pairwise | single
    qid: str
    # pairwise fields (sides are the blinded answer numbers, 1 or 2)
    better: int | None = None
    more_accurate: int | None = None
    more_factual: int | None = None
    more_relevant: int | None = None
    context_opened: bool = False
    # single fields
    answer: int | None = None
    non_harmful: bool | None = None
    contextually_correct: bool | None = None
    understandable: bool | None = None
    real_world_applicable: bool | None = None


def create_app(cfg: ServiceConfig, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ragforge", docs_url=None, redoc_url=None)
    resources = load_resources(cfg)
    runs_dir = cfg.data_dir / "runs"
    store = EvaluationStore(cfg.data_dir / "judgments.jsonl", runs_dir)

    def require_auth(request: Request) -> None:
        if cfg.auth_token is None:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {cfg.auth_token}":
            raise ApiError(401, "BAD_TOKEN", "missing or invalid bearer token")

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RagforgeError)
    async def handle_domain_error(request: Request, exc: RagforgeError):
        api = _to_api_error(exc)
        return JSONResponse(status_code=api.status, content={"code": api.code, "message": api.message})

    @app.post("/v1/ask")
    def ask(body: AskBody, _=Depends(require_auth)):
        config = cfg.configuration(body.config)
        outcome = answer_full(config, body.question, resources)
        retrieved = []
        if outcome.retrieval is not None:
            for hit, chunk in zip(outcome.retrieval.hits, outcome.retrieval.chunks):
                retrieved.append(
                    {
                        "chunk_id": hit.chunk_id,
                        "title": resources.doc_titles.get(chunk.doc_id, chunk.doc_id),
                        "score": hit.score,
                    }
                )
        return {
            "answer": outcome.record.answer_text,
            "retrieved": retrieved,
            "config_echo": {
                "name": config.name,
                "mode": config.mode,
                "model_id": config.backend.model_id,
                "temperature": config.backend.temperature,
                "k": config.retrieval.k if config.retrieval else None,
                "context_budget": config.retrieval.context_budget if config.retrieval else None,
                "template_id": config.retrieval.prompt_template_id if config.retrieval else None,
            },
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: SessionBody, _=Depends(require_auth)):
        session = store.create_session(
            run_id=body.run_id,
            evaluator_id=body.evaluator_id,
            pairing=(body.pairing[0], body.pairing[1]),
            qids=body.qids,
            seed=body.seed,
        )
        return session.public_view()

    def _session_records(session_id: str):
        session = store.session(session_id)
        ledger = RunLedger(runs_dir / session.run_id)
        return session, ledger.effective_records()

    @app.get("/v1/sessions/{session_id}/next")
    def next_item(session_id: str, _=Depends(require_auth)):
        session = store.session(session_id)
        qid = store.next_unjudged(session_id)
        if qid is None:
            raise ApiError(404, "SESSION_COMPLETE", "all items are judged")
        session, records = _session_records(session_id)
        assignment = session.assignment(qid)
        left = records[(assignment.left_config, qid)]
        right = records[(assignment.right_config, qid)]
        context_available = bool(left.retrieved_chunk_ids or right.retrieved_chunk_ids)
        return {
            "qid": qid,
            "question": left.question_text,
            "answer_1": left.answer_text,
            "answer_2": right.answer_text,
            "context_available": context_available,
        }

    @app.get("/v1/sessions/{session_id}/context/{qid}")
    def context(session_id: str, qid: str, _=Depends(require_auth)):
        """Reference passages retrieved for the question (side-neutral)."""
        session, records = _session_records(session_id)
        if qid not in session.qids:
            raise UnknownQid(qid)
        chunk_ids: list[str] = []
        for config in (session.config_a, session.config_b):
            rec = records.get((config, qid))
            if rec is not None:
                for chunk_id in rec.retrieved_chunk_ids:
                    if chunk_id not in chunk_ids:
                        chunk_ids.append(chunk_id)
        passages = []
        for chunk_id in chunk_ids:
            chunk = resources.chunk_store.get(chunk_id) if resources.chunk_store else None
            if chunk is not None:
                passages.append(
                    {
                        "chunk_id": chunk_id,
                        "title": resources.doc_titles.get(chunk.doc_id, chunk.doc_id),
                        "text": chunk.text,
                    }
                )
        return {"qid": qid, "passages": passages}

    @app.post("/v1/sessions/{session_id}/judgments", status_code=201)
    def submit_judgment(session_id: str, body: JudgmentBody, _=Depends(require_auth)):
        session = store.session(session_id)

        def side(value: int | None, field_name: str) -> str:
            if value not in (1, 2):
                raise ApiError(400, "BAD_JUDGMENT", f"{field_name} must be 1 or 2")
            return "left" if value == 1 else "right"

        if body.kind == "pairwise":
            judgment = PairwiseJudgment(
                session_id=session_id,
                qid=body.qid,
                better=side(body.better, "better"),
                more_accurate=side(body.more_accurate, "more_accurate"),
                more_factual=side(body.more_factual, "more_factual"),
                more_relevant=side(body.more_relevant, "more_relevant"),
                submitted_at="",
                context_opened=body.context_opened,
            )
            store.record_pairwise(judgment)
            done, total = store.progress(session_id)
            return {"stored": "pairwise", "done": done, "total": total}
        if body.kind == "single":
            missing = [
                name
                for name in ("non_harmful", "contextually_correct", "understandable", "real_world_applicable")
                if getattr(body, name) is None
            ]
            if missing:
                raise ApiError(400, "BAD_JUDGMENT", f"missing fields: {', '.join(missing)}")
            assignment = session.assignment(body.qid) if body.qid in session.qids else None
            if assignment is None:
                raise UnknownQid(body.qid)
            config = assignment.left_config if side(body.answer, "answer") == "left" else assignment.right_config
            judgment = SingleJudgment(
                session_id=session_id,
                qid=body.qid,
                config=config,
                non_harmful=bool(body.non_harmful),
                contextually_correct=bool(body.contextually_correct),
                understandable=bool(body.understandable),
                real_world_applicable=bool(body.real_world_applicable),
            )
            store.record_single(judgment)
            return {"stored": "single"}
        raise ApiError(400, "BAD_JUDGMENT", f"unknown judgment kind {body.kind!r}")

    @app.get("/v1/sessions/{session_id}/progress")
    def progress(session_id: str, _=Depends(require_auth)):
        done, total = store.progress(session_id)
        return {"done": done, "total": total}

    @app.get("/v1/runs/{run_id}/report")
    def report(run_id: str, format: str = "text", _=Depends(require_auth)):
        ledger = RunLedger(runs_dir / run_id)
        if not ledger.exists():
            raise UnknownRun(run_id)
        manifest = ledger.read_manifest()
        sessions = {
            sid: session for sid, session in store.sessions.items() if session.run_id == run_id
        }
        pairwise = [j for j in store.pairwise.values() if j.session_id in sessions]
        singles = [j for j in store.singles.values() if j.session_id in sessions]
        metrics = build_report(manifest, sessions, pairwise, singles)
        if format == "csv":
            return PlainTextResponse(render_csv(metrics), media_type="text/csv")
        if format == "json":
            return JSONResponse(_report_json(metrics))
        return PlainTextResponse(render_text(metrics), media_type="text/plain")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    app.state.store = store
    app.state.resources = resources
    app.state.config = cfg
    return app


def _report_json(metrics) -> dict:
    return {
        "run_id": metrics.run_id,
        "pairings": {
            f"{a}|{b}": [
                {
                    "criterion": row.criterion,
                    "config_a": row.config_a,
                    "config_b": row.config_b,
                    "pct_a": row.pct_a,
                    "pct_b": row.pct_b,
                    "count_a": row.count_a,
                    "count_b": row.count_b,
                }
                for row in rows
            ]
            for (a, b), rows in metrics.pairings.items()
        },
        "singles": {
            config: {
                dim: {"pct": pct, "yes": yes, "total": total}
                for dim, (pct, yes, total) in dims.items()
            }
            for config, dims in metrics.singles.items()
        },
        "kappa": {f"{a}|{b}": value for (a, b), value in metrics.kappa.items()},
        "judgment_counts": {f"{a}|{b}": v for (a, b), v in metrics.judgment_counts.items()},
        "config_params": metrics.config_params,
        "index_metadata": metrics.index_metadata,
    }
