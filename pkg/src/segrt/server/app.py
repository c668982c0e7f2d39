"""HTTP segmentation service: immediate and recommend modes plus an
append-only feedback log whose accepted texts can be exported as a
retraining corpus.

The loaded model is immutable and shared across request handlers; feedback
appends are serialized through one lock and written as single JSON lines,
fsynced, so concurrent posts never interleave.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, replace
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..embedding import load_vectors
from ..neuralnet import limit_blas_threads
from ..segmenter import InferenceConfig, SegmenterModel, load_model, model_file_id
from ..textcore import BoundaryLabels, apply_labels, despace
from .schemas import (
    FeedbackRequest,
    FeedbackResponse,
    HealthResponse,
    SegmentRequest,
    SegmentResponse,
)

ENV_PREFIX = "SEGRT_"


@dataclass(frozen=True)
class ServiceSettings:
    model_path: Optional[str] = None
    embeddings_path: Optional[str] = None
    port: int = 8080
    threshold: float = 0.5
    overlap: int = 30
    feedback_log: str = "feedback.jsonl"
    request_cap: int = 10_000

    def with_env_overrides(self) -> "ServiceSettings":
        """Environment variables (prefix SEGRT_) override unset/default
        fields supplied programmatically or by flags."""
        env = os.environ
        updates = {}
        mapping = {
            "MODEL": ("model_path", str),
            "EMBEDDINGS": ("embeddings_path", str),
            "PORT": ("port", int),
            "THRESHOLD": ("threshold", float),
            "OVERLAP": ("overlap", int),
            "FEEDBACK_LOG": ("feedback_log", str),
            "REQUEST_CAP": ("request_cap", int),
        }
        for key, (field_name, cast) in mapping.items():
            raw = env.get(ENV_PREFIX + key)
            if raw is not None:
                updates[field_name] = cast(raw)
        return replace(self, **updates) if updates else self


class FeedbackLog:
    """Append-only JSON Lines store; one atomic fsynced line per record."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._seq = 0

    def append(self, record: dict) -> str:
        with self._lock:
            self._seq += 1
            record_id = f"{record['ts']}-{self._seq}"
            record = {"id": record_id, **record}
            line = json.dumps(record, ensure_ascii=False)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        return record_id


def export_feedback(log_path: str, out_path: str) -> tuple[int, int]:
    """Write each record's accepted text, whitespace-normalized, one per
    line in corpus format.  Returns (exported, skipped_corrupt)."""
    exported = skipped = 0
    with open(log_path, "r", encoding="utf-8") as src, open(
        out_path, "w", encoding="utf-8"
    ) as dst:
        for line in src:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                accepted = record["accepted"]
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
                continue
            if not isinstance(accepted, str):
                skipped += 1
                continue
            normalized = " ".join(accepted.split())
            if normalized:
                dst.write(normalized + "\n")
                exported += 1
    return exported, skipped


class ServiceState:
    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.started = time.monotonic()
        self.model: Optional[SegmenterModel] = None
        self.model_id = "none"
        self.feedback = FeedbackLog(settings.feedback_log)
        if settings.model_path and settings.embeddings_path:
            table = load_vectors(settings.embeddings_path)
            self.model = load_model(settings.model_path, table)
            self.model_id = model_file_id(settings.model_path)

    @property
    def inference(self) -> InferenceConfig:
        l_max = self.model.config.l_max if self.model else 100
        return InferenceConfig(
            threshold=self.settings.threshold,
            overlap=min(self.settings.overlap, l_max - 1),
            l_max=l_max,
        )


def create_app(settings: ServiceSettings) -> FastAPI:
    limit_blas_threads()
    settings = settings.with_env_overrides()
    app = FastAPI(title="segrt", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = ServiceState(settings)
    app.state.segrt = state

    @app.exception_handler(RequestValidationError)
    def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.post("/v1/segment", response_model=SegmentResponse, response_model_exclude_none=True)
    def segment(req: SegmentRequest):
        if len(req.text) > state.settings.request_cap:
            return JSONResponse(
                status_code=413,
                content={"detail": f"text exceeds {state.settings.request_cap} characters"},
            )
        if state.model is None:
            return JSONResponse(status_code=503, content={"detail": "model not loaded"})
        cfg = state.inference
        chars, user = despace(req.text)
        scores = state.model.gap_scores(chars, cfg)
        boundaries = [
            int(bool(u) or s > cfg.threshold) for u, s in zip(user, scores)
        ]
        segmented = apply_labels(chars, BoundaryLabels(tuple(boundaries)))
        # Non-invasiveness is asserted on every response before send.
        assert segmented.replace(" ", "") == chars.text
        return SegmentResponse(
            segmented=segmented,
            boundaries=boundaries,
            scores=[float(s) for s in scores] if req.mode == "recommend" else None,
            model_id=state.model_id,
        )

    @app.post("/v1/feedback", response_model=FeedbackResponse)
    def feedback(req: FeedbackRequest):
        original_chars, _ = despace(req.original)
        accepted_chars, _ = despace(req.accepted)
        if original_chars.text != accepted_chars.text:
            return JSONResponse(
                status_code=422,
                content={"detail": "accepted text must preserve the original characters"},
            )
        record = {
            "ts": int(time.time() * 1000),
            "original": req.original,
            "suggested": req.suggested,
            "accepted": req.accepted,
            "client_id": req.client_id,
            "confirmation": req.accepted == req.suggested,
        }
        record_id = state.feedback.append(record)
        return FeedbackResponse(accepted=True, id=record_id)

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok" if state.model is not None else "degraded",
            model_id=state.model_id,
            uptime_s=time.monotonic() - state.started,
        )

    return app
