"""Request/response bodies of the segmentation service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict


class SegmentRequest(BaseModel):
    text: str
    mode: Literal["immediate", "recommend"] = "immediate"


class SegmentResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    segmented: str
    boundaries: list[int]
    scores: Optional[list[float]] = None  # recommend mode only
    model_id: str


class FeedbackRequest(BaseModel):
    original: str
    suggested: str
    accepted: str
    client_id: str = ""


class FeedbackResponse(BaseModel):
    accepted: bool
    id: str


class HealthResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    status: Literal["ok", "degraded"]
    model_id: str
    uptime_s: float
