"""Pydantic request models for the service endpoints.

All payloads reference files by path: the service is a local pipeline daemon
sharing a filesystem with its clients, not a byte-upload API.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class SynthRequest(BaseModel):
    kind: str
    out_dir: str
    normal: int = 0
    anomalous: int = 0
    seed: int = 0
    checkpoint: str | None = None
    raw_px: int = 320
    roi_px: int = 256
    anomaly_location: str = "near-anchor"


class RoiRequest(BaseModel):
    image: str
    anchor_px: tuple[int, int]
    checkpoint: str
    out: str
    config: str | None = None
    roi_px: int | None = None


class FeaturizeRequest(BaseModel):
    manifest: str
    out_dir: str
    checkpoint: str | None = None
    config: str | None = None
    backend: str | None = None
    augment: bool = False


class SelectChannelsRequest(BaseModel):
    manifest: str
    out: str
    checkpoint: str | None = None
    config: str | None = None
    fraction: float | None = Field(default=None, gt=0.0, le=1.0)
    bottom: bool = False


class FitRequest(BaseModel):
    manifest: str
    mask: str
    out: str
    checkpoint: str | None = None
    config: str | None = None
    epsilon: float | None = Field(default=None, gt=0.0)


class ScoreRequest(BaseModel):
    bank: str
    image: str | None = None
    anchor_px: tuple[int, int] | None = None
    fmap: str | None = None
    heatmap: str | None = None
    tau: float | None = None


class EvalRequest(BaseModel):
    bank: str
    manifest: str
    out: str | None = None
    pr_csv: str | None = None
    store_tau: bool = False


class GeometryRequest(BaseModel):
    checkpoint: str | None = None
    config: str | None = None
    bank: str | None = None
