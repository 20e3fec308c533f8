"""FastAPI service exposing the pipeline stages.

Banks are cached between requests (keyed by path and mtime), so a
long-running instance answers score/check calls without reloading the model.
Errors surface as JSON {"error": {"kind", "message"}} with a status from the
error taxonomy; the CLI maps the same kinds onto exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import pipeline
from ..backends import list_backends
from ..errors import VadkitError
from .models import (EvalRequest, FeaturizeRequest, FitRequest, GeometryRequest,
                     RoiRequest, ScoreRequest, SelectChannelsRequest, SynthRequest)

app = FastAPI(title="vadkit", version="0.1.0")


@app.exception_handler(VadkitError)
def _vadkit_error(_request: Request, exc: VadkitError):
    return JSONResponse(
        status_code=exc.http_status,
        content={"error": {"kind": exc.kind, "message": str(exc)}},
    )


@app.get("/v1/healthz")
def healthz() -> dict:
    return {"status": "ok"}


@app.get("/v1/backends")
def backends() -> dict:
    return {
        "backends": [
            {
                "id": b.backend_id,
                "input_px": b.input_px,
                "grid": list(b.grid),
                "channels": b.channels,
                "patch_px": b.patch_px,
                "stride_px": b.stride_px,
                "can_featurize": b.can_featurize,
            }
            for b in list_backends()
        ]
    }


@app.post("/v1/synth")
def synth(req: SynthRequest) -> dict:
    return pipeline.run_synth(**req.model_dump())


@app.post("/v1/roi")
def roi(req: RoiRequest) -> dict:
    return pipeline.run_roi(**req.model_dump())


@app.post("/v1/featurize")
def featurize(req: FeaturizeRequest) -> dict:
    return pipeline.run_featurize(**req.model_dump())


@app.post("/v1/select-channels")
def select_channels(req: SelectChannelsRequest) -> dict:
    return pipeline.run_select_channels(**req.model_dump())


@app.post("/v1/fit")
def fit(req: FitRequest) -> dict:
    return pipeline.run_fit(**req.model_dump())


@app.post("/v1/score")
def score(req: ScoreRequest) -> dict:
    return pipeline.run_score(**req.model_dump())


@app.post("/v1/check")
def check(req: ScoreRequest) -> dict:
    return pipeline.run_check(**req.model_dump())


@app.post("/v1/eval")
def evaluate(req: EvalRequest) -> dict:
    return pipeline.run_eval(**req.model_dump())


@app.post("/v1/dump-geometry")
def dump_geometry(req: GeometryRequest) -> dict:
    return pipeline.run_dump_geometry(**req.model_dump())
