"""HTTP service wrapping the engine's entry points.

Matrices travel as flat row-major float32 buffers (``rows``, ``cols``,
``data``), the same layout external bindings hold natively, and a payload
whose data length disagrees with its shape is rejected instead of silently
reshaped. The config body mirrors the JSON config keys exactly.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import ReinforcementConfig, from_mapping
from .errors import EngineError, ShapeError
from .matrix import as_matrix
from .pipeline import run_pipeline
from .reduction import clamp_top_q, select_top_q
from .scoring import PatchEmbedding, score_patches, select_patches

app = FastAPI(title="air-engine", version=__version__)

ERROR_CODES = {1: "usage", 2: "format", 3: "shape", 4: "internal"}


class ArrayPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rows: int = Field(ge=0)
    cols: int = Field(ge=0)
    data: list[float]

    def to_matrix(self, name: str = "array") -> np.ndarray:
        if len(self.data) != self.rows * self.cols:
            raise ShapeError(
                f"{name}: data length {len(self.data)} does not match "
                f"{self.rows}x{self.cols}; buffers must be contiguous row-major"
            )
        arr = np.asarray(self.data, dtype=np.float32).reshape(self.rows, self.cols)
        return as_matrix(arr, name)

    @classmethod
    def from_matrix(cls, arr: np.ndarray) -> "ArrayPayload":
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        return cls(rows=arr.shape[0], cols=arr.shape[1], data=[float(x) for x in arr.ravel()])


class ReduceRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tokens: ArrayPayload
    top_q: int = Field(ge=1)


class ScoreRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    h_prime: ArrayPayload
    patches: list[ArrayPayload]
    config: dict = Field(default_factory=dict)


class SelectRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_ot: list[float]
    tau: float


class ScoreEntry(BaseModel):
    m: int
    d_ot: float
    d_cos: float
    converged: bool


def _config(mapping: dict) -> ReinforcementConfig:
    return from_mapping(mapping)


def _patches(payloads: list[ArrayPayload]) -> list[PatchEmbedding]:
    return [
        PatchEmbedding(index=i, tokens=p.to_matrix(f"patch {i}"))
        for i, p in enumerate(payloads)
    ]


@app.exception_handler(EngineError)
async def engine_error_handler(_: Request, exc: EngineError) -> JSONResponse:
    return JSONResponse(
        status_code=400,
        content={"error": {"code": ERROR_CODES[exc.exit_code], "message": str(exc)}},
    )


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/version")
def version() -> dict:
    return {"version": __version__}


@app.post("/reduce")
def reduce(req: ReduceRequest) -> dict:
    tokens = req.tokens.to_matrix("tokens")
    q = clamp_top_q(req.top_q, tokens.shape[0])
    reduced = select_top_q(tokens, q)
    return {
        "indices": list(reduced.selected_indices),
        "h_prime": ArrayPayload.from_matrix(reduced.h_prime).model_dump(),
        "distances": [float(x) for x in reduced.distances],
    }


@app.post("/score")
def score(req: ScoreRequest) -> dict:
    cfg = _config(req.config)
    h_prime = req.h_prime.to_matrix("h_prime")
    scores = score_patches(
        h_prime,
        _patches(req.patches),
        epsilon=cfg.epsilon,
        max_iter=cfg.sinkhorn_max_iter,
        tol=cfg.sinkhorn_tol,
        threads=cfg.threads,
    )
    selected = set(select_patches(scores, cfg.tau))
    return {
        "scores": [
            ScoreEntry(m=s.index, d_ot=s.d_ot, d_cos=s.d_cos, converged=s.converged).model_dump()
            for s in scores
        ],
        "selected": sorted(selected),
    }


@app.post("/select")
def select(req: SelectRequest) -> dict:
    return {"selected": [i for i, v in enumerate(req.d_ot) if v <= req.tau]}


@app.post("/pipeline")
def pipeline(req: ScoreRequest) -> dict:
    cfg = _config(req.config)
    h_prime = req.h_prime.to_matrix("h_prime")
    result = run_pipeline(h_prime, h_prime, _patches(req.patches), cfg)
    return {
        "scores": [
            ScoreEntry(m=s.index, d_ot=s.d_ot, d_cos=s.d_cos, converged=s.converged).model_dump()
            for s in result.scores
        ],
        "selected": list(result.selected),
        "fused_rows": int(result.fused.shape[0]),
        "injected": ArrayPayload.from_matrix(result.injected).model_dump(),
    }
