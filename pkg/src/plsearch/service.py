"""HTTP service exposing batch scoring and the curation pipeline.

Endpoints:
    POST /v1/score   score a batch of rollouts, one breakdown per input
    POST /v1/filter  run hard filters, quality scoring, and bucket sampling
    GET  /healthz    liveness, version, uptime

Environment: PLSEARCH_ADDR (serve address), PLSEARCH_MAX_BATCH (batch cap,
default 512), PLSEARCH_CONFIG (path to a JSON file with default reward
config / weights / sampler sections).
"""

from __future__ import annotations

import json
import os
import threading
import time

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from starlette.concurrency import run_in_threadpool

from . import __version__
from .curation import QualityWeights, SamplerConfig, run_pipeline
from .rewards import RewardBreakdown, RewardConfig, composite_reward
from .trajectory import RawRollout, parse_text

DEFAULT_MAX_BATCH = 512
DEFAULT_MAX_CONCURRENCY = 64
DEFAULT_ADDR = "127.0.0.1:8080"


class RolloutIn(BaseModel):
    id: str
    question: str = ""
    golden_answers: list[str] = Field(min_length=1)
    output_text: str


class ScoreRequest(BaseModel):
    config: dict | None = None
    rollouts: list[RolloutIn] = Field(min_length=1)


class FilterRequest(BaseModel):
    rollouts: list[RolloutIn] = Field(min_length=1)
    weights: dict | None = None
    sampler: dict | None = None


def _zero_breakdown() -> RewardBreakdown:
    return RewardBreakdown(
        r_ans=0.0, r_fmt=0.0, s_align=0.0, r_plan=0.0, r_aux=0.0,
        r_total=0.0, gated=True,
    )


def _score_one(rollout: RolloutIn, cfg: RewardConfig) -> dict:
    try:
        raw = RawRollout(
            id=rollout.id,
            question=rollout.question,
            golden_answers=list(rollout.golden_answers),
            output_text=rollout.output_text,
        )
        traj = parse_text(raw.output_text, "lenient")
        breakdown = composite_reward(traj, raw.golden_answers, cfg)
        diagnostics = [d.to_dict() for d in traj.parse_diagnostics]
    except Exception as exc:  # isolation: one bad item never fails the batch
        breakdown = _zero_breakdown()
        diagnostics = [{"rule": "scoring_error", "offset": 0, "excerpt": str(exc)[:120]}]
    return {"id": rollout.id, "breakdown": breakdown.to_dict(), "diagnostics": diagnostics}


def _load_default_sections(config_path: str | None) -> dict:
    if not config_path:
        return {}
    with open(config_path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{config_path}: expected a JSON object")
    return data


def create_app(
    max_batch: int | None = None,
    config_path: str | None = None,
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY,
) -> FastAPI:
    """Build the service app; configuration is immutable once built."""
    if max_batch is None:
        max_batch = int(os.environ.get("PLSEARCH_MAX_BATCH", DEFAULT_MAX_BATCH))
    if config_path is None:
        config_path = os.environ.get("PLSEARCH_CONFIG") or None
    sections = _load_default_sections(config_path)
    default_reward = RewardConfig.from_dict(sections.get("reward", {}))
    default_weights = QualityWeights.from_dict(sections.get("weights", {}))
    default_sampler = sections.get("sampler")

    app = FastAPI(title="plsearch reward service", version=__version__)
    started = time.monotonic()
    slots = threading.BoundedSemaphore(max_concurrency)

    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "invalid request", "detail": jsonable_encoder(exc.errors())},
        )

    def _busy_response() -> JSONResponse:
        return JSONResponse(
            status_code=503,
            content={"error": "at capacity, retry later"},
            headers={"Retry-After": "1"},
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "uptime_seconds": time.monotonic() - started,
        }

    @app.post("/v1/score")
    def score(request: ScoreRequest):
        if len(request.rollouts) > max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": "batch too large", "max_batch": max_batch},
            )
        if not slots.acquire(blocking=False):
            return _busy_response()
        try:
            cfg = (
                RewardConfig.from_dict(request.config)
                if request.config is not None
                else default_reward
            )
            results = [_score_one(r, cfg) for r in request.rollouts]
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        finally:
            slots.release()
        return {"results": results}

    async def _read_filter_request(request: Request) -> FilterRequest:
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        if "ndjson" not in content_type:
            return FilterRequest.model_validate(json.loads(body))
        # NDJSON: optional first line {"weights":..., "sampler":...}, then one
        # rollout object per line.
        lines = [line for line in body.decode("utf-8").splitlines() if line.strip()]
        weights = sampler = None
        rollouts = []
        for i, line in enumerate(lines):
            obj = json.loads(line)
            if i == 0 and "id" not in obj:
                weights = obj.get("weights")
                sampler = obj.get("sampler")
                continue
            rollouts.append(obj)
        return FilterRequest.model_validate(
            {"rollouts": rollouts, "weights": weights, "sampler": sampler}
        )

    @app.post("/v1/filter")
    async def filter_endpoint(request: Request):
        try:
            payload = await _read_filter_request(request)
        except Exception as exc:
            return JSONResponse(status_code=400, content={"error": f"invalid body: {exc}"})
        if len(payload.rollouts) > max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": "batch too large", "max_batch": max_batch},
            )
        if not slots.acquire(blocking=False):
            return _busy_response()
        try:
            weights = (
                QualityWeights.from_dict(payload.weights)
                if payload.weights is not None
                else default_weights
            )
            sampler_data = payload.sampler if payload.sampler is not None else default_sampler
            sampler = SamplerConfig.from_dict(sampler_data) if sampler_data else None
            rollouts = [
                RawRollout(
                    id=r.id,
                    question=r.question,
                    golden_answers=list(r.golden_answers),
                    output_text=r.output_text,
                )
                for r in payload.rollouts
            ]
            result = await run_in_threadpool(run_pipeline, rollouts, weights, sampler)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        finally:
            slots.release()
        return {
            "selected_ids": [rec.raw.id for rec in result.selected],
            "report": result.report,
            "supply_exhausted": result.report["supply_exhausted"],
        }

    return app


def serve(addr: str | None = None, **app_kwargs) -> None:
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    addr = addr or os.environ.get("PLSEARCH_ADDR", DEFAULT_ADDR)
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"invalid address {addr!r}, expected host:port")
    uvicorn.run(create_app(**app_kwargs), host=host, port=int(port), log_level="warning")
