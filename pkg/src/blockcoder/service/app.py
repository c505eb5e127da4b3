"""FastAPI service exposing the pipeline stages.

Each endpoint is stateless: it loads the config named in the request,
applies the inline overrides, runs the stage, and returns the stage
payload. Config and usage problems map to HTTP 400, stage-fatal
failures to HTTP 500 with the failing stage named; a run that completed
with per-block fallbacks reports status "partial".
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import PipelineConfig, load_config
from ..errors import ConfigError, StageError
from ..pipeline import (
    assemble_stage,
    divide_stage,
    evaluate_sample,
    run_pipeline,
    synthesize_stage,
    verify_stage,
)
from .schemas import (
    AssembleRequest,
    AssembleResponse,
    DivideRequest,
    DivideResponse,
    EvalRequest,
    EvalResponse,
    RunRequest,
    RunResponse,
    StageOptions,
    SynthesizeRequest,
    SynthesizeResponse,
    VerifyRequest,
    VerifyResponse,
)

log = logging.getLogger(__name__)

app = FastAPI(
    title="blockcoder",
    version=__version__,
    description="Design-to-code pipeline: divide, synthesize, assemble, verify, evaluate.",
)


def _config_from(options: StageOptions) -> PipelineConfig:
    overrides = {
        "client.backend": options.backend,
        "prompt.variant": options.prompt_variant,
        "pipeline.output_dir": options.out,
    }
    try:
        return load_config(options.config, overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail={"kind": "config", "message": str(exc)})


def _run_stage(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail={"kind": "config", "message": str(exc)})
    except StageError as exc:
        raise HTTPException(
            status_code=500,
            detail={"kind": "stage_fatal", "stage": exc.stage, "message": str(exc)},
        )


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/v1/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    config = _config_from(request)
    report = _run_stage(run_pipeline, config, request.design)
    return RunResponse(
        status=report.status,
        run_dir=report.run_dir,
        selected=report.selected,
        report=report.to_dict(),
    )


@app.post("/v1/divide", response_model=DivideResponse)
def divide(request: DivideRequest) -> DivideResponse:
    config = _config_from(request)
    payload = _run_stage(divide_stage, config, request.design)
    return DivideResponse(**payload)


@app.post("/v1/synthesize", response_model=SynthesizeResponse)
def synthesize(request: SynthesizeRequest) -> SynthesizeResponse:
    config = _config_from(request)
    payload = _run_stage(synthesize_stage, config, request.design, request.blocks)
    return SynthesizeResponse(**payload)


@app.post("/v1/assemble", response_model=AssembleResponse)
def assemble(request: AssembleRequest) -> AssembleResponse:
    config = _config_from(request)
    payload = _run_stage(
        assemble_stage, config, request.design, request.blocks, request.fragments
    )
    return AssembleResponse(**payload)


@app.post("/v1/verify", response_model=VerifyResponse)
def verify(request: VerifyRequest) -> VerifyResponse:
    config = _config_from(request)
    payload = _run_stage(verify_stage, config, request.design, request.aps, request.ms)
    return VerifyResponse(**payload)


@app.post("/v1/eval", response_model=EvalResponse)
def evaluate(request: EvalRequest) -> EvalResponse:
    config = _config_from(request)
    payload = _run_stage(
        evaluate_sample, config, request.candidate, request.reference, request.design
    )
    return EvalResponse(**payload)
