"""Request and response models for the HTTP service.

The service runs next to the files it works on: requests carry
filesystem paths (shared between client and server), responses carry the
stage payloads plus the run directory the artifacts were written to.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class StageOptions(BaseModel):
    config: Optional[str] = Field(default=None, description="Path to a TOML config file")
    out: Optional[str] = Field(default=None, description="Output directory override")
    backend: Optional[str] = Field(default=None, description="client.backend override")
    prompt_variant: Optional[str] = Field(default=None, description="prompt.variant override")


class RunRequest(StageOptions):
    design: str = Field(description="Path to the design raster (PNG or JPEG)")


class RunResponse(BaseModel):
    status: str
    run_dir: str
    selected: Optional[str]
    report: dict


class DivideRequest(StageOptions):
    design: str


class DivideResponse(BaseModel):
    run_dir: str
    canvas: list
    blocks: list
    blocks_path: str
    overlay_path: str


class SynthesizeRequest(StageOptions):
    design: str
    blocks: str = Field(description="Path to a blocks JSON file")


class SynthesizeResponse(BaseModel):
    run_dir: str
    blocks_dir: str
    blocks: list
    cache: dict


class AssembleRequest(StageOptions):
    design: str
    blocks: str
    fragments: str = Field(description="Directory holding <i>.fragment.html files")


class AssembleResponse(BaseModel):
    run_dir: str
    aps_path: str
    ms_path: Optional[str]
    ms_skip_reason: Optional[str]
    ms_error: Optional[str]
    strategies: list


class VerifyRequest(StageOptions):
    design: str
    aps: str = Field(description="Path to the absolute-positioning candidate page")
    ms: Optional[str] = Field(default=None, description="Path to the model-assembled candidate page")


class VerifyResponse(BaseModel):
    run_dir: str
    candidates: list
    selected: str
    selected_path: str


class EvalRequest(StageOptions):
    candidate: str
    reference: str
    design: str


class EvalResponse(BaseModel):
    run_dir: str
    samples: list
    aggregate: dict
