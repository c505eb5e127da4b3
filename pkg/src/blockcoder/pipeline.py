"""Pipeline orchestration: divide, synthesize, assemble, verify, eval.

Each stage is a function that reads inputs from disk, writes its
artifacts into a run directory, and returns a JSON-friendly payload; the
monolithic run is the composition of the stages, so running them
individually over each other's outputs produces byte-identical files.
Run directories are content-addressed by the design bytes plus the
config (minus the output location), so repeated runs land in the same
directory and reuse the response cache naturally.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assembly import (
    APS_STRATEGY,
    MS_STRATEGY,
    AssemblyCandidate,
    assemble_absolute,
    build_assembly_prompt,
    pick_best_scored,
    score_candidates,
)
from .client import MllmClient, request_digest
from .config import PipelineConfig
from .divider import DivisionResult, divide, render_debug_overlay
from .errors import (
    BlockcoderError,
    ConfigError,
    ContextOverflowError,
    StageError,
)
from .evaluation import (
    build_embedder,
    embedding_similarity,
    mae,
    normalize_pair,
    parse_dom,
    tree_bleu,
    verify_score,
)
from .rendering import build_renderer
from .geometry import BBox
from .prompts import prompt_versions, wrap_fragment
from .raster import Raster
from .synthesis import (
    BlockArtifact,
    HtmlDocument,
    crop_block,
    extract_html,
    synthesize_blocks,
)
from .textregions import load_text_regions, merge_adjacent_regions

log = logging.getLogger(__name__)

BLOCKS_FILENAME = "blocks.json"
OVERLAY_FILENAME = "overlay.png"
DIVISION_FILENAME = "division.json"
SYNTHESIS_FILENAME = "synthesis.json"
ASSEMBLY_FILENAME = "assembly.json"
APS_FILENAME = "assembled_aps.html"
MS_FILENAME = "assembled_ms.html"
SELECTED_FILENAME = "selected.html"
VERIFY_FILENAME = "verify_report.json"
REPORT_FILENAME = "report.json"
METRICS_FILENAME = "metrics.json"
BLOCKS_DIRNAME = "blocks"


@dataclass
class RunReport:
    design: dict
    config: dict
    prompt_versions: dict
    run_dir: str
    seed: int
    division: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)
    assembly: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    selected: Optional[str] = None
    cache: dict = field(default_factory=dict)
    status: str = "ok"
    error: Optional[dict] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "config": self.config,
            "prompt_versions": self.prompt_versions,
            "run_dir": self.run_dir,
            "seed": self.seed,
            "division": self.division,
            "blocks": self.blocks,
            "assembly": self.assembly,
            "candidates": self.candidates,
            "selected": self.selected,
            "cache": self.cache,
            "status": self.status,
            "error": self.error,
            "timings": self.timings,
        }


def _dump_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _load_design(design_path) -> tuple:
    design_path = Path(design_path)
    if not design_path.exists():
        raise ConfigError(f"design file not found: {design_path}")
    design_bytes = design_path.read_bytes()
    try:
        design = Raster.load(design_path)
    except Exception as exc:
        raise ConfigError(f"design is not a readable image: {exc}") from exc
    return design, design_bytes


def resolve_run_dir(config: PipelineConfig, design_bytes: bytes) -> Path:
    """Content-addressed run directory under the configured output dir."""
    snapshot = config.snapshot()
    snapshot["pipeline"].pop("output_dir")
    h = hashlib.sha256()
    h.update(design_bytes)
    h.update(json.dumps(snapshot, sort_keys=True).encode("utf-8"))
    return Path(config.output_dir) / h.hexdigest()[:16]


def _prepare_run_dir(config: PipelineConfig, design_bytes: bytes, out_dir) -> Path:
    run_dir = Path(out_dir) if out_dir else resolve_run_dir(config, design_bytes)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _make_client(config: PipelineConfig, run_dir: Path) -> MllmClient:
    cache_dir = config.client.cache_dir or str(run_dir / "cache")
    return MllmClient(config.client, cache_dir)


@contextmanager
def _timed(timings: dict, name: str):
    started = time.perf_counter()
    try:
        yield
    finally:
        timings[name] = round(time.perf_counter() - started, 6)


@contextmanager
def _stage_guard(stage: str):
    """Turn unexpected stage failures into StageError; pass usage errors."""
    try:
        yield
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


# -- stage bodies (shared by run_pipeline and the stage entry points) ----


def _merged_text_regions(config: PipelineConfig, design: Raster):
    if not config.ocr.regions_path:
        log.warning("no ocr.regions_path configured; dividing without text regions")
        return []
    regions = load_text_regions(config.ocr.regions_path, design.width, design.height)
    return merge_adjacent_regions(regions, config.ocr.merge_gap)


def _write_division_outputs(run_dir: Path, design: Raster, division: DivisionResult) -> dict:
    payload = division.to_blocks_payload(design.width, design.height)
    _dump_json(payload, run_dir / BLOCKS_FILENAME)
    _dump_json({"tree": division.split_tree.to_dict()}, run_dir / DIVISION_FILENAME)
    render_debug_overlay(design, division).save_png(run_dir / OVERLAY_FILENAME)
    return payload


def _write_block_artifacts(run_dir: Path, artifacts: Sequence[BlockArtifact]) -> list:
    blocks_dir = run_dir / BLOCKS_DIRNAME
    blocks_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for artifact in artifacts:
        artifact.image.save_png(blocks_dir / f"{artifact.index}.png")
        (blocks_dir / f"{artifact.index}.html").write_text(
            artifact.html.source, encoding="utf-8"
        )
        (blocks_dir / f"{artifact.index}.fragment.html").write_text(
            artifact.body_fragment, encoding="utf-8"
        )
        record = {
            "index": artifact.index,
            "bbox": list(artifact.box.as_tuple()),
            "status": "placeholder" if artifact.failure else "ok",
            "failure": artifact.failure,
        }
        if artifact.trace:
            record.update(
                {
                    "request_digest": artifact.trace.request_digest,
                    "response_digest": artifact.trace.response_digest,
                    "from_cache": artifact.trace.from_cache,
                    "attempts": artifact.trace.attempts,
                    "variant": artifact.trace.variant,
                }
            )
        records.append(record)
    _dump_json({"blocks": records}, run_dir / SYNTHESIS_FILENAME)
    return records


def _read_blocks_json(blocks_path) -> list:
    blocks_path = Path(blocks_path)
    if not blocks_path.exists():
        raise ConfigError(f"blocks file not found: {blocks_path}")
    try:
        payload = json.loads(blocks_path.read_text(encoding="utf-8"))
        return [BBox.from_sequence(item) for item in payload["blocks"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"blocks file {blocks_path} is malformed: {exc}") from exc


def _artifacts_from_fragments(
    design: Raster, blocks: Sequence[BBox], fragments_dir
) -> list:
    fragments_dir = Path(fragments_dir)
    artifacts = []
    for index, box in enumerate(blocks):
        fragment_path = fragments_dir / f"{index}.fragment.html"
        if not fragment_path.exists():
            raise ConfigError(f"missing fragment for block {index}: {fragment_path}")
        fragment = fragment_path.read_text(encoding="utf-8")
        artifacts.append(
            BlockArtifact(
                index=index,
                box=box,
                image=crop_block(design, box),
                html=HtmlDocument(wrap_fragment(fragment)),
                body_fragment=fragment,
            )
        )
    return artifacts


def _assemble_candidates(
    config: PipelineConfig,
    client: MllmClient,
    design: Raster,
    artifacts: Sequence[BlockArtifact],
    run_dir: Path,
) -> tuple:
    """Write APS (always) and MS (when it fits); return candidates + payload.

    The payload names artifacts by filename only so the file it lands in
    is identical no matter where the run directory lives.
    """
    aps_doc = assemble_absolute(artifacts, design.width, design.height)
    (run_dir / APS_FILENAME).write_text(aps_doc.source, encoding="utf-8")
    candidates = [AssemblyCandidate(APS_STRATEGY, aps_doc)]
    payload = {
        "aps": APS_FILENAME,
        "ms": None,
        "ms_skip_reason": None,
        "ms_error": None,
        "ms_request_digest": None,
        "ms_response_digest": None,
    }
    try:
        request = build_assembly_prompt(
            design,
            artifacts,
            model=config.client.model,
            max_output_tokens=config.client.max_output_tokens,
            image_pixel_budget=config.client.image_pixel_budget,
            image_token_cost=config.client.image_token_cost,
            context_budget=config.client.context_budget,
        )
    except ContextOverflowError as exc:
        payload["ms_skip_reason"] = str(exc)
        log.info("skipping model assembly: %s", exc)
        return candidates, payload
    try:
        response = client.complete(request)
        ms_doc = extract_html(response.text)
    except BlockcoderError as exc:
        payload["ms_error"] = str(exc)
        log.warning("model assembly failed, keeping absolute positioning only: %s", exc)
        return candidates, payload
    (run_dir / MS_FILENAME).write_text(ms_doc.source, encoding="utf-8")
    payload["ms"] = MS_FILENAME
    payload["ms_request_digest"] = request_digest(request)
    payload["ms_response_digest"] = _sha256_bytes(response.text.encode("utf-8"))
    candidates.append(AssemblyCandidate(MS_STRATEGY, ms_doc))
    return candidates, payload


def _verify_candidates(
    config: PipelineConfig, design: Raster, candidates: Sequence[AssemblyCandidate], run_dir: Path
) -> tuple:
    renderer = build_renderer(config.renderer)
    embedder = build_embedder(config.embedder)
    scored, failures = score_candidates(candidates, design, renderer, embedder)
    winner = pick_best_scored(scored)
    (run_dir / SELECTED_FILENAME).write_text(winner.html.source, encoding="utf-8")
    entries = [
        {"strategy": candidate.strategy, **candidate.verify.to_dict()} for candidate in scored
    ]
    entries.extend(failures)
    payload = {
        "candidates": entries,
        "selected": winner.strategy,
        # Fixed composition weights, reported for provenance only.
        "weights": {"mae": 0.5, "clip_sim": 0.5},
    }
    _dump_json(payload, run_dir / VERIFY_FILENAME)
    return winner, payload


# -- public entry points -------------------------------------------------


def run_pipeline(config: PipelineConfig, design_path) -> RunReport:
    """Full run: divide, synthesize, assemble, verify, report."""
    design, design_bytes = _load_design(design_path)
    run_dir = _prepare_run_dir(config, design_bytes, out_dir=None)
    report = RunReport(
        design={
            "path": str(design_path),
            "digest": _sha256_bytes(design_bytes),
            "width": design.width,
            "height": design.height,
        },
        config=config.snapshot(),
        prompt_versions=prompt_versions(),
        run_dir=str(run_dir),
        seed=config.seed,
    )
    client = _make_client(config, run_dir)
    stage = "divide"
    failure: Optional[Exception] = None
    try:
        with _timed(report.timings, "divide"):
            regions = _merged_text_regions(config, design)
            division = divide(design, regions, config.divider)
            payload = _write_division_outputs(run_dir, design, division)
            report.division = {
                "block_count": len(division.blocks),
                "blocks": payload["blocks"],
                "text_regions": len(regions),
            }

        stage = "synthesize"
        with _timed(report.timings, "synthesize"):
            artifacts = synthesize_blocks(
                client, design, division.blocks, variant=config.prompt.variant
            )
            report.blocks = _write_block_artifacts(run_dir, artifacts)

        stage = "assemble"
        with _timed(report.timings, "assemble"):
            candidates, assembly_payload = _assemble_candidates(
                config, client, design, artifacts, run_dir
            )
            _dump_json(assembly_payload, run_dir / ASSEMBLY_FILENAME)
            report.assembly = assembly_payload

        stage = "verify"
        with _timed(report.timings, "verify"):
            winner, verify_payload = _verify_candidates(config, design, candidates, run_dir)
            report.candidates = verify_payload["candidates"]
            report.selected = winner.strategy
    except Exception as exc:
        failure = exc
        report.status = "failed"
        report.error = {"stage": stage, "message": str(exc)}
    finally:
        report.cache = client.cache_stats()
        client.close()

    if failure is None and any(record["status"] != "ok" for record in report.blocks):
        report.status = "partial"
    _dump_json(report.to_dict(), run_dir / REPORT_FILENAME)
    if failure is not None:
        raise StageError(stage, failure) from failure
    return report


def divide_stage(config: PipelineConfig, design_path, out_dir=None) -> dict:
    design, design_bytes = _load_design(design_path)
    run_dir = _prepare_run_dir(config, design_bytes, out_dir)
    with _stage_guard("divide"):
        regions = _merged_text_regions(config, design)
        division = divide(design, regions, config.divider)
        payload = _write_division_outputs(run_dir, design, division)
    return {
        "run_dir": str(run_dir),
        "canvas": payload["canvas"],
        "blocks": payload["blocks"],
        "blocks_path": str(run_dir / BLOCKS_FILENAME),
        "overlay_path": str(run_dir / OVERLAY_FILENAME),
    }


def synthesize_stage(config: PipelineConfig, design_path, blocks_path, out_dir=None) -> dict:
    design, design_bytes = _load_design(design_path)
    run_dir = _prepare_run_dir(config, design_bytes, out_dir)
    blocks = _read_blocks_json(blocks_path)
    if not blocks:
        raise ConfigError("blocks file contains no blocks")
    client = _make_client(config, run_dir)
    try:
        with _stage_guard("synthesize"):
            artifacts = synthesize_blocks(client, design, blocks, variant=config.prompt.variant)
            records = _write_block_artifacts(run_dir, artifacts)
        stats = client.cache_stats()
    finally:
        client.close()
    return {
        "run_dir": str(run_dir),
        "blocks_dir": str(run_dir / BLOCKS_DIRNAME),
        "blocks": records,
        "cache": stats,
    }


def assemble_stage(
    config: PipelineConfig, design_path, blocks_path, fragments_dir, out_dir=None
) -> dict:
    design, design_bytes = _load_design(design_path)
    run_dir = _prepare_run_dir(config, design_bytes, out_dir)
    blocks = _read_blocks_json(blocks_path)
    if not blocks:
        raise ConfigError("blocks file contains no blocks")
    artifacts = _artifacts_from_fragments(design, blocks, fragments_dir)
    client = _make_client(config, run_dir)
    try:
        with _stage_guard("assemble"):
            candidates, payload = _assemble_candidates(config, client, design, artifacts, run_dir)
    finally:
        client.close()
    _dump_json(payload, run_dir / ASSEMBLY_FILENAME)
    response = dict(payload)
    response["run_dir"] = str(run_dir)
    response["aps_path"] = str(run_dir / APS_FILENAME)
    response["ms_path"] = str(run_dir / MS_FILENAME) if payload["ms"] else None
    response["strategies"] = [c.strategy for c in candidates]
    return response


def verify_stage(config: PipelineConfig, design_path, aps_path, ms_path=None, out_dir=None) -> dict:
    design, design_bytes = _load_design(design_path)
    run_dir = _prepare_run_dir(config, design_bytes, out_dir)
    candidates = []
    for strategy, path in ((APS_STRATEGY, aps_path), (MS_STRATEGY, ms_path)):
        if path is None:
            continue
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"candidate file not found: {path}")
        candidates.append(AssemblyCandidate(strategy, HtmlDocument(path.read_text(encoding="utf-8"))))
    if not candidates:
        raise ConfigError("at least one candidate page is required")
    with _stage_guard("verify"):
        winner, payload = _verify_candidates(config, design, candidates, run_dir)
    payload = dict(payload)
    payload["run_dir"] = str(run_dir)
    payload["selected_path"] = str(run_dir / SELECTED_FILENAME)
    return payload


def evaluate_sample(
    config: PipelineConfig, candidate_path, reference_path, design_path, out_dir=None
) -> dict:
    """Benchmark one generated page against its reference and design.

    A failed metric is reported as null while the others are still
    computed. New page-level metrics belong in the sample dict built
    here (and in the aggregate list below).
    """
    design, design_bytes = _load_design(design_path)
    run_dir = _prepare_run_dir(config, design_bytes, out_dir)
    for path in (candidate_path, reference_path):
        if not Path(path).exists():
            raise ConfigError(f"input file not found: {path}")
    renderer = build_renderer(config.renderer)
    embedder = build_embedder(config.embedder)

    sample: dict = {
        "candidate": str(candidate_path),
        "reference": str(reference_path),
        "design": str(design_path),
        "tree_bleu": None,
        "mae": None,
        "clip_sim": None,
        "verify_score": None,
    }
    try:
        candidate_dom = parse_dom(Path(candidate_path).read_text(encoding="utf-8"))
        reference_dom = parse_dom(Path(reference_path).read_text(encoding="utf-8"))
        sample["tree_bleu"] = tree_bleu(candidate_dom, reference_dom)
    except Exception as exc:
        log.warning("tree_bleu failed: %s", exc)
    try:
        shot = renderer.render_file(candidate_path, design.size)
        shot.save_png(run_dir / "candidate_screenshot.png")
        design_n, shot_n = normalize_pair(design, shot)
        sample["mae"] = mae(design_n, shot_n)
        sample["clip_sim"] = embedding_similarity(embedder, design_n, shot_n)
        sample["verify_score"] = verify_score(sample["mae"], sample["clip_sim"])
    except Exception as exc:
        log.warning("pixel metrics failed: %s", exc)
    try:
        reference_shot = renderer.render_file(reference_path, design.size)
        reference_shot.save_png(run_dir / "reference_screenshot.png")
    except Exception as exc:
        log.warning("reference render failed: %s", exc)

    samples = [sample]
    aggregate = {}
    for metric in ("tree_bleu", "mae", "clip_sim", "verify_score"):
        values = [s[metric] for s in samples if s[metric] is not None]
        if values:
            aggregate[metric] = {
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
            }
        else:
            aggregate[metric] = None
    payload = {"samples": samples, "aggregate": aggregate, "run_dir": str(run_dir)}
    _dump_json(payload, run_dir / METRICS_FILENAME)
    return payload
