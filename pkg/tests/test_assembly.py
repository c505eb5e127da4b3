import hashlib

import numpy as np
import pytest

from blockcoder.assembly import (
    AssemblyCandidate,
    VerifyReport,
    assemble_absolute,
    assemble_mllm,
    build_assembly_prompt,
    read_absolute_layout,
    select_best,
)
from blockcoder.client import ClientConfig, MllmClient, request_digest
from blockcoder.errors import ContextOverflowError, ExtractionError, RenderError, SelectionError
from blockcoder.geometry import BBox
from blockcoder.prompts import wrap_fragment
from blockcoder.raster import Raster
from blockcoder.synthesis import BlockArtifact, HtmlDocument

from conftest import toy_design


def make_artifact(index: int, box: BBox, fragment=None) -> BlockArtifact:
    fragment = fragment or f'<div class="p-0">block {index}</div>'
    return BlockArtifact(
        index=index,
        box=box,
        image=Raster.solid(box.w, box.h),
        html=HtmlDocument(wrap_fragment(fragment)),
        body_fragment=fragment,
    )


class TestAssembleAbsolute:
    def test_single_full_canvas_wrapper(self):
        doc = assemble_absolute([make_artifact(0, BBox(0, 0, 640, 480))], 640, 480)
        records = read_absolute_layout(doc)
        assert len(records) == 1
        assert records[0]["index"] == 0
        assert records[0]["attr_box"] == BBox(0, 0, 640, 480)
        assert records[0]["style_box"] == BBox(0, 0, 640, 480)

    def test_wrappers_in_dom_order(self):
        boxes = [BBox(0, 0, 100, 50), BBox(0, 50, 100, 50), BBox(0, 100, 100, 60)]
        doc = assemble_absolute([make_artifact(i, b) for i, b in enumerate(boxes)], 100, 160)
        records = read_absolute_layout(doc)
        assert [r["index"] for r in records] == [0, 1, 2]

    def test_round_trip_recovers_boxes_exactly(self):
        boxes = [BBox(0, 0, 300, 120), BBox(0, 120, 180, 200), BBox(180, 120, 120, 200)]
        doc = assemble_absolute([make_artifact(i, b) for i, b in enumerate(boxes)], 300, 320)
        for record, box in zip(read_absolute_layout(doc), boxes):
            assert record["attr_box"] == box
            assert record["style_box"] == box

    def test_body_is_positioned_canvas(self):
        doc = assemble_absolute([make_artifact(0, BBox(0, 0, 640, 480))], 640, 480)
        body_style = doc.body.attrs["style"]
        assert "position:relative" in body_style
        assert "width:640px" in body_style and "height:480px" in body_style
        assert "background:#ffffff" in body_style
        assert "margin:0" in body_style

    def test_wrapper_clips_overflow(self):
        doc = assemble_absolute([make_artifact(0, BBox(0, 0, 10, 10))], 10, 10)
        assert "overflow:hidden" in read_absolute_layout_style(doc)

    def test_fragment_content_is_embedded(self):
        doc = assemble_absolute(
            [make_artifact(0, BBox(0, 0, 10, 10), "<div><p>hello</p></div>")], 10, 10
        )
        assert "<p>hello</p>" in doc.source

    def test_empty_artifacts_rejected(self):
        with pytest.raises(ValueError):
            assemble_absolute([], 100, 100)

    def test_box_outside_canvas_rejected(self):
        with pytest.raises(ValueError):
            assemble_absolute([make_artifact(0, BBox(50, 50, 100, 100))], 100, 100)


def read_absolute_layout_style(doc) -> str:
    wrapper = doc.root.find_all(attr="data-latcoder-block")[0]
    return wrapper.attrs["style"]


class TestAssemblyPrompt:
    def test_embeds_fragments_and_boxes(self):
        design = toy_design()
        artifacts = [
            make_artifact(0, BBox(0, 0, 400, 250)),
            make_artifact(1, BBox(0, 250, 400, 270)),
        ]
        request = build_assembly_prompt(design, artifacts, model="m")
        text = "\n".join(p.text for p in request.user_parts if hasattr(p, "text"))
        assert "block 0" in text and "block 1" in text
        assert "(x=0, y=0, width=400, height=250)" in text
        assert "(x=0, y=250, width=400, height=270)" in text
        assert request.temperature == 0.0
        assert any(hasattr(p, "png") for p in request.user_parts)

    def test_context_budget_overflow(self):
        artifacts = [make_artifact(0, BBox(0, 0, 40, 40), "<div>" + "x" * 5000 + "</div>")]
        with pytest.raises(ContextOverflowError) as exc_info:
            build_assembly_prompt(
                Raster.solid(40, 40), artifacts, model="m", context_budget=1000
            )
        assert exc_info.value.budget == 1000
        assert exc_info.value.estimate > 1000

    def test_no_budget_means_no_limit(self):
        artifacts = [make_artifact(0, BBox(0, 0, 40, 40), "<div>" + "x" * 5000 + "</div>")]
        build_assembly_prompt(Raster.solid(40, 40), artifacts, model="m", context_budget=None)


class TestAssembleMllm:
    def test_canned_merged_page(self, tmp_path):
        design = toy_design()
        artifacts = [make_artifact(0, BBox(0, 0, 400, 520))]
        merged = wrap_fragment("<div>merged page</div>")
        mock_dir = tmp_path / "mock"
        mock_dir.mkdir()
        config = ClientConfig(mock_dir=str(mock_dir))
        request = build_assembly_prompt(
            design,
            artifacts,
            model=config.model,
            max_output_tokens=config.max_output_tokens,
            image_pixel_budget=config.image_pixel_budget,
            image_token_cost=config.image_token_cost,
            context_budget=config.context_budget,
        )
        (mock_dir / f"{request_digest(request)}.txt").write_text(
            f"```html\n{merged}\n```", encoding="utf-8"
        )
        client = MllmClient(config, tmp_path / "cache")
        assert assemble_mllm(client, design, artifacts).source == merged.strip()

    def test_prose_response_raises_extraction_error(self, tmp_path):
        design = toy_design()
        artifacts = [make_artifact(0, BBox(0, 0, 400, 520))]
        mock_dir = tmp_path / "mock"
        mock_dir.mkdir()
        config = ClientConfig(mock_dir=str(mock_dir))
        request = build_assembly_prompt(
            design, artifacts, model=config.model,
            max_output_tokens=config.max_output_tokens,
            image_pixel_budget=config.image_pixel_budget,
            image_token_cost=config.image_token_cost,
            context_budget=config.context_budget,
        )
        (mock_dir / f"{request_digest(request)}.txt").write_text(
            "I merged them in my head.", encoding="utf-8"
        )
        client = MllmClient(config, tmp_path / "cache")
        with pytest.raises(ExtractionError):
            assemble_mllm(client, design, artifacts)

    def test_warm_cache_is_deterministic(self, tmp_path):
        design = toy_design()
        artifacts = [make_artifact(0, BBox(0, 0, 400, 520))]
        client = MllmClient(ClientConfig(), tmp_path / "cache")
        first = assemble_mllm(client, design, artifacts)
        second = assemble_mllm(client, design, artifacts)
        assert first.source == second.source


class TestVerifyReport:
    def test_consistent_report_accepted(self):
        report = VerifyReport.from_measurements(51.0, 0.8)
        assert report.verify_score == pytest.approx(0.8, abs=1e-9)

    def test_inconsistent_report_rejected(self):
        with pytest.raises(ValueError):
            VerifyReport(mae=0.0, clip_sim=1.0, verify_score=0.5)

    def test_scored_candidate_requires_screenshot(self):
        with pytest.raises(ValueError):
            AssemblyCandidate(
                "APS",
                HtmlDocument(wrap_fragment("<div></div>")),
                screenshot=None,
                verify=VerifyReport.from_measurements(0.0, 1.0),
            )

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValueError):
            AssemblyCandidate("XYZ", HtmlDocument(wrap_fragment("<div></div>")))


class FakeRenderer:
    """Maps html source to a fixed raster."""

    def __init__(self, mapping):
        self.mapping = mapping

    def render_source(self, source, viewport):
        result = self.mapping[source]
        if isinstance(result, Exception):
            raise result
        return result


class FakeEmbedder:
    """Maps image content digests to fixed vectors."""

    def __init__(self, mapping):
        self.mapping = mapping

    def embed(self, image):
        return self.mapping[hashlib.sha256(image.png_bytes()).hexdigest()]


def shot_of_value(width, height, value) -> Raster:
    return Raster(np.full((height, width, 3), value, dtype=np.uint8))


def candidate(strategy, marker) -> AssemblyCandidate:
    return AssemblyCandidate(strategy, HtmlDocument(wrap_fragment(f"<div>{marker}</div>")))


def digest_of(image: Raster) -> str:
    return hashlib.sha256(image.png_bytes()).hexdigest()


class TestSelectBest:
    def setup_method(self):
        self.design = Raster.solid(20, 10, (0, 0, 0))

    def _run(self, specs, order=None):
        """specs: {strategy: (pixel_value, sim)}; returns selected candidate."""
        candidates = []
        mapping = {}
        embed_map = {digest_of(self.design): np.array([1.0, 0.0])}
        for strategy, (value, sim) in specs.items():
            cand = candidate(strategy, f"{strategy}-{value}-{sim}")
            shot = shot_of_value(20, 10, value)
            mapping[cand.html.source] = shot
            embed_map[digest_of(shot)] = np.array([sim, np.sqrt(1 - sim**2)])
            candidates.append(cand)
        if order:
            candidates = [candidates[i] for i in order]
        return select_best(
            candidates, self.design, FakeRenderer(mapping), FakeEmbedder(embed_map)
        )

    def test_single_candidate_is_scored_and_returned(self):
        winner = self._run({"APS": (0, 1.0)})
        assert winner.strategy == "APS"
        assert winner.verify.mae == 0.0
        assert winner.verify.clip_sim == pytest.approx(1.0)
        assert winner.verify.verify_score == pytest.approx(1.0)
        assert winner.screenshot is not None

    def test_endpoint_scores(self):
        winner = self._run({"APS": (0, 1.0), "MS": (255, 0.0)})
        assert winner.strategy == "APS"
        assert winner.verify.verify_score == pytest.approx(1.0)

    def test_worked_example_scores(self):
        # mae 51 with sim 0.8 scores 0.8; mae 25.5 with sim 0.6 scores 0.75.
        design = Raster.solid(20, 10, (0, 0, 0))
        cand_a = candidate("APS", "a")
        cand_b = candidate("MS", "b")
        shot_a = shot_of_value(20, 10, 51)
        arr = np.full((10, 20, 3), 25, dtype=np.uint8)
        arr[::2] = 26  # alternating rows average to 25.5
        shot_b = Raster(arr)
        renderer = FakeRenderer({cand_a.html.source: shot_a, cand_b.html.source: shot_b})
        embedder = FakeEmbedder(
            {
                digest_of(design): np.array([1.0, 0.0]),
                digest_of(shot_a): np.array([0.8, 0.6]),
                digest_of(shot_b): np.array([0.6, 0.8]),
            }
        )
        winner = select_best([cand_b, cand_a], design, renderer, embedder)
        assert winner.strategy == "APS"
        assert winner.verify.mae == pytest.approx(51.0)
        assert winner.verify.verify_score == pytest.approx(0.8)

    def test_tie_goes_to_aps_regardless_of_order(self):
        for order in ([0, 1], [1, 0]):
            winner = self._run({"APS": (40, 0.5), "MS": (40, 0.5)}, order=order)
            assert winner.strategy == "APS"

    def test_render_failure_skips_candidate(self):
        cand_a = candidate("APS", "works")
        cand_b = candidate("MS", "broken")
        shot = shot_of_value(20, 10, 0)
        renderer = FakeRenderer(
            {cand_a.html.source: shot, cand_b.html.source: RenderError("no browser")}
        )
        embedder = FakeEmbedder(
            {digest_of(self.design): np.array([1.0, 0.0]), digest_of(shot): np.array([1.0, 0.0])}
        )
        winner = select_best([cand_a, cand_b], self.design, renderer, embedder)
        assert winner.strategy == "APS"

    def test_all_renders_failing_is_selection_error(self):
        cand = candidate("APS", "broken")
        renderer = FakeRenderer({cand.html.source: RenderError("boom")})
        with pytest.raises(SelectionError):
            select_best([cand], self.design, renderer, FakeEmbedder({}))

    def test_no_candidates_is_selection_error(self):
        with pytest.raises(SelectionError):
            select_best([], self.design, FakeRenderer({}), FakeEmbedder({}))
