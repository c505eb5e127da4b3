"""Acceptance suite: one test per criterion, offline, mock/stub backends.

Run with `pytest -s tests/test_acceptance.py` to see one pass/fail line
per criterion. The live smoke test at the end is optional and skipped
unless real endpoints are configured through environment variables.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from blockcoder.assembly import (
    AssemblyCandidate,
    assemble_absolute,
    read_absolute_layout,
    select_best,
)
from blockcoder.cli import main as cli_main
from blockcoder.config import load_config
from blockcoder.divider import DividerParams, divide
from blockcoder.evaluation import (
    DomNode,
    EmbedderConfig,
    StubEmbedder,
    mae,
    one_height_subtrees,
    tree_bleu,
    verify_score,
)
from blockcoder.geometry import BBox, Line, bbox_intersects, line_crosses_bbox
from blockcoder.pipeline import run_pipeline
from blockcoder.prompts import wrap_fragment
from blockcoder.raster import Raster
from blockcoder.rendering import RendererConfig, StubRenderer
from blockcoder.synthesis import BlockArtifact, HtmlDocument
from blockcoder.textregions import TextRegion, merge_adjacent_regions

from conftest import bar_canvas, edge_defect_canvas, two_level_canvas, white_canvas

PARAMS = DividerParams()


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:02d} {name}: FAIL")
        raise
    print(f"ACCEPTANCE {number:02d} {name}: PASS")


# -- 1: divider tiling suite ---------------------------------------------


def random_divider_canvas(rng: random.Random, np_rng: np.random.Generator):
    width = rng.randint(400, 900)
    height = rng.randint(400, 900)
    arr = white_canvas(width, height)
    for _ in range(rng.randint(1, 4)):  # content patches, never solid
        cw = rng.randint(40, max(41, width // 3))
        ch = rng.randint(40, max(41, height // 3))
        x = rng.randint(0, width - cw)
        y = rng.randint(0, height - ch)
        arr[y : y + ch, x : x + cw] = np_rng.integers(0, 256, (ch, cw, 3), dtype=np.uint8)
    for _ in range(rng.randint(0, 3)):  # horizontal divider bars
        y = rng.randint(0, height - 4)
        arr[y : y + 3, :] = rng.randint(60, 220)
    for _ in range(rng.randint(0, 3)):  # vertical divider bars
        x = rng.randint(0, width - 4)
        arr[:, x : x + 3] = rng.randint(60, 220)
    regions = [
        TextRegion(
            BBox(
                rng.randint(0, width - 80),
                rng.randint(0, height - 30),
                rng.randint(20, 80),
                rng.randint(10, 30),
            )
        )
        for _ in range(rng.randint(0, 5))
    ]
    return Raster(arr), merge_adjacent_regions(regions, 20)


def assert_perfect_tiling(blocks, width, height):
    assert sum(b.area for b in blocks) == width * height
    for i, a in enumerate(blocks):
        assert a.x >= 0 and a.y >= 0 and a.right <= width and a.bottom <= height
        for b in blocks[i + 1 :]:
            assert not bbox_intersects(a, b)


def assert_spacing_and_text_integrity(result, merged_regions):
    tau = PARAMS.min_line_distance
    for node in result.split_tree.walk():
        if not node.offsets:
            continue
        region = node.region
        if node.direction == "horizontal":
            leading, trailing = region.y, region.bottom
        else:
            leading, trailing = region.x, region.right
        stops = [leading, *node.offsets, trailing]
        assert all(stops[i + 1] - stops[i] >= tau for i in range(len(stops) - 1))
        for offset in node.offsets:
            line = Line(node.direction, offset, region)
            for text_region in merged_regions:
                assert not line_crosses_bbox(line, text_region.box)


def test_criterion_1_divider_tiling_suite():
    with criterion(1, "divider tiling suite"):
        rng = random.Random(2026)
        np_rng = np.random.default_rng(2026)
        started = time.perf_counter()
        for _ in range(200):
            image, merged = random_divider_canvas(rng, np_rng)
            result = divide(image, merged, PARAMS)
            assert_perfect_tiling(list(result.blocks), image.width, image.height)
            assert_spacing_and_text_integrity(result, merged)
            assert (
                all(b.area >= PARAMS.min_block_area for b in result.blocks)
                or len(result.blocks) == 1
            )
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"tiling suite took {elapsed:.2f}s"


# -- 2: divider ground truth ---------------------------------------------


def test_criterion_2_divider_ground_truth():
    with criterion(2, "divider ground-truth suite"):
        for _ in range(2):  # deterministic across two runs
            three = divide(two_level_canvas(), [], PARAMS)
            assert len(three.blocks) == 3
            root = three.split_tree
            assert root.direction == "horizontal"
            assert len(root.offsets) == 1
            assert abs(root.offsets[0] - 500) <= PARAMS.grid_interval
            lower = root.children[1]
            assert lower.direction == "vertical"
            assert abs(lower.offsets[0] - 500) <= PARAMS.grid_interval

            one = divide(Raster(white_canvas(1000, 1000)), [], PARAMS)
            assert len(one.blocks) == 1

            two = divide(two_level_canvas(), [], DividerParams(max_depth=1))
            assert len(two.blocks) == 2
            assert abs(two.split_tree.offsets[0] - 500) <= PARAMS.grid_interval


# -- 3: edge-ignore behavior ---------------------------------------------


def test_criterion_3_edge_ignore():
    with criterion(3, "edge-defect division equals clean division"):
        clean = divide(bar_canvas(), [], PARAMS)
        defect = divide(edge_defect_canvas(), [], PARAMS)
        assert list(defect.blocks) == list(clean.blocks)
        assert defect.split_tree.to_dict() == clean.split_tree.to_dict()


# -- 4: structural-recall oracle -----------------------------------------


def brute_force_signatures(tree: DomNode) -> set:
    found = set()

    def visit(node):
        if node.children:
            found.add((node.tag, tuple(child.tag for child in node.children)))
        for child in node.children:
            visit(child)

    visit(tree)
    return found


def random_tree(rng: random.Random, max_nodes: int) -> DomNode:
    tags = ["div", "p", "span", "ul", "li", "a", "table", "img", "h1"]
    budget = rng.randint(1, max_nodes)

    def grow(depth: int) -> DomNode:
        nonlocal budget
        budget -= 1
        children = []
        while budget > 0 and len(children) < 4 and rng.random() < 0.6 and depth < 7:
            children.append(grow(depth + 1))
        return DomNode(rng.choice(tags), tuple(children))

    return grow(0)


def test_criterion_4_tree_recall_oracle():
    with criterion(4, "structural recall agrees with brute force"):
        rng = random.Random(977)
        for _ in range(1000):
            tree = random_tree(rng, 20)
            mine = {(s.parent_tag, s.child_tags) for s in one_height_subtrees(tree)}
            assert mine == brute_force_signatures(tree)
            if one_height_subtrees(tree):
                assert tree_bleu(tree, tree) == 1.0
        candidate = DomNode("html", (DomNode("body", (DomNode("div", (DomNode("p"), DomNode("p"))),)),))
        reference = DomNode(
            "html", (DomNode("head"), DomNode("body", (DomNode("div", (DomNode("p"),)),)))
        )
        assert tree_bleu(candidate, reference) == pytest.approx(1 / 3, abs=0)


# -- 5: metric analytics ---------------------------------------------------


def test_criterion_5_metric_analytics():
    with criterion(5, "pixel and composite metric analytics"):
        black = Raster.solid(4, 4, (0, 0, 0))
        white = Raster.solid(4, 4, (255, 255, 255))
        assert mae(black, black) == 0.0
        assert mae(black, white) == 255.0
        assert mae(Raster.solid(2, 2, (0, 0, 0)), Raster.solid(2, 2, (10, 20, 30))) == 20.0
        assert verify_score(51.0, 0.8) == pytest.approx(0.8, abs=1e-9)
        assert verify_score(0.0, 1.0) == 1.0
        assert verify_score(255.0, 0.0) == 0.0
        rng = np.random.default_rng(55)
        for _ in range(5):
            m = float(rng.uniform(1.0, 250.0))
            s = float(rng.uniform(0.05, 0.95))
            dm = (verify_score(m + 1.0, s) - verify_score(m, s)) / 1.0
            ds = (verify_score(m, s + 0.01) - verify_score(m, s)) / 0.01
            assert dm == pytest.approx(-0.5 / 255.0, abs=1e-12)
            assert ds == pytest.approx(0.5, abs=1e-9)


# -- 6: APS geometry round-trip --------------------------------------------


def random_tiling(rng: random.Random, width: int, height: int) -> list:
    out = []

    def split(box: BBox, depth: int):
        can_v = box.w >= 80
        can_h = box.h >= 80
        if depth == 0 or (not can_v and not can_h) or rng.random() < 0.25:
            out.append(box)
            return
        if can_v and (not can_h or rng.random() < 0.5):
            cut = rng.randint(box.x + 30, box.right - 30)
            split(BBox(box.x, box.y, cut - box.x, box.h), depth - 1)
            split(BBox(cut, box.y, box.right - cut, box.h), depth - 1)
        else:
            cut = rng.randint(box.y + 30, box.bottom - 30)
            split(BBox(box.x, box.y, box.w, cut - box.y), depth - 1)
            split(BBox(box.x, cut, box.w, box.bottom - cut), depth - 1)

    split(BBox(0, 0, width, height), 4)
    return sorted(out, key=lambda b: (b.y, b.x))


def placeholder_artifacts(blocks) -> list:
    artifacts = []
    for index, box in enumerate(blocks):
        fragment = f'<div style="width:{box.w}px;height:{box.h}px"></div>'
        artifacts.append(
            BlockArtifact(
                index=index,
                box=box,
                image=Raster.solid(box.w, box.h),
                html=HtmlDocument(wrap_fragment(fragment)),
                body_fragment=fragment,
            )
        )
    return artifacts


def test_criterion_6_aps_geometry_round_trip():
    with criterion(6, "absolute-positioning geometry round-trip"):
        rng = random.Random(4242)
        for _ in range(100):
            width = rng.randint(200, 1200)
            height = rng.randint(200, 1200)
            blocks = random_tiling(rng, width, height)
            document = assemble_absolute(placeholder_artifacts(blocks), width, height)
            records = read_absolute_layout(document)
            assert [r["index"] for r in records] == list(range(len(blocks)))
            for record, box in zip(records, blocks):
                assert record["attr_box"] == box
                assert record["style_box"] == box


# -- 7: dynamic selection ---------------------------------------------------


def uniform_shot(width: int, height: int, value: int) -> Raster:
    return Raster(np.full((height, width, 3), value, dtype=np.uint8))


def test_criterion_7_dynamic_selection(tmp_path):
    with criterion(7, "dynamic selection returns the verify-score argmax"):
        rng = random.Random(31337)
        shots_dir = tmp_path / "shots"
        vectors_dir = tmp_path / "vectors"
        shots_dir.mkdir()
        vectors_dir.mkdir()
        width, height = 32, 24
        design = Raster.solid(width, height, (0, 0, 0))

        def register_vector(image: Raster, sim: float):
            digest = hashlib.sha256(image.png_bytes()).hexdigest()
            vector = [sim, math.sqrt(max(0.0, 1.0 - sim * sim))]
            (vectors_dir / f"{digest}.json").write_text(
                json.dumps({"vector": vector}), encoding="utf-8"
            )

        register_vector(design, 1.0)
        renderer = StubRenderer(
            RendererConfig(stub_dir=str(shots_dir), synthetic_fallback=False)
        )
        embedder = StubEmbedder(
            EmbedderConfig(stub_dir=str(vectors_dir), synthetic_fallback=False)
        )

        for trial in range(50):
            tie = trial % 5 == 4
            value_aps = rng.randint(0, 255)
            sim_aps = rng.randint(0, 20) / 20
            if tie:
                value_ms, sim_ms = value_aps, sim_aps
            else:
                value_ms = rng.choice([v for v in range(256) if v != value_aps])
                sim_ms = rng.randint(0, 20) / 20
            specs = {"APS": (value_aps, sim_aps), "MS": (value_ms, sim_ms)}
            candidates = []
            expected_scores = {}
            for strategy, (value, sim) in specs.items():
                doc = HtmlDocument(wrap_fragment(f"<div>{strategy} trial {trial}</div>"))
                shot = uniform_shot(width, height, value)
                digest = hashlib.sha256(doc.source.encode("utf-8")).hexdigest()
                shot.save_png(shots_dir / f"{digest}.png")
                register_vector(shot, sim)
                candidates.append(AssemblyCandidate(strategy, doc))
                expected_scores[strategy] = verify_score(float(value), sim)
            if tie or expected_scores["APS"] >= expected_scores["MS"]:
                expected = "APS"
            else:
                expected = "MS"
            for ordering in (candidates, list(reversed(candidates))):
                winner = select_best(ordering, design, renderer, embedder)
                assert winner.strategy == expected, (trial, expected_scores)
                assert winner.verify.verify_score == pytest.approx(
                    expected_scores[expected], abs=1e-9
                )


# -- 8 & 9: end-to-end determinism and the short-context path ---------------


def test_criterion_8_end_to_end_determinism(tmp_path, toy_design_path):
    with criterion(8, "end-to-end determinism on the toy design"):
        out = str(tmp_path / "runs")
        runner = CliRunner()

        def run_once() -> float:
            started = time.perf_counter()
            result = runner.invoke(
                cli_main,
                ["run", "--design", str(toy_design_path), "--out", out],
                catch_exceptions=False,
            )
            elapsed = time.perf_counter() - started
            assert result.exit_code == 0, result.output
            assert elapsed < 5.0, f"run took {elapsed:.2f}s"
            return elapsed

        run_once()  # cold run primes the response cache
        config = load_config(None, {"pipeline.output_dir": out})
        run_dir = Path(out) / next(
            p.name for p in Path(out).iterdir() if p.is_dir()
        )
        selected_first = (run_dir / "selected.html").read_bytes()

        run_once()
        selected_second = (run_dir / "selected.html").read_bytes()
        report_second = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))

        run_once()
        selected_third = (run_dir / "selected.html").read_bytes()
        report_third = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))

        assert selected_first == selected_second == selected_third
        report_second.pop("timings")
        report_third.pop("timings")
        assert json.dumps(report_second, sort_keys=True) == json.dumps(
            report_third, sort_keys=True
        )
        assert report_third["config"] == config.snapshot()


def test_criterion_9_short_context_path(tmp_path, toy_design_path):
    with criterion(9, "zero context budget falls back to absolute positioning"):
        config = load_config(
            None,
            {
                "pipeline.output_dir": str(tmp_path / "runs"),
                "client.context_budget": "0",
            },
        )
        report = run_pipeline(config, toy_design_path)
        assert report.status == "ok"
        assert report.selected == "APS"
        assert report.assembly["ms"] is None
        assert report.assembly["ms_skip_reason"] is not None
        assert "context budget" in report.assembly["ms_skip_reason"]
        assert [c["strategy"] for c in report.candidates] == ["APS"]


# -- 10: optional live smoke test -------------------------------------------

LIVE_VARS = ("BLOCKCODER_LIVE_BASE_URL", "BLOCKCODER_LIVE_MODEL", "BLOCKCODER_LIVE_RENDER_TEMPLATE")


@pytest.mark.skipif(
    not all(os.environ.get(v) for v in LIVE_VARS),
    reason="live smoke test needs BLOCKCODER_LIVE_BASE_URL, BLOCKCODER_LIVE_MODEL, "
    "BLOCKCODER_LIVE_RENDER_TEMPLATE (and an API key in BLOCKCODER_API_KEY)",
)
def test_criterion_10_live_smoke(tmp_path, toy_design_path):
    with criterion(10, "live endpoint smoke test"):
        config = load_config(
            None,
            {
                "pipeline.output_dir": str(tmp_path / "runs"),
                "client.backend": "openai",
                "client.base_url": os.environ["BLOCKCODER_LIVE_BASE_URL"],
                "client.model": os.environ["BLOCKCODER_LIVE_MODEL"],
                "renderer.backend": "command",
                "renderer.command_template": os.environ["BLOCKCODER_LIVE_RENDER_TEMPLATE"],
            },
        )
        report = run_pipeline(config, toy_design_path)
        assert report.status in ("ok", "partial")
        scores = {c["strategy"]: c.get("verify_score") for c in report.candidates}
        selected_score = scores[report.selected]
        assert all(
            selected_score >= score for score in scores.values() if score is not None
        )
