"""Acceptance suite: one test per criterion, one printed line per criterion.

Heavier than the unit tests (the ablation alone runs 60 optimizations); the
whole module is still a plain pytest file and runs with the default suite.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from simbil.errors import NoBackgroundError
from simbil.imageio import load_mask, save_image, save_mask
from simbil.inpaint import (
    InpaintSpec,
    NetworkConfig,
    compute_background_average,
    default_guide_region,
    dip_loss,
    gradcheck,
    guided_loss,
    inpaint,
)
from simbil.metrics import mae, ssim
from simbil.pipeline import PipelineConfig, execute, plan
from simbil.position import (
    PositionConfig,
    TrainingExample,
    TrainOptions,
    build_dataset,
    build_position_model,
    predict_position,
    relation_satisfaction_rate,
    train,
)
from simbil.scenegraph import (
    EditOp,
    ObjectNode,
    RelationshipEdge,
    Triplet,
    fold_edits,
    graph_diff,
    graphs_equal,
    invert_relationship_change,
    parse_scene_graph,
    serialize_scene_graph,
)
from simbil.segmask import Mask, bbox_to_pixels, erode_foreground
from simbil.synthetic import (
    generate_position_pairs,
    generate_scene,
    generate_scenes,
    write_query_library,
    write_scene,
)

from conftest import random_edit_sequence, random_graph
from test_inpaint import background_average_oracle, random_instance
from test_metrics import mae_oracle, ssim_oracle

ABLATION_NET = NetworkConfig(depth=4, channels=24, skip_channels=4)

FAST_PIPELINE = PipelineConfig(inpaint=InpaintSpec(
    iterations=40, guide_mode="global",
    network=NetworkConfig(depth=3, channels=12), dilation_radius=2,
    noise_seed=0))


def report_line(name: str, detail: str) -> None:
    print(f"[PASS] {name}: {detail}")


def test_criterion_1_guided_beats_plain_ablation():
    """Removal with background guide + dilation vs plain fit, 10 scenes x 3
    seeds, 500 iterations each; guided must win >= 70% and in the mean.

    The removal mask is the ground-truth instance mask under-segmented by one
    boundary ring (eroded 1 px), the typical imperfection of a real
    segmentation backend: the leftover object-colored ring is exactly the
    boundary misinformation that dilation discards and the background guide
    corrects. A pixel-perfect mask would idealize away the problem being
    measured.
    """
    scenes = generate_scenes(10, seed=2024, size=64)
    seeds = (0, 1, 2)
    results = []
    slowest = 0.0
    for scene in scenes:
        node = scene.graph.nodes[0]
        mask = erode_foreground(scene.masks[node.id], 1)
        for seed in seeds:
            errs = {}
            for label, mode, radius in (("plain", "none", 0),
                                        ("guided", "global", None)):
                spec = InpaintSpec(iterations=500, guide_mode=mode,
                                   dilation_radius=radius,
                                   network=ABLATION_NET, noise_seed=seed)
                started = time.monotonic()
                run = inpaint(scene.image, mask, spec)
                slowest = max(slowest, time.monotonic() - started)
                hole = run.dilated_mask.data == 0
                errs[label] = float(np.abs(
                    run.image[hole] - scene.background[None, :]).mean() * 100)
            results.append(errs)
    wins = sum(r["guided"] < r["plain"] for r in results)
    mean_plain = float(np.mean([r["plain"] for r in results]))
    mean_guided = float(np.mean([r["guided"] for r in results]))
    assert wins / len(results) >= 0.70, (wins, len(results), results)
    assert mean_guided < mean_plain, (mean_guided, mean_plain)
    assert slowest <= 180.0, f"run took {slowest:.0f}s, budget is 3 min"
    report_line("guided-vs-plain ablation",
                f"guided wins {wins}/{len(results)} runs, mean hole MAE "
                f"{mean_guided:.2f} vs {mean_plain:.2f}, slowest run "
                f"{slowest:.0f}s")


def test_criterion_2_lambda_zero_degeneration(tmp_path):
    """Guided fill with weight 0 must be byte-identical to the plain fill
    under the same seeds, three instances."""
    rng = np.random.default_rng(9)
    for idx in range(3):
        scene = generate_scene(rng, size=64)
        node = scene.graph.nodes[idx % len(scene.graph.nodes)]
        mask = scene.masks[node.id]
        base = dict(iterations=120, dilation_radius=2,
                    network=NetworkConfig(depth=3, channels=16),
                    noise_seed=idx)
        plain = inpaint(scene.image, mask,
                        InpaintSpec(guide_mode="none", **base))
        lam0 = inpaint(scene.image, mask,
                       InpaintSpec(guide_mode="global", lam=0.0, **base))
        p_path = tmp_path / f"plain_{idx}.png"
        z_path = tmp_path / f"lam0_{idx}.png"
        save_image(p_path, plain.image)
        save_image(z_path, lam0.image)
        assert p_path.read_bytes() == z_path.read_bytes(), f"instance {idx}"
    report_line("lambda-zero degeneration",
                "3 instances byte-identical to the plain fill")


def test_criterion_3_loss_and_gradient_correctness():
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(5):
        image, mask = random_instance(rng, 8, 8)
        worst = max(worst, gradcheck("dip", image, mask))
        worst = max(worst,
                    gradcheck("guided", image, mask, guide_mode="global"))
        worst = max(worst,
                    gradcheck("guided", image, mask, guide_mode="row_wise"))
    assert worst <= 1e-6

    # zero construction: hole filled with the background average
    image, mask = random_instance(rng, 8, 8)
    guide = compute_background_average(image, mask,
                                       default_guide_region(mask), "global")
    filled = image.copy()
    filled[mask.data == 0] = guide.global_mean
    assert abs(guided_loss(filled, image, mask, guide, 0.1)) <= 1e-12

    # hand-computed instance: single hole pixel offset by 0.2, weight 0.1
    img2 = np.array([[0.2, 0.4], [0.6, 0.8]])
    m2 = Mask.from_array(np.array([[1, 1], [1, 0]], dtype=np.uint8))
    g2 = compute_background_average(img2, m2, (0, 0, 1, 1), "global")
    x2 = img2.copy()
    x2[1, 1] = g2.global_mean[0] + 0.2
    assert abs(guided_loss(x2, img2, m2, g2, 0.1) - 0.004) <= 1e-12
    assert dip_loss(x2, img2, m2) == 0.0
    report_line("loss/gradient correctness",
                f"max finite-difference rel. error {worst:.2e}, "
                f"hand value 0.004 exact to 1e-12")


def test_criterion_4_background_average_oracle():
    rng = np.random.default_rng(47)
    checked = fallbacks = 0
    while checked < 50:
        h, w = int(rng.integers(4, 12)), int(rng.integers(4, 12))
        image, mask = random_instance(rng, h, w)
        # narrow vertical guide bands force row-fallback cases regularly
        if checked % 3 == 0:
            region = (0.0, float(rng.uniform(0.3, 0.6)), 1.0, 1.0)
        else:
            region = (float(rng.uniform(0, 0.3)), float(rng.uniform(0, 0.3)),
                      float(rng.uniform(0.7, 1.0)),
                      float(rng.uniform(0.7, 1.0)))
        for mode in ("global", "row_wise"):
            try:
                guide = compute_background_average(image, mask, region, mode)
            except NoBackgroundError:
                continue
            g, rows, fb = background_average_oracle(image, mask, region, mode)
            assert np.max(np.abs(guide.global_mean - g)) <= 1e-12
            if mode == "row_wise":
                assert np.max(np.abs(guide.row_means - rows)) <= 1e-12
                assert np.array_equal(guide.row_fallback, fb)
                fallbacks += int(fb.any())
        checked += 1
    assert fallbacks > 0, "no row-fallback case exercised"
    report_line("background-average oracle",
                f"50 instances match enumeration to 1e-12 "
                f"({fallbacks} with row fallbacks)")


def test_criterion_5_position_model_property():
    started = time.monotonic()
    pairs = generate_position_pairs(2200, seed=100)
    examples, _ = build_dataset(pairs)
    train_set, held_out = examples[:2000], examples[2000:2200]
    categories = sorted({c for ex in examples for t in ex.triplets
                         for c in (t.subject_category, t.object_category)})
    predicates = sorted({t.predicate for ex in examples for t in ex.triplets})
    model = build_position_model(
        PositionConfig(use_category_embeddings=False),
        categories, predicates, seed=0)
    train(model, train_set, TrainOptions(epochs=50, batch_size=64, seed=0))
    rate = relation_satisfaction_rate(model, held_out)
    assert rate >= 0.90, rate

    single = TrainingExample(
        triplets=(Triplet("cube", "left of", "sphere", True,
                          (0.6, 0.4, 0.8, 0.6)),),
        target_bbox=(0.2, 0.35, 0.4, 0.65))
    overfit = build_position_model(
        PositionConfig(use_category_embeddings=False),
        categories, predicates, seed=1)
    curve = train(overfit, [single],
                  TrainOptions(epochs=600, batch_size=1, seed=0))
    assert min(curve) < 1e-4, min(curve)
    elapsed = time.monotonic() - started
    assert elapsed <= 300.0, f"{elapsed:.0f}s exceeds the 5 min budget"
    report_line("position model property",
                f"relation satisfaction {rate:.1%} on 200 held-out, "
                f"single-example MSE {min(curve):.2e}, {elapsed:.0f}s")


def _allowed_region(job_dir, roi, shape):
    allowed = np.zeros(shape[:2], dtype=bool)
    for mask_path in sorted(job_dir.glob("steps/*/dilated_mask.png")):
        allowed |= load_mask(mask_path).data == 0
    if roi is not None:
        x0, y0, x1, y1 = bbox_to_pixels(roi.bbox, shape[1], shape[0])
        allowed[y0:y1, x0:x1] = True
    return allowed


def test_criterion_6_preservation_invariant(tmp_path):
    """Every op type leaves pixels outside RoI + dilated holes bit-identical."""
    scene = generate_scene(np.random.default_rng(606), size=48)
    write_query_library(tmp_path / "lib", seed=8, scenes=2)
    library_cat = json.loads(
        (tmp_path / "lib" / "index.json").read_text())["entries"][0]["category"]
    target = scene.graph.nodes[0]
    anchor = scene.graph.nodes[1]
    edge = next(e for e in scene.graph.incident_edges(target.id)
                if e.subject_id == target.id)
    flipped = {"left of": "right of", "right of": "left of",
               "front of": "behind", "behind": "front of"}[edge.predicate]

    cases = {
        "remove": EditOp(kind="remove", target_id=target.id),
        "replace": EditOp(kind="replace", target_id=target.id,
                          new_node=ObjectNode.make(target.id, library_cat, {},
                                                   target.bbox)),
        "relationship_change": EditOp(
            kind="relationship_change", target_id=target.id,
            edge_change=(edge, RelationshipEdge(edge.subject_id, flipped,
                                                edge.object_id))),
        "add": EditOp(kind="add",
                      new_node=ObjectNode.make("extra", library_cat, {},
                                               (0.62, 0.62, 0.9, 0.9)),
                      new_edges=(RelationshipEdge("extra", "left of",
                                                  anchor.id),)),
    }
    config = PipelineConfig(inpaint=FAST_PIPELINE.inpaint,
                            query_library=str(tmp_path / "lib"))
    diffs = {}
    for kind, op in cases.items():
        job_dir = tmp_path / f"job_{kind}"
        result = execute(plan(scene.graph, [op]), scene.image, scene.graph,
                         config, job_dir)
        allowed = _allowed_region(job_dir, result.roi, scene.image.shape)
        differing = int((~np.all(result.image == scene.image, axis=-1)
                         & ~allowed).sum())
        diffs[kind] = differing
        assert differing == 0, f"{kind}: {differing} pixels differ outside"
    report_line("preservation invariant",
                f"0 differing pixels outside RoI+holes for {sorted(diffs)}")


def test_criterion_7_metrics_oracle():
    rng = np.random.default_rng(77)
    worst_mae = worst_ssim = 0.0
    for _ in range(50):
        a = rng.uniform(0, 1, (16, 16, 3))
        b = np.clip(a + rng.normal(0, 0.15, a.shape), 0, 1)
        worst_mae = max(worst_mae, abs(mae(a, b) - mae_oracle(a, b)))
        worst_ssim = max(worst_ssim, abs(ssim(a, b) - ssim_oracle(a, b)))
    assert worst_mae <= 1e-9
    assert worst_ssim <= 1e-6
    a = rng.uniform(0, 1, (32, 32, 3))
    assert ssim(a, a) == 100.0
    report_line("metrics oracle",
                f"50 instances, mae err {worst_mae:.1e}, ssim err "
                f"{worst_ssim:.1e}, ssim(a,a)=100 exact")


def test_criterion_8_end_to_end_determinism(tmp_path):
    scene = generate_scene(np.random.default_rng(808), size=48)
    write_scene(tmp_path / "scene", scene)
    (tmp_path / "ops.json").write_text(json.dumps(
        {"schema_version": 1, "ops": [
            {"schema_version": 1, "kind": "remove",
             "target_id": scene.graph.nodes[0].id}]}))
    (tmp_path / "config.json").write_text(json.dumps({
        "inpaint": {"iterations": 150, "guide_mode": "global",
                    "network": {"depth": 3, "channels": 16},
                    "dilation_radius": 2, "noise_seed": 5}}))
    outputs = []
    for run in ("one", "two"):
        proc = subprocess.run(
            [sys.executable, "-m", "simbil.cli", "edit",
             "--image", str(tmp_path / "scene" / "image.png"),
             "--graph", str(tmp_path / "scene" / "graph.json"),
             "--ops", str(tmp_path / "ops.json"),
             "--out", str(tmp_path / run),
             "--config", str(tmp_path / "config.json")],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append((
            (tmp_path / run / "result.png").read_bytes(),
            (tmp_path / run / "metrics.json").read_bytes()))
    assert outputs[0][0] == outputs[1][0], "result images differ"
    assert outputs[0][1] == outputs[1][1], "metrics.json differ"
    report_line("end-to-end determinism",
                "two CLI runs byte-identical (result.png, metrics.json)")


UI_FIXTURE = (Path(__file__).resolve().parents[1] / "frontend" / "tests"
              / "fixtures" / "roundtrip.json")


@pytest.mark.skipif(not UI_FIXTURE.exists(),
                    reason="frontend round-trip fixture not present")
def test_criterion_10_ui_round_trip(tmp_path):
    """Every UI gesture's op JSON is accepted by the service and the
    server-side fold matches the graph the browser shows (both sides pin the
    same fixture). The browser half runs under vitest in frontend/."""
    from fastapi.testclient import TestClient

    from simbil.imageio import encode_png
    from simbil.service import create_app

    fixture = json.loads(UI_FIXTURE.read_text())
    graph_doc = fixture["graph"]
    image = np.full((graph_doc["height"], graph_doc["width"], 3), 0.65)

    app = create_app(tmp_path / "data", start_runner=False)
    with TestClient(app) as client:
        resp = client.post(
            "/sessions",
            files={"image": ("i.png", encode_png(image), "image/png")},
            data={"graph": json.dumps(graph_doc)})
        assert resp.status_code == 200, resp.text
        session_id = resp.json()["session_id"]
        for op in fixture["ops"]:
            resp = client.post(f"/sessions/{session_id}/ops", json=op)
            assert resp.status_code == 200, (op["kind"], resp.text)
        state = client.get(f"/sessions/{session_id}").json()
    server_folded = parse_scene_graph(state["graph"])
    expected = parse_scene_graph(fixture["folded"])
    assert graphs_equal(server_folded, expected)
    report_line("ui round trip",
                f"{len(fixture['ops'])} gesture ops accepted; server fold "
                "matches the client-pinned graph")


def test_criterion_9_scene_graph_algebra():
    rng = np.random.default_rng(909)
    for i in range(200):
        graph = random_graph(rng)
        # round trip
        assert graphs_equal(
            graph, parse_scene_graph(serialize_scene_graph(graph)))
        # involution on a fresh relationship change
        edge = graph.edges[int(rng.integers(len(graph.edges)))]
        op = EditOp(kind="relationship_change", target_id=edge.subject_id,
                    edge_change=(edge, RelationshipEdge(
                        edge.subject_id, f"novel-{i}", edge.object_id)))
        from simbil.scenegraph import apply_edit
        assert graphs_equal(
            apply_edit(apply_edit(graph, op), invert_relationship_change(op)),
            graph)
        # diff reconstruction
        _, modified = random_edit_sequence(rng, graph, max_ops=3)
        assert graphs_equal(fold_edits(graph, graph_diff(graph, modified)),
                            modified)
    report_line("scene-graph algebra",
                "200 randomized pairs: round-trip, involution, diff-fold")
