import numpy as np
import pytest

from voxeval import (
    BoundingBox3D,
    Detection,
    PostprocessConfig,
    apply_postprocess,
    nms,
)
from oracles import nms_literal


def det(mn, mx, score, image_id="im", class_id=1):
    return Detection(image_id, class_id, BoundingBox3D(tuple(map(float, mn)),
                                                       tuple(map(float, mx))), score)


class TestNMS:
    def test_suppresses_heavy_overlap(self):
        a = det((0, 0, 0), (4, 4, 4), 0.9)
        b = det((0.5, 0, 0), (4.5, 4, 4), 0.8)
        kept = nms([a, b], 0.5)
        assert kept == [a]

    def test_keeps_disjoint(self):
        a = det((0, 0, 0), (2, 2, 2), 0.9)
        b = det((10, 10, 10), (12, 12, 12), 0.8)
        assert len(nms([a, b], 0.1)) == 2

    def test_boundary_iou_equal_threshold_suppressed(self):
        # keep rule is IoU < threshold, so exact equality suppresses
        a = det((0, 0, 0), (2, 2, 2), 0.9)
        b = det((1, 1, 1), (3, 3, 3), 0.8)   # IoU exactly 1/15
        assert len(nms([a, b], 1.0 / 15.0)) == 1
        assert len(nms([a, b], 1.0 / 15.0 + 1e-9)) == 2

    def test_survivor_shields_later_boxes(self):
        # c overlaps only b; b dies to a, so c survives via the kept-set rule
        a = det((0, 0, 0), (4, 4, 4), 0.9)
        b = det((2, 0, 0), (6, 4, 4), 0.8)
        c = det((4.5, 0, 0), (7.5, 4, 4), 0.7)
        kept = nms([a, b, c], 0.2)
        assert kept == [a, c]

    def test_tied_scores_stable_by_input_order(self):
        a = det((0, 0, 0), (4, 4, 4), 0.8)
        b = det((0.1, 0, 0), (4.1, 4, 4), 0.8)
        assert nms([a, b], 0.5) == [a]
        assert nms([b, a], 0.5) == [b]

    def test_matches_literal_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(1, 10))
            dets, boxes, scores = [], [], []
            for _ in range(n):
                lo = rng.uniform(0, 8, size=3)
                hi = lo + rng.uniform(1, 6, size=3)
                s = round(float(rng.random()), 1)
                dets.append(det(lo, hi, s))
                boxes.append((*lo, *hi))
                scores.append(s)
            thresh = float(rng.uniform(0.05, 0.9))
            kept = nms(dets, thresh)
            expected = [dets[i] for i in sorted(nms_literal(boxes, scores, thresh),
                                                key=lambda i: -dets[i].score)]
            assert {id(d) for d in kept} == {id(d) for d in expected}

    def test_mixed_images_rejected(self):
        a = det((0, 0, 0), (1, 1, 1), 0.9, image_id="x")
        b = det((0, 0, 0), (1, 1, 1), 0.8, image_id="y")
        with pytest.raises(ValueError):
            nms([a, b], 0.5)

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            nms([], 0.0)


class TestApplyPostprocess:
    def test_score_filter_keeps_boundary(self):
        lo = det((0, 0, 0), (1, 1, 1), 0.3)
        hi = det((5, 5, 5), (6, 6, 6), 0.7)
        out = apply_postprocess([lo, hi], PostprocessConfig(min_score=0.3))
        assert len(out) == 2
        out = apply_postprocess([lo, hi], PostprocessConfig(min_score=0.31))
        assert out == [hi]

    def test_nms_is_per_class(self):
        a = det((0, 0, 0), (2, 2, 2), 0.9, class_id=1)
        b = det((0, 0, 0), (2, 2, 2), 0.8, class_id=2)
        out = apply_postprocess([a, b], PostprocessConfig(nms_iou=0.1))
        assert len(out) == 2

    def test_nms_is_per_image(self):
        a = det((0, 0, 0), (2, 2, 2), 0.9, image_id="x")
        b = det((0, 0, 0), (2, 2, 2), 0.8, image_id="y")
        out = apply_postprocess([a, b], PostprocessConfig(nms_iou=0.1))
        assert len(out) == 2

    def test_max_detections_keeps_top_scores_across_classes(self):
        dets = [det((10 * k, 0, 0), (10 * k + 1, 1, 1), 0.1 * k, class_id=1 + k % 2)
                for k in range(1, 6)]
        cfg = PostprocessConfig(max_detections_per_image=2)
        out = apply_postprocess(dets, cfg)
        assert sorted(d.score for d in out) == pytest.approx([0.4, 0.5])

    def test_canonical_output_order(self):
        d1 = det((0, 0, 0), (1, 1, 1), 0.5, image_id="b", class_id=1)
        d2 = det((5, 0, 0), (6, 1, 1), 0.9, image_id="a", class_id=2)
        d3 = det((9, 0, 0), (10, 1, 1), 0.7, image_id="a", class_id=1)
        d4 = det((13, 0, 0), (14, 1, 1), 0.9, image_id="a", class_id=1)
        out = apply_postprocess([d1, d2, d3, d4], PostprocessConfig())
        assert out == [d4, d3, d2, d1]

    def test_empty_input(self):
        assert apply_postprocess([], PostprocessConfig()) == []

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            PostprocessConfig(min_score=1.5)
        with pytest.raises(ValueError):
            PostprocessConfig(nms_iou=0.0)
        with pytest.raises(ValueError):
            PostprocessConfig(max_detections_per_image=0)
