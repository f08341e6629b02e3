"""Anchors, matching, NMS, mAP, and the detection head, vs brute-force oracles."""

import numpy as np
import pytest

from spikedet.autograd import Tensor
from spikedet.detect import (
    AnchorSet,
    BBox,
    SSDHead,
    decode_box,
    decode_boxes,
    encode_box,
    encode_boxes,
    evaluate_map,
    filter_gt_boxes,
    generate_anchors,
    iou,
    iou_matrix,
    match_anchors,
    nms,
    read_detections,
    write_detections,
)

RNG = np.random.default_rng(321)


def random_boxes(rng, count, img=100.0, classes=1):
    out = []
    for _ in range(count):
        w = rng.uniform(5, 40)
        h = rng.uniform(5, 40)
        x = rng.uniform(0, img - w)
        y = rng.uniform(0, img - h)
        out.append(BBox(x, y, w, h, int(rng.integers(0, classes)), float(rng.random())))
    return out


def brute_force_nms(dets, iou_thresh):
    """O(n^2) reference: greedy per class by (score desc, index asc)."""
    kept = []
    for class_id in sorted({d.class_id for d in dets}):
        cand = [(i, d) for i, d in enumerate(dets) if d.class_id == class_id]
        cand.sort(key=lambda t: (-t[1].score, t[0]))
        surv = []
        for i, d in cand:
            if all(iou(d, s) <= iou_thresh for _, s in surv):
                surv.append((i, d))
        kept.extend(surv)
    kept.sort(key=lambda t: (-t[1].score, t[0]))
    return [d for _, d in kept]


def iou_xyxy(a, b):
    """Corner-form IoU so the oracle shares the matcher's float arithmetic."""
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def brute_force_match(anchors, gts, pos_t, neg_t):
    """Per-anchor loop reference for the matcher's label assignment."""
    n = len(anchors)
    labels = np.full(n, -1, dtype=np.int64)
    if not gts:
        return labels
    anchor_xyxy = anchors.as_xyxy()
    gt_xyxy = [g.as_xyxy() for g in gts]
    for i in range(n):
        ious = [iou_xyxy(anchor_xyxy[i], g) for g in gt_xyxy]
        best = int(np.argmax(ious))
        if ious[best] >= pos_t:
            labels[i] = best
        elif ious[best] >= neg_t:
            labels[i] = -2
    for j, g in enumerate(gt_xyxy):
        ious = [iou_xyxy(a, g) for a in anchor_xyxy]
        labels[int(np.argmax(ious))] = j
    return labels


class TestAnchors:
    def test_count_formula_sensor_scale(self):
        # 3 levels x 6 anchors per cell: (1140 + 285 + 63) * 6 = 8928
        anchors = generate_anchors([(30, 38), (15, 19), (7, 9)], (240, 304),
                                   scales=(0.1, 0.3), ratios=(0.5, 1.0, 2.0))
        assert len(anchors) == 8928
        assert anchors.level_slices == [(0, 6840), (6840, 8550), (8550, 8928)]

    def test_ordering_level_row_anchor(self):
        anchors = generate_anchors([(2, 2)], (8, 8), scales=(0.25,), ratios=(1.0, 4.0))
        # first cell (row 0, col 0) carries both ratios, then col 1 follows
        np.testing.assert_allclose(anchors.centers_x[:2], [2.0, 2.0])
        np.testing.assert_allclose(anchors.centers_x[2:4], [6.0, 6.0])
        np.testing.assert_allclose(anchors.centers_y[:4], [2.0, 2.0, 2.0, 2.0])
        np.testing.assert_allclose(anchors.centers_y[4:6], [6.0, 6.0])
        # ratio 4 doubles width and halves height relative to ratio 1
        np.testing.assert_allclose(anchors.widths[:2], [2.0, 4.0])
        np.testing.assert_allclose(anchors.heights[:2], [2.0, 1.0])

    def test_centers_inside_image(self):
        anchors = generate_anchors([(5, 7), (2, 3)], (40, 56),
                                   scales=(0.2, 0.4), ratios=(1.0,))
        assert np.all(anchors.centers_x > 0) and np.all(anchors.centers_x < 56)
        assert np.all(anchors.centers_y > 0) and np.all(anchors.centers_y < 40)


class TestBoxCodec:
    def test_round_trip_single(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            anchor = (rng.uniform(10, 90), rng.uniform(10, 90),
                      rng.uniform(5, 40), rng.uniform(5, 40))
            gt = random_boxes(rng, 1)[0]
            back = decode_box(encode_box(gt, anchor), anchor)
            assert abs(back.x - gt.x) <= 1e-9
            assert abs(back.y - gt.y) <= 1e-9
            assert abs(back.w - gt.w) <= 1e-9
            assert abs(back.h - gt.h) <= 1e-9

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(2)
        gts = random_boxes(rng, 50)
        anchors = np.stack([rng.uniform(10, 90, 50), rng.uniform(10, 90, 50),
                            rng.uniform(5, 40, 50), rng.uniform(5, 40, 50)], axis=1)
        gts_xywh = np.array([[g.x, g.y, g.w, g.h] for g in gts])
        enc = encode_boxes(gts_xywh, anchors)
        for i, g in enumerate(gts):
            np.testing.assert_allclose(enc[i], encode_box(g, anchors[i]), atol=1e-12)
        dec = decode_boxes(enc, anchors)
        np.testing.assert_allclose(dec, gts_xywh, atol=1e-9)

    def test_zero_offsets_reproduce_anchor(self):
        box = decode_box(np.zeros(4), (50.0, 50.0, 20.0, 10.0))
        assert (box.x, box.y, box.w, box.h) == (40.0, 45.0, 20.0, 10.0)


class TestIoU:
    def test_half_overlapping_unit_squares(self):
        a = BBox(0, 0, 1, 1)
        b = BBox(0.5, 0, 1, 1)
        assert iou(a, b) == pytest.approx(1.0 / 3.0)

    def test_identity_and_disjoint(self):
        a = BBox(3, 4, 5, 6)
        assert iou(a, a) == 1.0
        assert iou(a, BBox(100, 100, 2, 2)) == 0.0

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(3)
        A = random_boxes(rng, 20)
        B = random_boxes(rng, 15)
        m = iou_matrix(np.array([b.as_xyxy() for b in A]),
                       np.array([b.as_xyxy() for b in B]))
        for i, a in enumerate(A):
            for j, b in enumerate(B):
                assert m[i, j] == pytest.approx(iou(a, b), abs=1e-12)


class TestMatcher:
    def test_matches_brute_force_on_random_scenes(self):
        rng = np.random.default_rng(4)
        anchors = generate_anchors([(6, 6), (3, 3)], (96, 96),
                                   scales=(0.15, 0.35), ratios=(0.5, 1.0, 2.0))
        for scene in range(250):
            gts = random_boxes(rng, int(rng.integers(0, 6)), img=96.0, classes=2)
            got = match_anchors(anchors, gts)
            expected = brute_force_match(anchors, gts, 0.5, 0.4)
            np.testing.assert_array_equal(got.labels, expected)

    def test_every_gt_gets_an_anchor(self):
        # well-separated GTs so no two share a best anchor
        rng = np.random.default_rng(5)
        anchors = generate_anchors([(4, 4)], (64, 64), scales=(0.2,), ratios=(1.0,))
        for _ in range(50):
            gts = []
            for qx, qy in [(0, 0), (32, 0), (0, 32)]:
                w, h = rng.uniform(6, 20, 2)
                gts.append(BBox(qx + rng.uniform(0, 30 - w), qy + rng.uniform(0, 30 - h),
                                w, h))
            got = match_anchors(anchors, gts)
            assert set(range(len(gts))) <= set(got.labels[got.labels >= 0])

    def test_reg_targets_decode_back_to_gt(self):
        anchors = generate_anchors([(4, 4)], (64, 64), scales=(0.3,), ratios=(1.0,))
        gts = [BBox(10, 12, 20, 18, class_id=1)]
        got = match_anchors(anchors, gts)
        pos = np.where(got.labels >= 0)[0]
        assert pos.size >= 1
        for a in pos:
            anchor = (anchors.centers_x[a], anchors.centers_y[a],
                      anchors.widths[a], anchors.heights[a])
            back = decode_box(got.reg_targets[a], anchor)
            assert abs(back.x - 10) < 1e-9 and abs(back.w - 20) < 1e-9
        assert np.all(got.gt_classes[pos] == 1)

    def test_no_gt_all_negative(self):
        anchors = generate_anchors([(2, 2)], (32, 32), scales=(0.3,), ratios=(1.0,))
        got = match_anchors(anchors, [])
        assert np.all(got.labels == -1)

    def test_threshold_ordering_enforced(self):
        anchors = generate_anchors([(2, 2)], (32, 32), scales=(0.3,), ratios=(1.0,))
        with pytest.raises(ValueError):
            match_anchors(anchors, [], pos_thresh=0.3, neg_thresh=0.5)


class TestNMS:
    def test_matches_brute_force_on_random_scenes(self):
        rng = np.random.default_rng(6)
        for scene in range(250):
            dets = random_boxes(rng, int(rng.integers(0, 30)), classes=3)
            got = nms(dets, iou_thresh=0.5)
            expected = brute_force_nms(dets, 0.5)
            assert got == expected

    def test_suppresses_duplicates_keeps_highest(self):
        dets = [BBox(0, 0, 10, 10, 0, 0.6), BBox(1, 1, 10, 10, 0, 0.9),
                BBox(50, 50, 10, 10, 0, 0.5)]
        out = nms(dets, iou_thresh=0.5)
        assert len(out) == 2
        assert out[0].score == 0.9

    def test_classes_do_not_suppress_each_other(self):
        dets = [BBox(0, 0, 10, 10, 0, 0.9), BBox(0, 0, 10, 10, 1, 0.8)]
        assert len(nms(dets, iou_thresh=0.5)) == 2

    def test_deterministic_tie_break(self):
        dets = [BBox(0, 0, 10, 10, 0, 0.5), BBox(0.5, 0, 10, 10, 0, 0.5)]
        out = nms(dets, iou_thresh=0.3)
        assert out == [dets[0]]

    def test_score_thresh_and_max_out(self):
        dets = [BBox(i * 20, 0, 10, 10, 0, 0.1 * i) for i in range(1, 6)]
        out = nms(dets, iou_thresh=0.5, score_thresh=0.25, max_out=2)
        assert len(out) == 2
        assert out[0].score == pytest.approx(0.5)


class TestFilter:
    def test_spec_examples(self):
        # 10x28: sides pass, diagonal sqrt(884) ~ 29.7 < 30 -> removed
        # 30x30: kept; 9x100: side below 10 -> removed
        boxes = [BBox(0, 0, 10, 28), BBox(0, 0, 30, 30), BBox(0, 0, 9, 100)]
        kept = filter_gt_boxes(boxes, min_side=10, min_diag=30)
        assert kept == [boxes[1]]

    def test_boundary_inclusive(self):
        kept = filter_gt_boxes([BBox(0, 0, 18, 24)], min_side=10, min_diag=30)
        assert len(kept) == 1  # diag exactly 30


class TestMAP:
    def test_perfect_detections_score_one(self):
        rng = np.random.default_rng(7)
        gts = {f"s{i}": random_boxes(rng, 3, classes=2) for i in range(5)}
        dets = {
            sid: [BBox(g.x, g.y, g.w, g.h, g.class_id, 0.9) for g in boxes]
            for sid, boxes in gts.items()
        }
        out = evaluate_map(dets, gts)
        assert out["mAP@0.5"] == pytest.approx(1.0)
        assert out["mAP@0.5:0.95"] == pytest.approx(1.0)

    def test_hand_pr_fixture(self):
        # two GTs; dets sorted by score: TP, FP, TP
        # recall 0.5 at precision 1, recall 1.0 at precision 2/3
        # 101-point AP = (51 * 1 + 50 * 2/3) / 101
        gts = {"a": [BBox(0, 0, 10, 10), BBox(20, 20, 10, 10)]}
        dets = {"a": [BBox(0, 0, 10, 10, 0, 0.9),
                      BBox(40, 0, 10, 10, 0, 0.8),
                      BBox(20, 20, 10, 10, 0, 0.7)]}
        out = evaluate_map(dets, gts, iou_thresholds=[0.5])
        expected = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101
        assert out["mAP@0.5"] == pytest.approx(expected, abs=1e-6)

    def test_monotone_degradation(self):
        gts = {"a": [BBox(10, 10, 20, 20)]}
        perfect = {"a": [BBox(10, 10, 20, 20, 0, 0.9)]}
        shifted = {"a": [BBox(13, 13, 20, 20, 0, 0.9)]}
        missing = {"a": []}
        m0 = evaluate_map(perfect, gts)["mAP@0.5:0.95"]
        m1 = evaluate_map(shifted, gts)["mAP@0.5:0.95"]
        m2 = evaluate_map(missing, gts)["mAP@0.5:0.95"]
        assert m0 > m1 > m2 == 0.0

    def test_duplicate_detections_penalized(self):
        gts = {"a": [BBox(10, 10, 20, 20)]}
        once = {"a": [BBox(10, 10, 20, 20, 0, 0.9)]}
        thrice = {"a": [BBox(10, 10, 20, 20, 0, 0.9),
                        BBox(10, 10, 20, 20, 0, 0.8),
                        BBox(10, 10, 20, 20, 0, 0.7)]}
        assert (evaluate_map(once, gts)["mAP@0.5"]
                > evaluate_map(thrice, gts)["mAP@0.5"] * 0.999)

    def test_detection_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        dets = {"s0": random_boxes(rng, 4, classes=2), "s1": random_boxes(rng, 2)}
        path = tmp_path / "dets.txt"
        write_detections(dets, path)
        back = read_detections(path)
        assert set(back) == {"s0", "s1"}
        for sid in dets:
            for a, b in zip(dets[sid], back[sid]):
                assert a.class_id == b.class_id
                assert a.score == pytest.approx(b.score, abs=1e-6)
                assert a.x == pytest.approx(b.x, abs=1e-3)


class TestHead:
    def test_output_shapes_and_anchor_alignment(self):
        head = SSDHead(RNG, [8, 6], classes=3, anchors_per_cell=2)
        pyramid = [Tensor(RNG.random((2, 8, 4, 6))), Tensor(RNG.random((2, 6, 2, 3)))]
        cls, box = head.forward(pyramid)
        total = 4 * 6 * 2 + 2 * 3 * 2
        assert cls.shape == (2, total, 3)
        assert box.shape == (2, total, 4)

    def test_classification_bias_prior(self):
        head = SSDHead(RNG, [8], classes=2, anchors_per_cell=3, prior_pi=0.01)
        bias = head._children["cls0"].bias.data
        prob = 1.0 / (1.0 + np.exp(-bias))
        np.testing.assert_allclose(prob, 0.01, rtol=1e-9)

    def test_gradients_flow_to_head_params(self):
        import spikedet.autograd as ag

        head = SSDHead(RNG, [5], classes=2, anchors_per_cell=2)
        for p in head.parameters():
            p.requires_grad = True
        cls, box = head.forward([Tensor(RNG.random((1, 5, 3, 3)))])
        loss = ag.elementwise_add(ag.tsum(ag.power(cls, 2.0)), ag.tsum(ag.power(box, 2.0)))
        loss.backward()
        assert all(p.grad is not None for p in head.parameters())
