"""Anchor boxes, matching, NMS, and mAP — the detection machinery.

Single-shot detection predicts, for every anchor box tiled over the
image, a class score and a 4-number offset. Training needs each anchor
labeled against the ground truth (matching); inference needs duplicate
predictions pruned (non-maximum suppression); evaluation needs the
precision/recall summary (mean average precision).
"""

import numpy as np

from spikedet.detect import (
    BBox,
    decode_box,
    encode_box,
    evaluate_map,
    filter_gt_boxes,
    generate_anchors,
    iou,
    match_anchors,
    nms,
)

# --- anchors ---------------------------------------------------------------
anchors = generate_anchors([(4, 4), (2, 2)], image_hw=(64, 64),
                           scales=(0.2, 0.4), ratios=(1.0,))
print(f"{len(anchors)} anchors over two pyramid levels "
      f"(slices {anchors.level_slices})")

# --- matching --------------------------------------------------------------
gts = [BBox(10, 12, 20, 18, class_id=0)]
assignment = match_anchors(anchors, gts)
pos = np.where(assignment.labels >= 0)[0]
print(f"positives: {pos.size} anchors matched the ground-truth box")

# regression targets decode back to the ground truth exactly
a = pos[0]
anchor = (anchors.centers_x[a], anchors.centers_y[a],
          anchors.widths[a], anchors.heights[a])
back = decode_box(assignment.reg_targets[a], anchor)
print(f"target round-trip: ({back.x:.1f}, {back.y:.1f}, {back.w:.1f}, {back.h:.1f})")
assert abs(back.x - 10) < 1e-9

# --- NMS ---------------------------------------------------------------------
dets = [BBox(0, 0, 10, 10, 0, 0.6), BBox(1, 1, 10, 10, 0, 0.9),
        BBox(50, 50, 10, 10, 0, 0.5)]
kept = nms(dets, iou_thresh=0.5)
print(f"\nNMS kept {len(kept)} of {len(dets)} boxes "
      f"(overlap IoU = {iou(dets[0], dets[1]):.2f} suppressed the weaker one)")

# --- size filter and mAP ----------------------------------------------------
raw = [BBox(0, 0, 10, 28), BBox(0, 0, 30, 30)]
print(f"size filter kept {len(filter_gt_boxes(raw, 10, 30))} of {len(raw)} "
      "(thin boxes with a short diagonal are dropped)")

gts_by_sample = {"a": [BBox(0, 0, 10, 10), BBox(20, 20, 10, 10)]}
dets_by_sample = {"a": [BBox(0, 0, 10, 10, 0, 0.9),
                        BBox(40, 0, 10, 10, 0, 0.8),
                        BBox(20, 20, 10, 10, 0, 0.7)]}
out = evaluate_map(dets_by_sample, gts_by_sample, iou_thresholds=[0.5])
print(f"mAP@0.5 of the TP/FP/TP fixture: {out['mAP@0.5']:.4f} "
      "(101-point interpolation)")
