"""SSD-style detection machinery on rate-decoded feature maps.

Anchors are laid out level-major, row-major, anchor-minor so that head
outputs flattened as (H, W, A) line up with generate_anchors ordering.
The head itself is plain convolutions with no activation; it consumes
real-valued decoded maps, so its compute is accounted as MAC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .snn import Module, Conv2d, he_init

__all__ = [
    "BBox",
    "AnchorSet",
    "MatchAssignment",
    "generate_anchors",
    "encode_box",
    "decode_box",
    "encode_boxes",
    "decode_boxes",
    "iou",
    "iou_matrix",
    "match_anchors",
    "nms",
    "filter_gt_boxes",
    "SSDHead",
    "evaluate_map",
    "write_detections",
    "read_detections",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with top-left corner, size, class id and score."""

    x: float
    y: float
    w: float
    h: float
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box must have positive size")

    def as_xyxy(self):
        return (self.x, self.y, self.x + self.w, self.y + self.h)


@dataclass(frozen=True)
class AnchorSet:
    """Dense per-cell anchors in (cx, cy, w, h) pixel coordinates."""

    centers_x: np.ndarray
    centers_y: np.ndarray
    widths: np.ndarray
    heights: np.ndarray
    level_slices: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self):
        return self.centers_x.size

    def as_xyxy(self) -> np.ndarray:
        return np.stack(
            [
                self.centers_x - self.widths / 2,
                self.centers_y - self.heights / 2,
                self.centers_x + self.widths / 2,
                self.centers_y + self.heights / 2,
            ],
            axis=1,
        )


def generate_anchors(level_shapes, image_hw, scales, ratios) -> AnchorSet:
    """Per-cell anchors for each pyramid level.

    ``scales`` are anchor sizes as fractions of the shorter image side;
    ``ratios`` are width/height aspect ratios. Every (scale, ratio) pair
    is placed at every cell center: count = sum_level H*W*len(scales)*len(ratios).
    """
    if not level_shapes:
        raise ValueError("need at least one pyramid level")
    img_h, img_w = image_hw
    base = min(img_h, img_w)
    per_cell_w = np.array([base * s * np.sqrt(r) for s in scales for r in ratios])
    per_cell_h = np.array([base * s / np.sqrt(r) for s in scales for r in ratios])
    a = per_cell_w.size
    out_cx, out_cy, out_w, out_h = [], [], [], []
    slices = []
    offset = 0
    for lh, lw in level_shapes:
        stride_y = img_h / lh
        stride_x = img_w / lw
        gy, gx = np.meshgrid(np.arange(lh), np.arange(lw), indexing="ij")
        cx = (gx.ravel() + 0.5) * stride_x  # row-major cell order
        cy = (gy.ravel() + 0.5) * stride_y
        out_cx.append(np.repeat(cx, a))  # anchors minor within each cell
        out_cy.append(np.repeat(cy, a))
        out_w.append(np.tile(per_cell_w, cx.size))
        out_h.append(np.tile(per_cell_h, cy.size))
        slices.append((offset, offset + cx.size * a))
        offset += cx.size * a
    return AnchorSet(
        np.concatenate(out_cx),
        np.concatenate(out_cy),
        np.concatenate(out_w),
        np.concatenate(out_h),
        slices,
    )


def encode_box(gt: BBox, anchor) -> np.ndarray:
    """SSD offsets: center deltas over anchor size, log size ratios."""
    acx, acy, aw, ah = anchor
    if gt.w <= 0 or gt.h <= 0:
        raise ValueError("ground-truth box must have positive size")
    gcx, gcy = gt.x + gt.w / 2, gt.y + gt.h / 2
    return np.array(
        [(gcx - acx) / aw, (gcy - acy) / ah, np.log(gt.w / aw), np.log(gt.h / ah)]
    )


def decode_box(offsets, anchor, class_id: int = 0, score: float = 1.0) -> BBox:
    acx, acy, aw, ah = anchor
    dx, dy, dw, dh = offsets
    w = aw * np.exp(dw)
    h = ah * np.exp(dh)
    cx = acx + dx * aw
    cy = acy + dy * ah
    return BBox(cx - w / 2, cy - h / 2, w, h, class_id, score)


def encode_boxes(gts_xywh: np.ndarray, anchors_cxcywh: np.ndarray) -> np.ndarray:
    """Vectorized encode_box on matched (gt, anchor) rows."""
    gcx = gts_xywh[:, 0] + gts_xywh[:, 2] / 2
    gcy = gts_xywh[:, 1] + gts_xywh[:, 3] / 2
    acx, acy, aw, ah = anchors_cxcywh.T
    return np.stack(
        [
            (gcx - acx) / aw,
            (gcy - acy) / ah,
            np.log(gts_xywh[:, 2] / aw),
            np.log(gts_xywh[:, 3] / ah),
        ],
        axis=1,
    )


def decode_boxes(offsets: np.ndarray, anchors_cxcywh: np.ndarray) -> np.ndarray:
    """Vectorized decode to [x, y, w, h] rows."""
    acx, acy, aw, ah = anchors_cxcywh.T
    w = aw * np.exp(offsets[:, 2])
    h = ah * np.exp(offsets[:, 3])
    cx = acx + offsets[:, 0] * aw
    cy = acy + offsets[:, 1] * ah
    return np.stack([cx - w / 2, cy - h / 2, w, h], axis=1)


def iou(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.as_xyxy()
    bx1, by1, bx2, by2 = b.as_xyxy()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(a_xyxy: np.ndarray, b_xyxy: np.ndarray) -> np.ndarray:
    """[len(a), len(b)] pairwise IoU of xyxy arrays."""
    if a_xyxy.size == 0 or b_xyxy.size == 0:
        return np.zeros((a_xyxy.shape[0], b_xyxy.shape[0]))
    ix1 = np.maximum(a_xyxy[:, None, 0], b_xyxy[None, :, 0])
    iy1 = np.maximum(a_xyxy[:, None, 1], b_xyxy[None, :, 1])
    ix2 = np.minimum(a_xyxy[:, None, 2], b_xyxy[None, :, 2])
    iy2 = np.minimum(a_xyxy[:, None, 3], b_xyxy[None, :, 3])
    inter = np.clip(ix2 - ix1, 0, None) * np.clip(iy2 - iy1, 0, None)
    area_a = (a_xyxy[:, 2] - a_xyxy[:, 0]) * (a_xyxy[:, 3] - a_xyxy[:, 1])
    area_b = (b_xyxy[:, 2] - b_xyxy[:, 0]) * (b_xyxy[:, 3] - b_xyxy[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


@dataclass
class MatchAssignment:
    """Per-anchor matching: labels >= 0 index the matched GT, -1 negative,
    -2 ignored. reg_targets hold encoded offsets for positive anchors."""

    labels: np.ndarray  # int array [A]
    gt_classes: np.ndarray  # int array [A], valid where labels >= 0
    reg_targets: np.ndarray  # float array [A, 4], valid where labels >= 0


def match_anchors(anchors: AnchorSet, gts: list[BBox], pos_thresh: float = 0.5,
                  neg_thresh: float = 0.4) -> MatchAssignment:
    """Threshold matching with a forced best anchor per ground truth.

    Anchors with IoU >= pos_thresh are positive, < neg_thresh negative,
    in between ignored. Each GT's best anchor becomes positive regardless
    of IoU; ties break toward the lowest anchor index.
    """
    if pos_thresh < neg_thresh:
        raise ValueError("pos_thresh must be >= neg_thresh")
    n = len(anchors)
    labels = np.full(n, -1, dtype=np.int64)
    gt_classes = np.zeros(n, dtype=np.int64)
    reg_targets = np.zeros((n, 4))
    if not gts:
        return MatchAssignment(labels, gt_classes, reg_targets)
    gt_xyxy = np.array([g.as_xyxy() for g in gts])
    m = iou_matrix(anchors.as_xyxy(), gt_xyxy)  # [A, G]
    best_gt = m.argmax(axis=1)
    best_iou = m[np.arange(n), best_gt]
    labels[best_iou >= pos_thresh] = best_gt[best_iou >= pos_thresh]
    ignored = (best_iou >= neg_thresh) & (best_iou < pos_thresh)
    labels[ignored] = -2
    # force each GT's best anchor positive (argmax takes the lowest index)
    best_anchor = m.argmax(axis=0)
    labels[best_anchor] = np.arange(len(gts))
    pos = labels >= 0
    if pos.any():
        matched = labels[pos]
        gt_classes[pos] = np.array([gts[g].class_id for g in matched])
        gts_xywh = np.array([[gts[g].x, gts[g].y, gts[g].w, gts[g].h] for g in matched])
        anchors_cxcywh = np.stack(
            [anchors.centers_x[pos], anchors.centers_y[pos],
             anchors.widths[pos], anchors.heights[pos]], axis=1,
        )
        reg_targets[pos] = encode_boxes(gts_xywh, anchors_cxcywh)
    return MatchAssignment(labels, gt_classes, reg_targets)


def nms(detections: list[BBox], iou_thresh: float = 0.5, score_thresh: float = 0.0,
        max_out: int | None = None) -> list[BBox]:
    """Greedy per-class suppression by descending score.

    Deterministic: ties in score break toward the earlier box in the input.
    """
    kept: list[tuple[int, BBox]] = []
    by_class: dict[int, list[tuple[int, BBox]]] = {}
    for idx, d in enumerate(detections):
        if d.score >= score_thresh:
            by_class.setdefault(d.class_id, []).append((idx, d))
    for class_id in sorted(by_class):
        cand = sorted(by_class[class_id], key=lambda t: (-t[1].score, t[0]))
        survivors: list[tuple[int, BBox]] = []
        for idx, d in cand:
            if all(iou(d, s) <= iou_thresh for _, s in survivors):
                survivors.append((idx, d))
        kept.extend(survivors)
    kept.sort(key=lambda t: (-t[1].score, t[0]))
    if max_out is not None:
        kept = kept[:max_out]
    return [d for _, d in kept]


def filter_gt_boxes(gts: list[BBox], min_side: float = 10.0, min_diag: float = 30.0) -> list[BBox]:
    """Drop boxes with a side below min_side or a diagonal below min_diag."""
    return [
        g for g in gts
        if g.w >= min_side and g.h >= min_side and np.hypot(g.w, g.h) >= min_diag
    ]


class SSDHead(Module):
    """Per-level 3x3 conv pairs emitting class logits and box offsets.

    No activation functions; the final classification conv bias starts at
    -ln((1 - pi)/pi) with pi = 0.01 so early training is not swamped by
    background anchors.
    """

    def __init__(self, rng, level_channels: list[int], classes: int, anchors_per_cell: int,
                 prior_pi: float = 0.01):
        super().__init__()
        self.classes = classes
        self.anchors_per_cell = anchors_per_cell
        self.n_levels = len(level_channels)
        bias0 = -np.log((1.0 - prior_pi) / prior_pi)
        for i, ch in enumerate(level_channels):
            cls = Conv2d(rng, ch, anchors_per_cell * classes, 3, 1, 1, bias=True,
                         spiking_input=False)
            cls.bias.data[:] = bias0
            cls.per_timestep = False
            self.add_child(f"cls{i}", cls)
            box = Conv2d(rng, ch, anchors_per_cell * 4, 3, 1, 1, bias=True, spiking_input=False)
            box.per_timestep = False
            self.add_child(f"box{i}", box)

    def forward(self, pyramid: list[Tensor]) -> tuple[Tensor, Tensor]:
        """Decoded pyramid maps -> ([N, A_total, classes], [N, A_total, 4])."""
        if len(pyramid) != self.n_levels:
            raise ValueError("pyramid level count does not match head")
        cls_parts, box_parts = [], []
        for i, feat in enumerate(pyramid):
            n = feat.shape[0]
            c = self._children[f"cls{i}"].forward(feat)
            b = self._children[f"box{i}"].forward(feat)
            cls_parts.append(_flatten_anchor_major(c, self.anchors_per_cell, self.classes))
            box_parts.append(_flatten_anchor_major(b, self.anchors_per_cell, 4))
        return ag.concat(cls_parts, axis=1), ag.concat(box_parts, axis=1)


def _flatten_anchor_major(x: Tensor, anchors: int, fields: int) -> Tensor:
    """[N, A*F, H, W] -> [N, H*W*A, F] matching anchor ordering."""
    n, c, h, w = x.shape
    assert c == anchors * fields
    data = x.data.reshape(n, anchors, fields, h, w).transpose(0, 3, 4, 1, 2).reshape(
        n, h * w * anchors, fields
    )
    out = Tensor(data)
    if x.requires_grad:
        def backward(g):
            gx = g.reshape(n, h, w, anchors, fields).transpose(0, 3, 4, 1, 2).reshape(n, c, h, w)
            ag._accum(x, gx)

        out.requires_grad = True
        out._parents = (x,)
        out._backward = backward
    return out


# --- evaluation ---------------------------------------------------------------


def _ap_from_matches(scores, matched, n_gt, n_points: int = 101) -> float:
    """Interpolated average precision from per-detection match flags."""
    if n_gt == 0:
        return float("nan")
    order = np.argsort(-np.asarray(scores), kind="stable")
    matched = np.asarray(matched, dtype=np.float64)[order]
    tp = np.cumsum(matched)
    fp = np.cumsum(1.0 - matched)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1e-12)
    # precision envelope, sampled at evenly spaced recall points
    rec_points = np.linspace(0.0, 1.0, n_points)
    prec_at = np.zeros(n_points)
    for i, r in enumerate(rec_points):
        mask = recall >= r
        prec_at[i] = precision[mask].max() if mask.any() else 0.0
    return float(prec_at.mean())


def _greedy_match_image(dets: list[BBox], gts: list[BBox], thresh: float):
    """Score-descending greedy matching of detections to unmatched GTs."""
    taken = [False] * len(gts)
    flags = []
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    flags = [0.0] * len(dets)
    for i in order:
        best_j, best_iou = -1, thresh
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = iou(dets[i], g)
            if v >= best_iou:
                best_iou, best_j = v, j
        if best_j >= 0:
            taken[best_j] = True
            flags[i] = 1.0
    return flags


def evaluate_map(detections_per_sample: dict, gts_per_sample: dict,
                 iou_thresholds=None) -> dict:
    """COCO-style mAP with 101-point interpolation.

    Averages AP over classes present in the ground truth and over the IoU
    thresholds 0.5:0.05:0.95 (mAP@0.5:0.95) plus the single 0.5 threshold.
    """
    if iou_thresholds is None:
        iou_thresholds = [0.5 + 0.05 * i for i in range(10)]
    sample_ids = sorted(set(gts_per_sample) | set(detections_per_sample))
    classes = sorted(
        {g.class_id for gts in gts_per_sample.values() for g in gts}
    )
    per_class_ap: dict[int, float] = {}
    aps_by_thresh: dict[float, list[float]] = {t: [] for t in iou_thresholds}
    for class_id in classes:
        for t in iou_thresholds:
            scores, matches = [], []
            n_gt = 0
            for sid in sample_ids:
                gts = [g for g in gts_per_sample.get(sid, []) if g.class_id == class_id]
                dets = [d for d in detections_per_sample.get(sid, []) if d.class_id == class_id]
                n_gt += len(gts)
                flags = _greedy_match_image(dets, gts, t)
                scores.extend(d.score for d in dets)
                matches.extend(flags)
            if n_gt == 0:
                continue
            ap = _ap_from_matches(scores, matches, n_gt)
            aps_by_thresh[t].append(ap)
            if t == iou_thresholds[0]:
                per_class_ap[class_id] = ap
    all_aps = [ap for t in iou_thresholds for ap in aps_by_thresh[t]]
    map_50 = float(np.mean(aps_by_thresh[iou_thresholds[0]])) if aps_by_thresh[iou_thresholds[0]] else 0.0
    map_full = float(np.mean(all_aps)) if all_aps else 0.0
    return {
        "mAP@0.5": map_50,
        "mAP@0.5:0.95": map_full,
        "per_class_AP": {str(k): v for k, v in per_class_ap.items()},
    }


def write_detections(detections_per_sample: dict, path) -> None:
    """Line format: sample_id class score x y w h."""
    with open(path, "w") as fh:
        for sid in sorted(detections_per_sample):
            for d in detections_per_sample[sid]:
                fh.write(
                    f"{sid} {d.class_id} {d.score:.6f} "
                    f"{d.x:.3f} {d.y:.3f} {d.w:.3f} {d.h:.3f}\n"
                )


def read_detections(path) -> dict:
    out: dict[str, list[BBox]] = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            sid, class_id, score = parts[0], int(parts[1]), float(parts[2])
            x, y, w, h = map(float, parts[3:7])
            out.setdefault(sid, []).append(BBox(x, y, w, h, class_id, score))
    return out
