"""Assembled detection model: spiking backbone, optional fusion, SSD head.

The backbone and fusion run per time step; every emitted pyramid level is
rate-decoded across the T steps and only then fed to the non-spiking head,
so gradients reach the spiking layers through the decode and the surrogate.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .decode import decode_train
from .detect import AnchorSet, BBox, SSDHead, decode_boxes, generate_anchors, nms
from .snn import FusionSpec, Module, SpikingDetectorBackbone, SpikingFusion

__all__ = ["SpikingDetector", "build_detector"]

DEFAULT_ANCHOR_SCALES = (0.12, 0.25, 0.45)
DEFAULT_ANCHOR_RATIOS = (0.7, 1.0, 1.4)


class SpikingDetector(Module):
    """End-to-end detector; config keys:

    backbone: SpikingDetectorBackbone config
    input_hw: sensor size after encoding
    classes: number of object classes
    fusion: FusionSpec fields or None for the tap-direct baseline
    decode: "rate" (default) or "count"
    anchor_scales / anchor_ratios: anchor geometry
    """

    def __init__(self, config: dict, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.input_hw = tuple(config["input_hw"])
        self.classes = config["classes"]
        self.decode_strategy = config.get("decode", "rate")
        self.backbone = self.add_child(
            "backbone", SpikingDetectorBackbone(config["backbone"], rng)
        )
        tap_shapes = self.backbone.tap_shapes(self.input_hw)
        fusion_cfg = config.get("fusion")
        if fusion_cfg:
            self.fusion_spec = FusionSpec(**fusion_cfg)
            used = self.fusion_spec.fuse_layers
            self.fusion = self.add_child(
                "fusion",
                SpikingFusion(
                    rng,
                    self.fusion_spec,
                    [tap_shapes[i][0] for i in used],
                    [tap_shapes[i][1:] for i in used],
                ),
            )
            level_shapes, level_channels = self._fusion_level_shapes(tap_shapes)
        else:
            self.fusion_spec = None
            self.fusion = None
            level_shapes = [s[1:] for s in tap_shapes]
            level_channels = [s[0] for s in tap_shapes]
        scales = tuple(config.get("anchor_scales", DEFAULT_ANCHOR_SCALES))
        ratios = tuple(config.get("anchor_ratios", DEFAULT_ANCHOR_RATIOS))
        self.anchors_per_cell = len(scales) * len(ratios)
        self.anchors: AnchorSet = generate_anchors(level_shapes, self.input_hw, scales, ratios)
        self.level_shapes = level_shapes
        self.head = self.add_child(
            "head", SSDHead(rng, level_channels, self.classes, self.anchors_per_cell)
        )

    def _fusion_level_shapes(self, tap_shapes):
        """Dry-run the fusion once to learn emitted level geometry."""
        self.fusion.reset_state()
        was_training = self.training
        self.eval()
        taps = [
            Tensor(np.zeros((1, tap_shapes[i][0], *tap_shapes[i][1:])))
            for i in self.fusion_spec.fuse_layers
        ]
        levels = self.fusion.step(taps)
        shapes = [lv.shape[2:] for lv in levels]
        channels = [lv.shape[1] for lv in levels]
        self.fusion.reset_state()
        if was_training:
            self.train()
        return shapes, channels

    def forward(self, batch: np.ndarray) -> tuple[Tensor, Tensor]:
        """Voxel batch [N, T, C, H, W] -> (class logits [N, A, classes], offsets [N, A, 4])."""
        self.reset_state()
        T = batch.shape[1]
        n_levels = len(self.level_shapes)
        level_steps: list[list[Tensor]] = [[] for _ in range(n_levels)]
        for t in range(T):
            taps = self.backbone.step(Tensor(batch[:, t]))
            if self.fusion is not None:
                levels = self.fusion.step([taps[i] for i in self.fusion_spec.fuse_layers])
            else:
                levels = taps
            for i, lv in enumerate(levels):
                level_steps[i].append(lv)
        decoded = [decode_train(steps, self.decode_strategy) for steps in level_steps]
        return self.head.forward(decoded)

    def detect(self, batch: np.ndarray, score_thresh: float = 0.3,
               iou_thresh: float = 0.5, max_out: int = 50) -> list[list[BBox]]:
        """Full inference: forward, sigmoid scores, box decode, per-class NMS."""
        cls_preds, box_preds = self.forward(batch)
        probs = 1.0 / (1.0 + np.exp(-cls_preds.data))
        anchors_cxcywh = np.stack(
            [self.anchors.centers_x, self.anchors.centers_y,
             self.anchors.widths, self.anchors.heights], axis=1,
        )
        results = []
        img_h, img_w = self.input_hw
        for n in range(batch.shape[0]):
            boxes_xywh = decode_boxes(box_preds.data[n], anchors_cxcywh)
            dets = []
            for a in range(len(self.anchors)):
                for c in range(self.classes):
                    score = probs[n, a, c]
                    if score < score_thresh:
                        continue
                    x, y, w, h = boxes_xywh[a]
                    # clip into the image frame, dropping degenerate remains
                    x1, y1 = max(x, 0.0), max(y, 0.0)
                    x2, y2 = min(x + w, float(img_w)), min(y + h, float(img_h))
                    if x2 - x1 < 1.0 or y2 - y1 < 1.0:
                        continue
                    dets.append(BBox(x1, y1, x2 - x1, y2 - y1, c, float(score)))
            results.append(nms(dets, iou_thresh=iou_thresh, score_thresh=score_thresh,
                               max_out=max_out))
        return results


def build_detector(config: dict, seed: int = 0) -> SpikingDetector:
    return SpikingDetector(config, np.random.default_rng(seed))
