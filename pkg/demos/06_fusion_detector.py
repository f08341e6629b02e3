"""The assembled spiking detector and its multi-scale fusion module.

The backbone taps feature maps at several spatial scales. The fusion
module upsamples the deeper taps with transposed convolutions (kept
spiking end to end), concatenates them with the shallow taps, and emits
a feature pyramid for the SSD-style head. Everything before the head is
binary: that is what makes the accumulate-only energy model applicable.
"""

import numpy as np

from spikedet.models import build_detector
from spikedet.snn import PLIFLayer, SEWResBlock

config = {
    "backbone": {
        "in_channels": 4,
        "stem_channels": 8,
        "stages": [(1, 8), (1, 8)],
        "tap_stages": [0, 1],
        "extra_blocks": 0,
    },
    "input_hw": (32, 48),
    "classes": 1,
    "decode": "rate",
    "anchor_scales": [0.2, 0.4],
    "anchor_ratios": [1.0],
    "fusion": {
        "fuse_layers": [0, 1],
        "fused_channels": 16,
        "spes_variant": "res",
        "pyramid_levels": 2,
    },
}
model = build_detector(config, seed=0)
print(f"pyramid level shapes: {model.level_shapes}")
print(f"anchors: {len(model.anchors)} "
      f"({model.anchors_per_cell} per cell)")

rng = np.random.default_rng(1)
batch = rng.poisson(0.4, size=(1, 4, 4, 32, 48)).astype(np.float64)
cls, box = model.forward(batch)
print(f"head outputs: cls {cls.shape}, box {box.shape}")

# verify the network stayed binary (residual-add sites may reach 2)
for name, mod in model.named_modules():
    if isinstance(mod, PLIFLayer) and mod.last_output is not None:
        assert set(np.unique(mod.last_output)) <= {0.0, 1.0}
    if isinstance(mod, SEWResBlock) and mod.last_output is not None:
        assert set(np.unique(mod.last_output)) <= {0.0, 1.0, 2.0}
print("all activations binary (residual adds at most 2) - checked")

dets = model.detect(batch, score_thresh=0.1, max_out=5)[0]
print(f"\nuntrained detections (noise, for plumbing only): {len(dets)}")
for d in dets[:3]:
    print(f"  class {d.class_id} score {d.score:.3f} "
          f"at ({d.x:.1f}, {d.y:.1f}, {d.w:.1f}, {d.h:.1f})")
