"""spikedet: event-camera spiking object detection in pure numpy.

Event-stream I/O and voxel-cube encoding, a reverse-mode autograd engine
with a surrogate spike gradient, parametric leaky integrate-and-fire
networks with multi-scale spiking fusion, spike-train decoding, SSD-style
detection, energy accounting, and training drivers.
"""

from .events import (
    SCENARIOS,
    BadMagicError,
    Event,
    EventFileError,
    EventStream,
    GroundTruth,
    GroundTruthBox,
    TruncatedFileError,
    UnsortedTimestampsError,
    VoxelCube,
    concat_streams,
    encode_voxel_cube,
    generate_synthetic_stream,
    horizontal_flip,
    read_event_file,
    read_ground_truth,
    resize_stream_nearest,
    window_slice,
    write_event_file,
    write_ground_truth,
)
from .autograd import SurrogateSpec, Tensor, atan_surrogate_grad, spike
from .decode import STRATEGIES, decode_count, decode_membrane, decode_rate, decode_train
from .losses import (
    FocalParams,
    ce_loss,
    focal_loss,
    mse_loss,
    smooth_l1,
    ssd_multibox_loss,
)
from .snn import (
    BatchNorm2d,
    Conv2d,
    ConvBNPLIF,
    DeconvBlock,
    DenseBlock,
    ExtraBlock,
    FusionSpec,
    LinearLayer,
    Module,
    PLIFLayer,
    SEWResBlock,
    SPES,
    SpikingClassifier,
    SpikingDetectorBackbone,
    SpikingFusion,
    TConvBNPLIF,
    TransposedConv2d,
    build_classifier,
    build_detector_backbone,
    load_checkpoint,
    save_checkpoint,
)
from .detect import (
    AnchorSet,
    BBox,
    MatchAssignment,
    SSDHead,
    decode_boxes,
    encode_boxes,
    evaluate_map,
    filter_gt_boxes,
    generate_anchors,
    iou,
    iou_matrix,
    match_anchors,
    nms,
)
from .metrics import E_AC_PJ, E_MAC_PJ, EnergyReport, FiringReport, OpCount, count_ops, energy, firing_rate
from .models import SpikingDetector, build_detector
from .train import (
    AdamWState,
    RunReport,
    TrainConfig,
    TrainingDivergedError,
    adamw_step,
    clip_grad_norm,
    cosine_lr,
    train_classifier,
    train_detector,
)

__version__ = "0.1.0"
