"""Training loops: AdamW, cosine schedule, gradient clipping, experiment drivers.

Runs are deterministic given the config seed: data generation, parameter
init, shuffling and augmentation draws all derive from it. The JSON run
report is byte-stable across re-runs; wall-clock time is kept out of it
and surfaced separately.
"""

from __future__ import annotations

import configparser
import csv
import json
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .decode import decode_train
from .detect import BBox, evaluate_map, filter_gt_boxes, match_anchors
from .events import (
    encode_voxel_cube,
    generate_synthetic_stream,
    horizontal_flip,
)
from .losses import FocalParams, ce_loss, mse_loss, ssd_multibox_loss
from .metrics import firing_rate
from .models import SpikingDetector, build_detector
from .snn import Module, SEWResBlock, build_classifier

__all__ = [
    "TrainConfig",
    "RunReport",
    "TrainingDivergedError",
    "adamw_step",
    "AdamWState",
    "cosine_lr",
    "clip_grad_norm",
    "train_classifier",
    "train_detector",
    "load_config_file",
    "apply_overrides",
    "toy_classifier_config",
    "toy_detector_config",
]


class TrainingDivergedError(RuntimeError):
    pass


# --- optimizer ----------------------------------------------------------------


@dataclass
class AdamWState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adamw_step(params: list[Tensor], state: AdamWState, lr: float,
               betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One decoupled-weight-decay Adam update on params with populated grads."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    state.step += 1
    b1, b2 = betas
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for i, p in enumerate(params):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p.data)


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float = 0.0) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError("step outside schedule range")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * step / total_steps))


def clip_grad_norm(params: list[Tensor], max_norm: float = 1.0) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# --- configuration ------------------------------------------------------------


@dataclass
class TrainConfig:
    task: str = "classify"  # classify | detect
    epochs: int = 6
    batch_size: int = 8
    lr: float = 5e-3
    lr_min: float = 0.0
    weight_decay: float = 1e-2
    grad_clip: float = 1.0
    seed: int = 0
    decode: str = "rate"  # rate | count
    loss: str = "mse"  # mse | ce (classification)
    # dataset
    count: int = 120
    width: int = 32
    height: int = 32
    duration: int = 20000
    rate: float = 0.02
    T: int = 5
    n: int = 2
    classes: int = 2
    flip_prob: float = 0.5  # detection augmentation
    # model
    stem_channels: int = 8
    stages: str = "2:8,2:8"  # layers:growth per dense stage
    tap_stages: str = ""  # detection taps; empty = all stages
    extra_blocks: int = 0
    fusion: str = "none"  # none | 3 | 4 (number of fused taps)
    spes_variant: str = "res"
    fused_channels: int = 24
    pyramid_levels: int = 3
    anchor_scales: str = "0.15,0.3,0.5"
    anchor_ratios: str = "1.0"
    min_box_side: float = 3.0
    min_box_diag: float = 4.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    score_thresh: float = 0.25

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch size must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.decode not in ("rate", "count"):
            raise ValueError("decode must be rate or count")
        if self.loss not in ("mse", "ce"):
            raise ValueError("loss must be mse or ce")

    def parsed_stages(self) -> list[tuple[int, int]]:
        return [tuple(int(v) for v in part.split(":")) for part in self.stages.split(",")]

    def parsed_tap_stages(self) -> list[int]:
        if not self.tap_stages:
            return list(range(len(self.parsed_stages())))
        return [int(v) for v in self.tap_stages.split(",")]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "TrainConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        defaults = cls()
        for key, raw in flat.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            current = getattr(defaults, key)
            if isinstance(current, bool):
                kwargs[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                kwargs[key] = int(raw)
            elif isinstance(current, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        return cls(**kwargs)


def load_config_file(path) -> dict[str, str]:
    """key=value sections; section names are organizational only."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            flat[key] = value
    return flat


def apply_overrides(flat: dict[str, str], sets: list[str]) -> dict[str, str]:
    """--set key=value pairs; overrides beat config-file values."""
    out = dict(flat)
    for item in sets:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def toy_classifier_config(**overrides) -> TrainConfig:
    cfg = TrainConfig(task="classify")
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def toy_detector_config(**overrides) -> TrainConfig:
    cfg = TrainConfig(
        task="detect",
        epochs=6,
        batch_size=4,
        lr=2e-3,
        weight_decay=1e-4,
        count=40,
        width=64,
        height=48,
        duration=10000,
        rate=0.05,
        classes=1,
        stem_channels=8,
        stages="2:8,2:8,2:8",
        fusion="3",
        loss="mse",  # unused by detection; focal+smooth-L1 applies
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


# --- reports ------------------------------------------------------------------


@dataclass
class RunReport:
    task: str
    config: dict
    epochs: list[dict]
    final: dict
    wall_clock_seconds: float = 0.0

    def to_json(self) -> str:
        """Deterministic payload: wall-clock is deliberately excluded."""
        payload = {
            "task": self.task,
            "config": self.config,
            "epochs": self.epochs,
            "final": self.final,
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    def write_csv(self, path) -> None:
        if not self.epochs:
            return
        keys = sorted(self.epochs[0])
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            for row in self.epochs:
                writer.writerow(row)


def _check_finite(loss_value: float, context: str) -> None:
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(f"non-finite loss during {context}: {loss_value}")


def _nonbinary_rate(network: Module) -> float:
    entries, total = 0.0, 0
    for _, mod in network.named_modules():
        if isinstance(mod, SEWResBlock):
            entries += mod.nonbinary_entries
            total += mod.total_entries
    return entries / total if total else 0.0


# --- classification -------------------------------------------------------------


def make_classification_dataset(cfg: TrainConfig):
    """Alternating moving-bar (class 0) and static-noise (class 1) samples."""
    cubes, labels = [], []
    for i in range(cfg.count):
        scenario = "moving-bar" if i % 2 == 0 else "static-noise"
        stream, gt = generate_synthetic_stream(
            scenario, seed=cfg.seed * 100_003 + i, duration=cfg.duration,
            width=cfg.width, height=cfg.height, rate=cfg.rate,
        )
        cube = encode_voxel_cube(stream, 0, cfg.duration, cfg.T, cfg.n)
        cubes.append(cube.data.astype(np.float64))
        labels.append(gt.label)
    return np.stack(cubes), np.array(labels, dtype=np.int64)


def _classifier_model_config(cfg: TrainConfig) -> dict:
    return {
        "in_channels": 2 * cfg.n,
        "stem_channels": cfg.stem_channels,
        "stages": cfg.parsed_stages(),
        "classes": cfg.classes,
    }


def evaluate_classifier(model, cubes, labels, cfg: TrainConfig):
    """Eval-mode accuracy plus slot-weighted firing rate over the set."""
    model.eval()
    correct = 0
    spikes, slots = 0.0, 0
    for start in range(0, len(cubes), cfg.batch_size):
        batch = cubes[start : start + cfg.batch_size]
        steps = model.forward(batch)
        decoded = decode_train(steps, cfg.decode)
        pred = decoded.data.argmax(axis=1)
        correct += int((pred == labels[start : start + cfg.batch_size]).sum())
        fr = firing_rate(model)
        spikes += fr.total_spikes
        slots += fr.total_slots
    model.train()
    return correct / len(cubes), spikes / slots if slots else 0.0


def train_classifier(cfg: TrainConfig) -> RunReport:
    """Window -> encode -> T-step forward -> decode -> loss -> AdamW loop."""
    started = time.perf_counter()
    cubes, labels = make_classification_dataset(cfg)
    one_hot = np.eye(cfg.classes)[labels]
    model = build_classifier(_classifier_model_config(cfg), seed=cfg.seed)
    params = model.parameters()
    state = AdamWState()
    shuffle_rng = np.random.default_rng(cfg.seed + 777)
    steps_per_epoch = int(np.ceil(len(cubes) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    epoch_rows = []
    global_step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(cubes))
        epoch_loss = 0.0
        for start in range(0, len(cubes), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            model.zero_grad()
            steps = model.forward(cubes[idx])
            decoded = decode_train(steps, cfg.decode)
            if cfg.loss == "mse":
                loss = mse_loss(decoded, one_hot[idx])
            else:
                loss = ce_loss(decoded, one_hot[idx])
            value = float(loss.data)
            _check_finite(value, f"epoch {epoch}")
            epoch_loss += value * len(idx)
            loss.backward()
            clip_grad_norm(params, cfg.grad_clip)
            lr = cosine_lr(global_step, total_steps, cfg.lr, cfg.lr_min)
            adamw_step(params, state, lr, weight_decay=cfg.weight_decay)
            global_step += 1
        acc, fr = evaluate_classifier(model, cubes, labels, cfg)
        epoch_rows.append(
            {
                "epoch": epoch,
                "loss": round(epoch_loss / len(cubes), 10),
                "accuracy": round(acc, 6),
                "firing_rate": round(fr, 6),
                "nonbinary_rate": 0.0,
            }
        )
    final = {
        "accuracy": epoch_rows[-1]["accuracy"],
        "firing_rate": epoch_rows[-1]["firing_rate"],
        "loss": epoch_rows[-1]["loss"],
    }
    report = RunReport("classify", cfg.to_dict(), epoch_rows, final)
    report.wall_clock_seconds = time.perf_counter() - started
    return report, model


# --- detection -------------------------------------------------------------------


def make_detection_dataset(cfg: TrainConfig):
    """Moving-square samples, one annotation window per sample."""
    samples = []
    for i in range(cfg.count):
        stream, gt = generate_synthetic_stream(
            "moving-square", seed=cfg.seed * 100_003 + i, duration=cfg.duration,
            width=cfg.width, height=cfg.height, rate=cfg.rate,
        )
        boxes = [
            BBox(b.x, b.y, b.w, b.h, b.class_id)
            for b in gt.boxes
        ]
        boxes = filter_gt_boxes(boxes, cfg.min_box_side, cfg.min_box_diag)
        samples.append((stream, boxes))
    return samples


def _detector_model_config(cfg: TrainConfig) -> dict:
    fusion = None
    if cfg.fusion != "none":
        n_fuse = int(cfg.fusion)
        fusion = {
            "fuse_layers": list(range(n_fuse)),
            "fused_channels": cfg.fused_channels,
            "spes_variant": cfg.spes_variant,
            "pyramid_levels": cfg.pyramid_levels,
        }
    return {
        "backbone": {
            "in_channels": 2 * cfg.n,
            "stem_channels": cfg.stem_channels,
            "stages": cfg.parsed_stages(),
            "tap_stages": cfg.parsed_tap_stages(),
            "extra_blocks": cfg.extra_blocks,
        },
        "input_hw": (cfg.height, cfg.width),
        "classes": cfg.classes,
        "fusion": fusion,
        "decode": cfg.decode,
        "anchor_scales": [float(v) for v in cfg.anchor_scales.split(",")],
        "anchor_ratios": [float(v) for v in cfg.anchor_ratios.split(",")],
    }


def _encode_sample(cfg: TrainConfig, stream, boxes, flip: bool):
    if flip:
        stream = horizontal_flip(stream)
        boxes = [
            BBox(stream.width - b.x - b.w, b.y, b.w, b.h, b.class_id)
            for b in boxes
        ]
    cube = encode_voxel_cube(stream, 0, cfg.duration, cfg.T, cfg.n)
    return cube.data.astype(np.float64), boxes


def evaluate_detector(model: SpikingDetector, samples, cfg: TrainConfig):
    """mAP over the sample set plus firing and non-binary rates."""
    model.eval()
    dets_by_sample, gts_by_sample = {}, {}
    spikes, slots = 0.0, 0
    nb_entries, nb_total = 0.0, 0
    for i, (stream, boxes) in enumerate(samples):
        cube, _ = _encode_sample(cfg, stream, boxes, flip=False)
        dets = model.detect(cube[None], score_thresh=cfg.score_thresh)[0]
        dets_by_sample[str(i)] = dets
        gts_by_sample[str(i)] = boxes
        fr = firing_rate(model)
        spikes += fr.total_spikes
        slots += fr.total_slots
        nb_entries += sum(
            m.nonbinary_entries for _, m in model.named_modules() if isinstance(m, SEWResBlock)
        )
        nb_total += sum(
            m.total_entries for _, m in model.named_modules() if isinstance(m, SEWResBlock)
        )
    model.train()
    metrics = evaluate_map(dets_by_sample, gts_by_sample)
    metrics["firing_rate"] = spikes / slots if slots else 0.0
    metrics["nonbinary_rate"] = nb_entries / nb_total if nb_total else 0.0
    return metrics


def train_detector(cfg: TrainConfig) -> RunReport:
    """Detection loop: anchor matching, focal + smooth-L1, flip augmentation."""
    started = time.perf_counter()
    samples = make_detection_dataset(cfg)
    model = build_detector(_detector_model_config(cfg), seed=cfg.seed)
    params = model.parameters()
    state = AdamWState()
    focal = FocalParams(cfg.focal_alpha, cfg.focal_gamma)
    shuffle_rng = np.random.default_rng(cfg.seed + 777)
    aug_rng = np.random.default_rng(cfg.seed + 999)
    steps_per_epoch = int(np.ceil(len(samples) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    epoch_rows = []
    global_step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(samples))
        epoch_loss = 0.0
        for start in range(0, len(samples), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            cubes, assignments = [], []
            for i in idx:
                stream, boxes = samples[i]
                flip = cfg.flip_prob > 0 and aug_rng.random() < cfg.flip_prob
                cube, fboxes = _encode_sample(cfg, stream, boxes, flip)
                cubes.append(cube)
                assignments.append(match_anchors(model.anchors, fboxes))
            model.zero_grad()
            cls_preds, box_preds = model.forward(np.stack(cubes))
            losses = []
            for bi, assignment in enumerate(assignments):
                losses.append(
                    ssd_multibox_loss(
                        _row(cls_preds, bi), _row(box_preds, bi), assignment, focal
                    )
                )
            total = losses[0]
            for extra in losses[1:]:
                total = ag.elementwise_add(total, extra)
            loss = ag.scalar_mul(total, 1.0 / len(losses))
            value = float(loss.data)
            _check_finite(value, f"epoch {epoch}")
            epoch_loss += value * len(idx)
            loss.backward()
            clip_grad_norm(params, cfg.grad_clip)
            lr = cosine_lr(global_step, total_steps, cfg.lr, cfg.lr_min)
            adamw_step(params, state, lr, weight_decay=cfg.weight_decay)
            global_step += 1
        row = {"epoch": epoch, "loss": round(epoch_loss / len(samples), 10)}
        if epoch == cfg.epochs - 1:
            metrics = evaluate_detector(model, samples, cfg)
            row.update(
                {
                    "mAP@0.5": round(metrics["mAP@0.5"], 6),
                    "mAP@0.5:0.95": round(metrics["mAP@0.5:0.95"], 6),
                    "firing_rate": round(metrics["firing_rate"], 6),
                    "nonbinary_rate": round(metrics["nonbinary_rate"], 8),
                }
            )
        epoch_rows.append(row)
    final = {k: v for k, v in epoch_rows[-1].items() if k != "epoch"}
    report = RunReport("detect", cfg.to_dict(), epoch_rows, final)
    report.wall_clock_seconds = time.perf_counter() - started
    return report, model


def _row(x: Tensor, i: int) -> Tensor:
    """Select batch row i keeping the graph connected."""
    out = Tensor(x.data[i])
    if x.requires_grad:
        def backward(g):
            full = np.zeros_like(x.data)
            full[i] = g
            ag._accum(x, full)

        out.requires_grad = True
        out._parents = (x,)
        out._backward = backward
    return out
