"""Command-line entry point for scripted experiments.

Subcommands: generate | encode | train-cls | train-det | eval | profile | ablate.
The JSON payload goes to stdout; diagnostics (including wall-clock) go to
stderr. Exit codes: 2 bad flags, 3 I/O failure, 4 non-finite loss,
5 checkpoint/architecture mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .events import (
    SCENARIOS,
    encode_voxel_cube,
    generate_synthetic_stream,
    read_event_file,
    read_ground_truth,
    write_event_file,
    write_ground_truth,
)
from .detect import BBox, filter_gt_boxes
from .metrics import count_ops, energy, firing_rate
from .models import build_detector
from .snn import load_checkpoint, read_checkpoint_manifest, save_checkpoint, build_classifier
from .train import (
    TrainConfig,
    TrainingDivergedError,
    apply_overrides,
    evaluate_detector,
    load_config_file,
    toy_classifier_config,
    toy_detector_config,
    train_classifier,
    train_detector,
)

EXIT_BAD_FLAGS = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_CHECKPOINT = 5


def _emit(payload: str) -> None:
    sys.stdout.write(payload)
    if not payload.endswith("\n"):
        sys.stdout.write("\n")


def _diag(message: str) -> None:
    sys.stderr.write(message + "\n")


def _resolve_config(args, base: TrainConfig) -> TrainConfig:
    flat = {}
    if args.config:
        flat.update(load_config_file(args.config))
    flat = apply_overrides(flat, args.set or [])
    cfg = base
    merged = {k: str(v) for k, v in cfg.to_dict().items()}
    merged.update(flat)
    return TrainConfig.from_flat(merged)


def cmd_generate(args) -> int:
    try:
        os.makedirs(args.out_dir, exist_ok=True)
    except OSError as exc:
        _diag(f"cannot create output dir: {exc}")
        return EXIT_IO
    manifest = {
        "scenario": args.scenario,
        "seed": args.seed,
        "count": args.count,
        "width": args.width,
        "height": args.height,
        "duration": args.duration,
        "rate": args.rate,
        "samples": [],
    }
    try:
        for i in range(args.count):
            stream, gt = generate_synthetic_stream(
                args.scenario, seed=args.seed * 100_003 + i, duration=args.duration,
                width=args.width, height=args.height, rate=args.rate,
            )
            name = f"sample_{i:05d}"
            write_event_file(stream, os.path.join(args.out_dir, name + ".evt"))
            write_ground_truth(gt, os.path.join(args.out_dir, name + ".gt.txt"))
            manifest["samples"].append({"name": name, "events": len(stream), "kind": gt.kind})
        with open(os.path.join(args.out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
    except OSError as exc:
        _diag(f"I/O failure: {exc}")
        return EXIT_IO
    _emit(json.dumps({"written": args.count, "out_dir": args.out_dir}, sort_keys=True))
    return 0


def cmd_encode(args) -> int:
    try:
        stream = read_event_file(args.input)
    except OSError as exc:
        _diag(f"cannot read {args.input}: {exc}")
        return EXIT_IO
    t_b = args.t_b if args.t_b is not None else stream.duration
    cube = encode_voxel_cube(stream, args.t_a, t_b, args.T, args.n)
    np.save(args.out, cube.data)
    _emit(json.dumps(
        {
            "shape": list(cube.data.shape),
            "events_binned": int(cube.data.sum()),
            "out": args.out,
        },
        sort_keys=True,
    ))
    return 0


def _run_training(args, task: str) -> int:
    base = toy_classifier_config() if task == "classify" else toy_detector_config()
    try:
        cfg = _resolve_config(args, base)
    except (KeyError, ValueError, FileNotFoundError) as exc:
        _diag(f"bad configuration: {exc}")
        return EXIT_BAD_FLAGS
    cfg.task = task
    try:
        if task == "classify":
            report, model = train_classifier(cfg)
        else:
            report, model = train_detector(cfg)
    except TrainingDivergedError as exc:
        _diag(str(exc))
        return EXIT_DIVERGED
    if args.out_dir:
        try:
            os.makedirs(args.out_dir, exist_ok=True)
            with open(os.path.join(args.out_dir, "report.json"), "w") as fh:
                fh.write(report.to_json())
            report.write_csv(os.path.join(args.out_dir, "epochs.csv"))
            arch = {"kind": task, "train_config": cfg.to_dict()}
            save_checkpoint(os.path.join(args.out_dir, "checkpoint.zip"), arch, model)
        except OSError as exc:
            _diag(f"I/O failure: {exc}")
            return EXIT_IO
    _diag(f"wall clock: {report.wall_clock_seconds:.2f}s")
    _emit(report.to_json())
    return 0


def cmd_train_cls(args) -> int:
    return _run_training(args, "classify")


def cmd_train_det(args) -> int:
    return _run_training(args, "detect")


def _load_checkpointed_model(path):
    manifest = read_checkpoint_manifest(path)
    arch = manifest["arch"]
    cfg = TrainConfig.from_flat({k: str(v) for k, v in arch["train_config"].items()})
    if arch["kind"] == "detect":
        from .train import _detector_model_config

        model = build_detector(_detector_model_config(cfg), seed=cfg.seed)
    else:
        from .train import _classifier_model_config

        model = build_classifier(_classifier_model_config(cfg), seed=cfg.seed)
    load_checkpoint(path, model)
    return arch["kind"], cfg, model


def _load_detection_samples(dataset_dir, cfg: TrainConfig):
    with open(os.path.join(dataset_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    samples = []
    for entry in manifest["samples"]:
        stream = read_event_file(os.path.join(dataset_dir, entry["name"] + ".evt"))
        gt = read_ground_truth(os.path.join(dataset_dir, entry["name"] + ".gt.txt"), "detection")
        boxes = [BBox(b.x, b.y, b.w, b.h, b.class_id) for b in gt.boxes]
        boxes = filter_gt_boxes(boxes, cfg.min_box_side, cfg.min_box_diag)
        samples.append((stream, boxes))
    return samples


def cmd_eval(args) -> int:
    try:
        kind, cfg, model = _load_checkpointed_model(args.checkpoint)
    except (OSError, KeyError) as exc:
        _diag(f"cannot load checkpoint: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _diag(f"checkpoint mismatch: {exc}")
        return EXIT_CHECKPOINT
    if kind != "detect":
        _diag("eval expects a detection checkpoint")
        return EXIT_BAD_FLAGS
    try:
        samples = _load_detection_samples(args.dataset, cfg)
    except OSError as exc:
        _diag(f"cannot load dataset: {exc}")
        return EXIT_IO
    metrics = evaluate_detector(model, samples, cfg)
    _emit(json.dumps(metrics, sort_keys=True, indent=1))
    return 0


def cmd_profile(args) -> int:
    try:
        kind, cfg, model = _load_checkpointed_model(args.checkpoint)
    except (OSError, KeyError) as exc:
        _diag(f"cannot load checkpoint: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _diag(f"checkpoint mismatch: {exc}")
        return EXIT_CHECKPOINT
    if kind == "detect":
        try:
            samples = _load_detection_samples(args.dataset, cfg)
        except OSError as exc:
            _diag(f"cannot load dataset: {exc}")
            return EXIT_IO
        from .train import _encode_sample

        model.eval()
        spikes, slots = 0.0, 0
        for stream, boxes in samples:
            cube, _ = _encode_sample(cfg, stream, boxes, flip=False)
            model.forward(cube[None])
            fr = firing_rate(model)
            spikes += fr.total_spikes
            slots += fr.total_slots
        fr_overall = spikes / slots if slots else 0.0
    else:
        from .train import make_classification_dataset

        cubes, _labels = make_classification_dataset(cfg)
        model.eval()
        model.forward(cubes[:1])
        fr_overall = firing_rate(model).overall_rate
    counts = count_ops(model, cfg.T)
    report = energy(cfg.T, fr_overall, counts)
    fr_report = firing_rate(model)
    payload = {
        "T": cfg.T,
        "firing_rate": fr_overall,
        "per_layer_rates": {k: v["rate"] for k, v in fr_report.per_layer.items()},
        "n_ac_per_timestep": counts.n_ac,
        "n_mac_per_timestep": counts.n_mac,
        "per_layer_ops": counts.per_layer,
        "energy_snn_joules": report.e_snn_joules,
        "energy_mac_joules": report.e_mac_joules,
        "energy_total_joules": report.total_joules,
    }
    _emit(json.dumps(payload, sort_keys=True, indent=1))
    return 0


def cmd_ablate(args) -> int:
    axes = [a.strip() for a in args.axis.split(",")]
    reports = []
    try:
        if set(axes) == {"decode", "loss"}:
            for decode in ("rate", "count"):
                for loss in ("mse", "ce"):
                    cfg = _resolve_config(args, toy_classifier_config())
                    cfg.decode, cfg.loss = decode, loss
                    report, _ = train_classifier(cfg)
                    reports.append(json.loads(report.to_json()))
        elif axes == ["fusion"]:
            base_cfg = _resolve_config(args, toy_detector_config())
            enabled = base_cfg.fusion if base_cfg.fusion != "none" else "3"
            for fusion in ("none", enabled):
                cfg = _resolve_config(args, toy_detector_config())
                cfg.fusion = fusion
                report, _ = train_detector(cfg)
                reports.append(json.loads(report.to_json()))
        else:
            _diag("supported axes: 'decode,loss' or 'fusion'")
            return EXIT_BAD_FLAGS
    except TrainingDivergedError as exc:
        _diag(str(exc))
        return EXIT_DIVERGED
    except (KeyError, ValueError, FileNotFoundError) as exc:
        _diag(f"bad configuration: {exc}")
        return EXIT_BAD_FLAGS
    _emit(json.dumps(reports, sort_keys=True, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikedet")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic event files + GT sidecars")
    g.add_argument("--scenario", choices=SCENARIOS, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--height", type=int, default=48)
    g.add_argument("--duration", type=int, default=10000)
    g.add_argument("--rate", type=float, default=0.05)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("encode", help="voxel-cube encode an event file to .npy")
    e.add_argument("--input", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--t-a", type=int, default=0)
    e.add_argument("--t-b", type=int, default=None)
    e.add_argument("-T", "--T", type=int, default=5)
    e.add_argument("-n", "--n", type=int, default=2)
    e.set_defaults(func=cmd_encode)

    for name, fn in (("train-cls", cmd_train_cls), ("train-det", cmd_train_det)):
        t = sub.add_parser(name, help=f"run the {name} loop")
        t.add_argument("--config", default=None)
        t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        t.add_argument("--out-dir", default=None)
        t.set_defaults(func=fn)

    ev = sub.add_parser("eval", help="mAP of a detection checkpoint on a dataset dir")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", help="firing-rate and energy profile of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None)
    p.set_defaults(func=cmd_profile)

    a = sub.add_parser("ablate", help="run an experiment matrix")
    a.add_argument("--axis", required=True, help="'decode,loss' or 'fusion'")
    a.add_argument("--config", default=None)
    a.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    a.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
