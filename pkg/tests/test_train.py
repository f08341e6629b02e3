"""Optimizer, schedule, clipping, configuration, and training-loop behavior."""

import json

import numpy as np
import pytest

from spikedet.autograd import Tensor
from spikedet.train import (
    AdamWState,
    TrainConfig,
    TrainingDivergedError,
    adamw_step,
    apply_overrides,
    clip_grad_norm,
    cosine_lr,
    load_config_file,
    toy_classifier_config,
    toy_detector_config,
    train_classifier,
    train_detector,
)


class TestAdamW:
    def test_first_step_hand_value(self):
        # g=1, lr=0.1: m_hat=1, v_hat=1 -> update = -0.1 (up to eps)
        p = Tensor(np.array([0.0]))
        p.grad = np.array([1.0])
        adamw_step([p], AdamWState(), lr=0.1)
        assert float(p.data[0]) == pytest.approx(-0.1, rel=1e-6)

    def test_bias_correction_keeps_early_steps_scaled(self):
        p = Tensor(np.array([0.0]))
        state = AdamWState()
        for _ in range(3):
            p.grad = np.array([1.0])
            adamw_step([p], state, lr=0.1)
        # constant gradient: each update stays ~ -lr
        assert float(p.data[0]) == pytest.approx(-0.3, rel=1e-4)

    def test_decoupled_weight_decay(self):
        p = Tensor(np.array([10.0]))
        p.grad = np.array([0.0])
        adamw_step([p], AdamWState(), lr=0.1, weight_decay=0.5)
        # pure decay: p <- p - lr * wd * p = 10 - 0.5 = 9.5
        assert float(p.data[0]) == pytest.approx(9.5)

    def test_zero_lr_is_noop(self):
        p = Tensor(np.array([3.0]))
        p.grad = np.array([5.0])
        adamw_step([p], AdamWState(), lr=0.0, weight_decay=0.1)
        assert float(p.data[0]) == 3.0

    def test_state_mismatch_rejected(self):
        state = AdamWState()
        p = Tensor(np.array([0.0]))
        p.grad = np.array([1.0])
        adamw_step([p], state, lr=0.1)
        q = Tensor(np.array([0.0]))
        with pytest.raises(ValueError):
            adamw_step([p, q], state, lr=0.1)


class TestCosine:
    def test_closed_form_endpoints(self):
        assert cosine_lr(0, 100, 1.0) == pytest.approx(1.0)
        assert cosine_lr(100, 100, 1.0) == pytest.approx(0.0, abs=1e-15)
        assert cosine_lr(50, 100, 1.0) == pytest.approx(0.5)

    def test_lr_min_floor(self):
        assert cosine_lr(100, 100, 1.0, lr_min=0.1) == pytest.approx(0.1)
        assert cosine_lr(0, 100, 1.0, lr_min=0.1) == pytest.approx(1.0)

    def test_monotone_decreasing(self):
        vals = [cosine_lr(s, 50, 1.0) for s in range(51)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            cosine_lr(-1, 10, 1.0)
        with pytest.raises(ValueError):
            cosine_lr(11, 10, 1.0)


class TestClip:
    def test_hand_value(self):
        # grads [3, 4] have norm 5 -> scaled to [0.6, 0.8]
        p = Tensor(np.zeros(2))
        p.grad = np.array([3.0, 4.0])
        norm = clip_grad_norm([p], max_norm=1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8])

    def test_below_threshold_untouched(self):
        p = Tensor(np.zeros(2))
        p.grad = np.array([0.3, 0.4])
        norm = clip_grad_norm([p], max_norm=1.0)
        assert norm == pytest.approx(0.5)
        np.testing.assert_allclose(p.grad, [0.3, 0.4])

    def test_global_norm_across_params(self):
        a, b = Tensor(np.zeros(1)), Tensor(np.zeros(1))
        a.grad, b.grad = np.array([3.0]), np.array([4.0])
        clip_grad_norm([a, b], max_norm=1.0)
        total = float(a.grad[0] ** 2 + b.grad[0] ** 2)
        assert total == pytest.approx(1.0)


class TestConfig:
    def test_round_trip_through_flat_strings(self):
        cfg = toy_detector_config()
        flat = {k: str(v) for k, v in cfg.to_dict().items()}
        back = TrainConfig.from_flat(flat)
        assert back == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(KeyError):
            TrainConfig.from_flat({"not_a_key": "1"})

    def test_overrides_beat_file_values(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[train]\nepochs = 3\nlr = 0.01\n")
        flat = load_config_file(path)
        flat = apply_overrides(flat, ["epochs=7"])
        cfg = TrainConfig.from_flat(flat)
        assert cfg.epochs == 7
        assert cfg.lr == 0.01

    def test_bad_override_format(self):
        with pytest.raises(ValueError):
            apply_overrides({}, ["epochs:7"])

    def test_missing_config_file(self):
        with pytest.raises(FileNotFoundError):
            load_config_file("/nonexistent/run.ini")

    def test_stage_parsing(self):
        cfg = toy_classifier_config(stages="2:8,3:16")
        assert cfg.parsed_stages() == [(2, 8), (3, 16)]
        cfg2 = toy_classifier_config(stages="1:4", tap_stages="0")
        assert cfg2.parsed_tap_stages() == [0]

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(decode="membrane")
        with pytest.raises(ValueError):
            TrainConfig(loss="hinge")


def tiny_cls_cfg(**kw):
    base = dict(epochs=2, count=12, width=24, height=24, duration=8000,
                stem_channels=6, stages="1:6,1:6", batch_size=4,
                lr=5e-2, rate=0.05)
    base.update(kw)
    return toy_classifier_config(**base)


def tiny_det_cfg(**kw):
    base = dict(epochs=1, count=4, width=48, height=32, duration=8000,
                stem_channels=4, stages="1:4,1:4", batch_size=2,
                fused_channels=8, pyramid_levels=2, fusion="2")
    base.update(kw)
    return toy_detector_config(**base)


class TestLoops:
    def test_classifier_deterministic_per_seed(self):
        r1, _ = train_classifier(tiny_cls_cfg(seed=5))
        r2, _ = train_classifier(tiny_cls_cfg(seed=5))
        assert r1.to_json() == r2.to_json()

    def test_classifier_seed_changes_run(self):
        r1, _ = train_classifier(tiny_cls_cfg(seed=5))
        r2, _ = train_classifier(tiny_cls_cfg(seed=6))
        assert [e["loss"] for e in r1.epochs] != [e["loss"] for e in r2.epochs]

    def test_classifier_loss_decreases(self):
        report, _ = train_classifier(tiny_cls_cfg(epochs=5, seed=0))
        assert report.epochs[-1]["loss"] < report.epochs[0]["loss"]

    def test_report_json_excludes_wall_clock(self):
        report, _ = train_classifier(tiny_cls_cfg())
        payload = json.loads(report.to_json())
        assert "wall_clock" not in json.dumps(payload)
        assert report.wall_clock_seconds > 0
        assert set(payload) == {"task", "config", "epochs", "final"}

    def test_csv_rows_match_epochs(self, tmp_path):
        report, _ = train_classifier(tiny_cls_cfg(epochs=3))
        path = tmp_path / "epochs.csv"
        report.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 4  # header + 3 epochs

    def test_detector_runs_and_reports(self):
        report, model = train_detector(tiny_det_cfg())
        assert report.task == "detect"
        assert "mAP@0.5" in report.final
        assert 0.0 <= report.final["firing_rate"] <= 1.0

    def test_detector_deterministic_per_seed(self):
        r1, _ = train_detector(tiny_det_cfg(seed=3))
        r2, _ = train_detector(tiny_det_cfg(seed=3))
        assert r1.to_json() == r2.to_json()

    def test_divergence_raises(self, monkeypatch):
        # binary decoded outputs keep real losses finite, so inject a
        # poisoned loss to exercise the abort path
        import spikedet.train as train_mod

        def poisoned(decoded, targets):
            t = Tensor(np.float64("nan"))
            return t

        monkeypatch.setattr(train_mod, "mse_loss", poisoned)
        with pytest.raises(TrainingDivergedError):
            train_classifier(tiny_cls_cfg())
