"""Loss functions vs closed-form gradient oracles and hand-worked values."""

import numpy as np
import pytest

import spikedet.autograd as ag
from spikedet.autograd import Tensor
from spikedet.losses import (
    FocalParams,
    ce_grad_analytic,
    ce_loss,
    focal_loss,
    focal_loss_np,
    mse_grad_analytic,
    mse_loss,
    smooth_l1,
    softmax_np,
    ssd_multibox_loss,
)

from conftest import check_gradients


def one_hot(labels, classes):
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class TestMSE:
    def test_hand_value(self):
        # a=[0.2,0.8], y=[0,1] -> 0.04 + 0.04 = 0.08
        loss = mse_loss(Tensor(np.array([[0.2, 0.8]])), np.array([[0.0, 1.0]]))
        assert float(loss.data) == pytest.approx(0.08, abs=1e-12)

    def test_autodiff_matches_analytic_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(1000):
            n, c = int(rng.integers(1, 6)), int(rng.integers(2, 6))
            a = rng.normal(size=(n, c))
            y = one_hot(rng.integers(0, c, size=n), c)
            t = Tensor(a, requires_grad=True)
            mse_loss(t, y).backward()
            # the loss normalizes by N; the oracle is the per-sample form
            np.testing.assert_allclose(t.grad * n, mse_grad_analytic(a, y), atol=1e-10)

    def test_zero_at_perfect_prediction(self):
        y = one_hot([0, 2], 3)
        assert float(mse_loss(Tensor(y.copy()), y).data) == 0.0

    def test_rejects_non_onehot(self):
        with pytest.raises(ValueError):
            mse_loss(Tensor(np.zeros((1, 2))), np.array([[0.5, 0.5]]))


class TestCE:
    def test_softmax_worked_example(self):
        # decoded [0.2, 0.8] -> softmax rounding to [0.35, 0.65]
        z = softmax_np(np.array([0.2, 0.8]))
        np.testing.assert_allclose(z, [0.3543, 0.6457], atol=5e-5)
        assert list(np.round(z, 2)) == [0.35, 0.65]
        # decoded [0.2, 1.0] -> [0.31, 0.69]
        z2 = softmax_np(np.array([0.2, 1.0]))
        assert list(np.round(z2, 2)) == [0.31, 0.69]

    def test_gradient_worked_example(self):
        g = ce_grad_analytic(np.array([0.2, 0.8]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(g, [0.3543, -0.3543], atol=5e-5)
        g2 = ce_grad_analytic(np.array([0.2, 1.0]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(g2, [0.3100, -0.3100], atol=5e-5)
        # raising the correct-class value shrinks the wrong-class gradient
        assert abs(g2[0]) < abs(g[0])

    def test_autodiff_matches_analytic_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n, c = int(rng.integers(1, 6)), int(rng.integers(2, 6))
            a = rng.normal(size=(n, c))
            y = one_hot(rng.integers(0, c, size=n), c)
            t = Tensor(a, requires_grad=True)
            ce_loss(t, y).backward()
            np.testing.assert_allclose(t.grad * n, ce_grad_analytic(a, y), atol=1e-10)

    def test_finite_difference(self):
        rng = np.random.default_rng(12)
        a = rng.normal(size=(3, 4))
        y = one_hot([1, 0, 3], 4)
        check_gradients(lambda t: ce_loss(t, y), [a])


class TestFocal:
    def test_hand_value(self):
        # p=0.9, y=1, alpha=0.25, gamma=2 -> -0.25 * 0.01 * ln(0.9)
        loss = focal_loss(Tensor(np.array([0.9])), np.array([1.0]), FocalParams())
        assert float(loss.data) == pytest.approx(2.634e-4, rel=1e-3)
        assert float(loss.data) == pytest.approx(-0.25 * 0.01 * np.log(0.9), rel=1e-12)

    def test_tensor_path_matches_numpy_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            p = rng.uniform(0.0, 1.0, size=8)
            y = rng.integers(0, 2, size=8).astype(np.float64)
            params = FocalParams(alpha=float(rng.uniform(0.05, 0.95)),
                                 gamma=float(rng.choice([0.0, 1.0, 2.0, 5.0])))
            t = focal_loss(Tensor(p), y, params)
            assert float(t.data) == pytest.approx(focal_loss_np(p, y, params), rel=1e-12)

    def test_finite_difference(self):
        rng = np.random.default_rng(14)
        p = rng.uniform(0.05, 0.95, size=10)
        y = rng.integers(0, 2, size=10).astype(np.float64)
        check_gradients(lambda t: focal_loss(t, y, FocalParams()), [p])

    def test_gamma_downweights_easy_examples(self):
        easy = focal_loss_np(np.array([0.99]), np.array([1.0]), FocalParams())
        hard = focal_loss_np(np.array([0.6]), np.array([1.0]), FocalParams())
        plain_ratio = np.log(0.6) / np.log(0.99)
        focal_ratio = hard / easy
        assert focal_ratio > plain_ratio  # easy example suppressed far more

    def test_saturation_clamp_keeps_loss_finite(self):
        for p in (0.0, 1.0):
            v = focal_loss_np(np.array([p]), np.array([1.0]), FocalParams())
            assert np.isfinite(v)
        t = Tensor(np.array([0.0, 1.0]), requires_grad=True)
        loss = focal_loss(t, np.array([1.0, 0.0]), FocalParams())
        assert np.isfinite(float(loss.data))
        loss.backward()
        # clamped entries receive no gradient
        np.testing.assert_array_equal(t.grad, [0.0, 0.0])

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            FocalParams(alpha=0.0)
        with pytest.raises(ValueError):
            FocalParams(gamma=-1.0)


class TestSmoothL1:
    def test_piecewise_values(self):
        d = Tensor(np.array([0.0, 0.5, 1.0, -2.0, 3.0]))
        out = smooth_l1(d, beta=1.0)
        np.testing.assert_allclose(out.data, [0.0, 0.125, 0.5, 1.5, 2.5])

    def test_finite_difference_both_regimes(self):
        rng = np.random.default_rng(15)
        d = rng.normal(scale=2.0, size=20)
        d = d[np.abs(np.abs(d) - 1.0) > 0.05]  # avoid the seam
        check_gradients(lambda t: ag.tsum(smooth_l1(t)), [d])


class TestMultibox:
    def _assignment(self, n_anchors, rng):
        from spikedet.detect import MatchAssignment

        labels = rng.choice([-2, -1, 0, 1], size=n_anchors, p=[0.1, 0.6, 0.15, 0.15])
        gt_classes = rng.integers(0, 3, size=n_anchors)
        reg_targets = rng.normal(size=(n_anchors, 4))
        return MatchAssignment(labels=labels, gt_classes=gt_classes, reg_targets=reg_targets)

    def test_perfect_predictions_near_zero(self):
        from spikedet.detect import MatchAssignment

        labels = np.array([0, -1, -1, 1])
        gt_classes = np.array([2, 0, 0, 0])
        reg = np.zeros((4, 4))
        asg = MatchAssignment(labels=labels, gt_classes=gt_classes, reg_targets=reg)
        logits = np.full((4, 3), -20.0)
        logits[0, 2] = 20.0
        logits[3, 0] = 20.0
        loss = ssd_multibox_loss(Tensor(logits), Tensor(np.zeros((4, 4))), asg, FocalParams())
        assert float(loss.data) < 1e-3

    def test_ignored_anchors_get_no_gradient(self):
        rng = np.random.default_rng(16)
        asg = self._assignment(30, rng)
        cls = Tensor(rng.normal(size=(30, 3)), requires_grad=True)
        box = Tensor(rng.normal(size=(30, 4)), requires_grad=True)
        ssd_multibox_loss(cls, box, asg, FocalParams()).backward()
        ignored = asg.labels == -2
        assert np.all(cls.grad[ignored] == 0)
        negative = asg.labels == -1
        assert np.all(box.grad[ignored | negative] == 0)

    def test_finite_difference(self):
        rng = np.random.default_rng(17)
        asg = self._assignment(12, rng)
        cls0 = rng.normal(size=(12, 3))
        box0 = rng.normal(size=(12, 4))
        box0[np.abs(np.abs(box0 - asg.reg_targets) - 1.0) < 0.05] += 0.2  # avoid seam
        check_gradients(
            lambda c, b: ssd_multibox_loss(c, b, asg, FocalParams()), [cls0, box0],
            rtol=1e-3, atol=1e-7,
        )

    def test_normalized_by_positive_count(self):
        from spikedet.detect import MatchAssignment

        rng = np.random.default_rng(18)
        logits = rng.normal(size=(8, 2))
        boxes = rng.normal(size=(8, 4))
        asg1 = MatchAssignment(
            labels=np.array([0, -1, -1, -1, -1, -1, -1, -1]),
            gt_classes=np.zeros(8, dtype=int),
            reg_targets=np.zeros((8, 4)),
        )
        asg2 = MatchAssignment(
            labels=np.array([0, 0, -1, -1, -1, -1, -1, -1]),
            gt_classes=np.zeros(8, dtype=int),
            reg_targets=np.zeros((8, 4)),
        )
        l1 = float(ssd_multibox_loss(Tensor(logits), Tensor(boxes), asg1, FocalParams()).data)
        l2 = float(ssd_multibox_loss(Tensor(logits), Tensor(boxes), asg2, FocalParams()).data)
        assert l1 != l2  # denominator reacts to the positive count
