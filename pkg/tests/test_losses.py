import math

import numpy as np
import pytest
import torch

from partseg.losses import LossConfig, adaptive_cce, get_loss, marginal_cce, standard_cce

def single_pixel(logit_values, target, presence_flags):
    """1x1 image with the given channel logits."""
    logits = torch.tensor(logit_values, dtype=torch.float64).view(1, -1, 1, 1)
    targets = torch.tensor([[[target]]], dtype=torch.long)
    presence = torch.tensor([presence_flags], dtype=torch.bool)
    return logits, targets, presence


def random_instance(rng, b=2, k=3, h=4, w=4, presence=None):
    logits = torch.tensor(rng.standard_normal((b, k + 1, h, w)) * 3.0)
    if presence is None:
        presence = torch.ones(b, k, dtype=torch.bool)
    allowed = [0] + [c + 1 for c in range(k) if bool(presence[0, c])]
    targets = torch.tensor(rng.choice(allowed, size=(b, h, w)))
    return logits, targets, presence


class TestStandardCce:
    def test_uniform_prediction_is_log_num_channels(self):
        logits = torch.zeros(1, 4, 2, 2, dtype=torch.float64)
        targets = torch.tensor([[[0, 1], [2, 3]]])
        loss = standard_cce(logits, targets)
        assert math.isclose(float(loss), math.log(4.0), rel_tol=0, abs_tol=1e-12)

    def test_near_one_hot_prediction(self):
        targets = torch.tensor(np.random.default_rng(0).integers(0, 4, (2, 4, 4)))
        logits = torch.zeros(2, 4, 4, 4, dtype=torch.float64)
        logits.scatter_(1, targets.unsqueeze(1), 20.0)
        assert float(standard_cce(logits, targets)) < 1e-8

    def test_single_pixel_hand_value(self):
        # softmax oracle evaluated by hand: -log(e^2 / (e^1 + e^2 + e^0.5 + e^0))
        logits, targets, presence = single_pixel([1.0, 2.0, 0.5, 0.0], 1, [True, True, True])
        expected = math.log(sum(math.exp(v) for v in [1.0, 2.0, 0.5, 0.0])) - 2.0
        assert math.isclose(float(standard_cce(logits, targets, presence)), expected, abs_tol=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            standard_cce(torch.zeros(1, 4, 2, 2), torch.zeros(1, 3, 3, dtype=torch.long))
        with pytest.raises(ValueError):
            standard_cce(torch.zeros(1, 4, 2, 2), torch.full((1, 2, 2), 5, dtype=torch.long))


class TestAdaptiveCce:
    def test_all_present_equals_standard(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            logits, targets, presence = random_instance(rng)
            a = float(adaptive_cce(logits, targets, presence))
            s = float(standard_cce(logits, targets, presence))
            assert abs(a - s) < 1e-9

    def test_uniform_two_remaining_channels(self):
        logits, targets, presence = single_pixel([0.0, 0.0, 0.0], 0, [True, False])
        assert math.isclose(float(adaptive_cce(logits, targets, presence)), math.log(2.0), abs_tol=1e-12)

    def test_single_pixel_hand_value(self):
        # channels {bg, c1} survive: -log(e^2 / (e^1 + e^2))
        logits, targets, presence = single_pixel([1.0, 2.0, 3.0], 1, [True, False])
        expected = math.log(math.exp(1.0) + math.exp(2.0)) - 2.0
        assert math.isclose(float(adaptive_cce(logits, targets, presence)), expected, abs_tol=1e-12)

    def test_target_on_missing_class_raises(self):
        logits, targets, presence = single_pixel([1.0, 2.0, 3.0], 2, [True, False])
        with pytest.raises(ValueError):
            adaptive_cce(logits, targets, presence)

    def test_missing_channel_gradient_exactly_zero(self):
        rng = np.random.default_rng(2)
        presence = torch.tensor([[True, False, True], [False, True, True]])
        logits = torch.tensor(rng.standard_normal((2, 4, 4, 4)) * 3.0)
        targets = torch.zeros(2, 4, 4, dtype=torch.long)
        targets[0] = torch.tensor(rng.choice([0, 1, 3], size=(4, 4)))
        targets[1] = torch.tensor(rng.choice([0, 2, 3], size=(4, 4)))
        logits = logits.clone().requires_grad_(True)
        loss = adaptive_cce(logits, targets, presence)
        loss.backward()
        grad = logits.grad
        assert torch.all(grad[0, 2] == 0.0)
        assert torch.all(grad[1, 1] == 0.0)
        assert float(grad[0, 1].abs().sum()) > 0
        assert float(grad[1, 2].abs().sum()) > 0


class TestMarginalCce:
    def test_all_present_equals_standard(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            logits, targets, presence = random_instance(rng)
            m = float(marginal_cce(logits, targets, presence))
            s = float(standard_cce(logits, targets, presence))
            assert abs(m - s) < 1e-9

    def test_uniform_merged_background(self):
        # three channels, one missing: merged probability = 2/3
        logits, targets, presence = single_pixel([0.0, 0.0, 0.0], 0, [True, False])
        assert math.isclose(float(marginal_cce(logits, targets, presence)), -math.log(2.0 / 3.0), abs_tol=1e-12)

    def test_single_pixel_hand_value(self):
        # -log((e^1 + e^3) / (e^1 + e^2 + e^3))
        logits, targets, presence = single_pixel([1.0, 2.0, 3.0], 0, [True, False])
        num = math.exp(1.0) + math.exp(3.0)
        den = math.exp(1.0) + math.exp(2.0) + math.exp(3.0)
        assert math.isclose(float(marginal_cce(logits, targets, presence)), -math.log(num / den), abs_tol=1e-12)

    def test_target_on_missing_class_raises(self):
        logits, targets, presence = single_pixel([1.0, 2.0, 3.0], 2, [True, False])
        with pytest.raises(ValueError):
            marginal_cce(logits, targets, presence)

    def test_background_missing_swap_symmetry(self):
        rng = np.random.default_rng(4)
        presence = torch.tensor([[True, False, True]])
        for _ in range(100):
            logits, _, _ = random_instance(rng, b=1)
            targets = torch.tensor(rng.choice([0, 1, 3], size=(1, 4, 4)))
            base = float(marginal_cce(logits, targets, presence))
            swapped = logits.clone()
            swapped[:, [0, 2]] = logits[:, [2, 0]]
            assert abs(float(marginal_cce(swapped, targets, presence)) - base) < 1e-12


class TestSharedProperties:
    @pytest.mark.parametrize("kind", ["standard", "adaptive", "marginal"])
    def test_nonnegative_and_finite(self, kind):
        rng = np.random.default_rng(5)
        fn = get_loss(kind)
        presence = torch.tensor([[True, False, True], [True, True, False]])
        for _ in range(25):
            logits = torch.tensor(rng.standard_normal((2, 4, 4, 4)) * 5)
            targets = torch.zeros(2, 4, 4, dtype=torch.long)
            targets[0] = torch.tensor(rng.choice([0, 1, 3], size=(4, 4)))
            targets[1] = torch.tensor(rng.choice([0, 1, 2], size=(4, 4)))
            val = float(fn(logits, targets, presence))
            assert math.isfinite(val) and val >= 0.0

    @pytest.mark.parametrize("kind", ["standard", "adaptive", "marginal"])
    def test_gradient_matches_central_finite_differences(self, kind):
        rng = np.random.default_rng(6)
        fn = get_loss(kind)
        presence = torch.tensor([[True, False, True], [True, True, True]])
        logits = torch.tensor(rng.standard_normal((2, 4, 4, 4))).requires_grad_(True)
        targets = torch.zeros(2, 4, 4, dtype=torch.long)
        targets[0] = torch.tensor(rng.choice([0, 1, 3], size=(4, 4)))
        targets[1] = torch.tensor(rng.choice([0, 1, 2, 3], size=(4, 4)))
        loss = fn(logits, targets, presence)
        loss.backward()
        analytic = logits.grad.clone()
        h = 1e-5
        flat = logits.detach().clone().view(-1)
        fd = torch.zeros_like(flat)
        for i in range(flat.numel()):
            for sign in (1.0, -1.0):
                probe = flat.clone()
                probe[i] += sign * h
                val = float(fn(probe.view(logits.shape), targets, presence))
                fd[i] += sign * val
        fd = (fd / (2 * h)).view(logits.shape)
        denom = analytic.abs() + fd.abs()
        mask = denom > 1e-8
        rel = ((analytic - fd).abs()[mask] / denom[mask])
        assert float(rel.max()) < 1e-4

    @pytest.mark.parametrize("kind", ["adaptive", "marginal"])
    def test_batch_mean_is_pixel_weighted_mean_of_per_sample_losses(self, kind):
        rng = np.random.default_rng(7)
        fn = get_loss(kind)
        presence = torch.tensor([[True, False, True], [True, True, False], [True, True, True]])
        logits = torch.tensor(rng.standard_normal((3, 4, 4, 4)))
        targets = torch.zeros(3, 4, 4, dtype=torch.long)
        targets[0] = torch.tensor(rng.choice([0, 1, 3], size=(4, 4)))
        targets[1] = torch.tensor(rng.choice([0, 1, 2], size=(4, 4)))
        targets[2] = torch.tensor(rng.choice([0, 1, 2, 3], size=(4, 4)))
        whole = float(fn(logits, targets, presence))
        per_sample = [float(fn(logits[i : i + 1], targets[i : i + 1], presence[i : i + 1])) for i in range(3)]
        assert abs(whole - float(np.mean(per_sample))) < 1e-9

    def test_loss_config_validation(self):
        assert LossConfig("marginal").kind == "marginal"
        with pytest.raises(ValueError):
            LossConfig("dice")
