import math

import numpy as np
import pytest
import torch

from gradcheck import check_gradient
from priorlens.losses import LossWeights, l1_loss, perceptual_loss, total_loss
from priorlens.priors import prior_loss


def tiny_pyramid(seed, channels=(2, 3, 4), base=4):
    rng = np.random.default_rng(seed)
    levels = []
    size = base
    for ch in channels:
        levels.append(torch.from_numpy(rng.standard_normal((1, ch, size, size))))
        size //= 2
    return levels


@pytest.fixture
def conv_phi():
    """Small fixed feature extractor standing in for the teacher."""
    torch.manual_seed(3)
    conv = torch.nn.Conv2d(2, 3, 3, padding=1, stride=2).double()
    for p in conv.parameters():
        p.requires_grad_(False)
    return conv


class TestL1Loss:
    def test_identity_zero(self):
        x = torch.rand(3, 8, 8)
        assert float(l1_loss(x, x)) == 0.0

    def test_constant_offset_convention(self):
        # uniform +0.1 over three channels, normalized by H*W only -> 0.3
        gt = torch.full((3, 16, 16), 0.4)
        pred = gt + 0.1
        assert math.isclose(float(l1_loss(pred, gt)), 0.3, rel_tol=1e-6)

    def test_one_pixel_convention_oracle(self):
        gt = torch.tensor([[[0.2]], [[0.4]], [[0.6]]])
        pred = torch.tensor([[[0.5]], [[0.1]], [[0.6]]])
        # |0.3| + |0.3| + 0 over one pixel -> 0.6
        assert math.isclose(float(l1_loss(pred, gt)), 0.6, rel_tol=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            l1_loss(torch.rand(3, 4, 4), torch.rand(3, 8, 8))

    def test_gradient_vs_finite_differences(self, rng):
        gt = torch.from_numpy(rng.standard_normal((1, 2, 4, 4)))
        pred0 = gt + torch.from_numpy(
            rng.uniform(0.05, 0.5, size=(1, 2, 4, 4)) * np.sign(rng.standard_normal((1, 2, 4, 4)))
        )
        check_gradient(lambda p: l1_loss(p, gt), pred0, tol=1e-3)


class TestPerceptualLoss:
    def test_identity_zero(self, conv_phi):
        x = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        assert float(perceptual_loss(x, x, conv_phi)) == 0.0

    def test_symmetric_in_arguments(self, conv_phi, rng):
        a = torch.from_numpy(rng.random((1, 2, 8, 8)))
        b = torch.from_numpy(rng.random((1, 2, 8, 8)))
        assert math.isclose(
            float(perceptual_loss(a, b, conv_phi)),
            float(perceptual_loss(b, a, conv_phi)),
            rel_tol=1e-12,
        )

    def test_matches_scripted_oracle(self, trained_teacher, rng):
        teacher, _ = trained_teacher
        a = torch.from_numpy(rng.random((1, 3, 64, 64))).float()
        b = torch.from_numpy(rng.random((1, 3, 64, 64))).float()
        value = float(perceptual_loss(a, b, teacher.perceptual_features))
        with torch.no_grad():
            fa = teacher.perceptual_features(a).numpy().astype(np.float64)
            fb = teacher.perceptual_features(b).numpy().astype(np.float64)
        expected = np.sqrt(((fb - fa) ** 2).sum()) / fa[0].size
        assert abs(value - expected) < 1e-6

    def test_gradient_vs_finite_differences(self, conv_phi, rng):
        gt = torch.from_numpy(rng.standard_normal((1, 2, 4, 4)))
        pred0 = torch.from_numpy(rng.standard_normal((1, 2, 4, 4)))
        check_gradient(lambda p: perceptual_loss(p, gt, conv_phi), pred0, tol=1e-3)


class TestTotalLoss:
    def test_zero_weights_reduce_to_l1(self, conv_phi, rng):
        pred = torch.from_numpy(rng.random((1, 2, 8, 8)))
        gt = torch.from_numpy(rng.random((1, 2, 8, 8)))
        p = tiny_pyramid(20)
        total, _ = total_loss(
            pred, gt, p, [lev.clone() for lev in p], conv_phi,
            LossWeights(alpha=0.0, beta=0.0),
        )
        assert float(total) == float(l1_loss(pred, gt))

    def test_identity_inputs_zero(self, conv_phi):
        x = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        p = tiny_pyramid(21)
        total, breakdown = total_loss(
            x, x.clone(), p, [lev.clone() for lev in p], conv_phi, LossWeights()
        )
        assert float(total) == 0.0
        assert breakdown["prior"] == 0.0

    def test_composition_matches_hand_assembly(self, conv_phi, rng):
        pred = torch.from_numpy(rng.random((1, 2, 8, 8)))
        gt = torch.from_numpy(rng.random((1, 2, 8, 8)))
        f_pri, f_gt = tiny_pyramid(22), tiny_pyramid(23)
        weights = LossWeights(alpha=0.01, beta=0.1)
        total, breakdown = total_loss(pred, gt, f_pri, f_gt, conv_phi, weights)
        expected = (
            float(l1_loss(pred, gt))
            + 0.01 * float(perceptual_loss(pred, gt, conv_phi))
            + 0.1 * float(prior_loss(f_pri, f_gt))
        )
        assert abs(float(total) - expected) < 1e-7
        assert breakdown["prior"] is not None

    def test_linearity_in_weights(self, conv_phi, rng):
        pred = torch.from_numpy(rng.random((1, 2, 8, 8)))
        gt = torch.from_numpy(rng.random((1, 2, 8, 8)))
        f_pri, f_gt = tiny_pyramid(24), tiny_pyramid(25)
        base, _ = total_loss(pred, gt, f_pri, f_gt, conv_phi, LossWeights(0.0, 0.0))
        weighted, _ = total_loss(pred, gt, f_pri, f_gt, conv_phi, LossWeights(0.03, 0.2))
        expected_delta = (
            0.03 * float(perceptual_loss(pred, gt, conv_phi))
            + 0.2 * float(prior_loss(f_pri, f_gt))
        )
        assert abs((float(weighted) - float(base)) - expected_delta) < 1e-7

    def test_distillation_disabled_omits_prior(self, conv_phi, rng):
        pred = torch.from_numpy(rng.random((1, 2, 8, 8)))
        gt = torch.from_numpy(rng.random((1, 2, 8, 8)))
        total, breakdown = total_loss(
            pred, gt, None, None, conv_phi, LossWeights(), use_distillation=False
        )
        assert breakdown["prior"] is None
        assert math.isclose(
            float(total),
            float(l1_loss(pred, gt)) + 0.01 * float(perceptual_loss(pred, gt, conv_phi)),
            rel_tol=1e-12,
        )

    def test_missing_pyramids_rejected_when_active(self, conv_phi):
        x = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        with pytest.raises(ValueError, match="prior"):
            total_loss(x, x, None, None, conv_phi, LossWeights(), use_distillation=True)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(alpha=-0.1).validate()
