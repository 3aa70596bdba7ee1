import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mogan.losses import (
    LossWeights,
    ReconAnchor,
    adversarial_losses,
    cosine_loss,
    discriminator_total,
    generator_total,
    gradient_penalty,
    mse_loss,
    weights_for_scale,
)


class TestAdversarial:
    def test_equal_maps_zero_d_term(self):
        maps = np.array([0.3, -1.2, 5.0])
        _, d_term = adversarial_losses(maps, maps)
        assert d_term == 0.0

    def test_constant_fake_g_term(self):
        g_term, _ = adversarial_losses(np.zeros(4), np.full(4, 2.0))
        assert g_term == -2.0

    def test_hand_arithmetic(self):
        g_term, d_term = adversarial_losses(np.array([1.0, 3.0]), np.array([0.0, 2.0]))
        assert d_term == pytest.approx(-1.0)
        assert g_term == pytest.approx(-1.0)

    def test_tensor_passthrough_keeps_grad(self):
        fake = torch.randn(3, requires_grad=True)
        g_term, d_term = adversarial_losses(torch.randn(3), fake)
        assert g_term.requires_grad and d_term.requires_grad


class _ScaledSum(torch.nn.Module):
    def __init__(self, factor):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        return self.factor * x.sum()


class _LinearCritic(torch.nn.Module):
    def __init__(self, weight):
        super().__init__()
        self.weight = weight  # unit-norm flat tensor

    def forward(self, x):
        return (self.weight * x).sum()


class TestGradientPenalty:
    def test_unit_norm_linear_critic_zero_penalty(self):
        w = torch.randn(1, 1, 2, 2, dtype=torch.float64)
        w = w / w.norm()
        gp = gradient_penalty(_LinearCritic(w), torch.rand(1, 1, 2, 2).double(), torch.rand(1, 1, 2, 2).double(), seed=0)
        assert float(gp) == pytest.approx(0.0, abs=1e-12)

    def test_double_sum_penalty_one(self):
        gp = gradient_penalty(_ScaledSum(2.0), torch.zeros(1, 1, 1, 1), torch.ones(1, 1, 1, 1), seed=1)
        assert float(gp) == pytest.approx(1.0, abs=1e-6)

    def test_constant_critic_penalty_one(self):
        gp = gradient_penalty(_ScaledSum(0.0), torch.rand(1, 1, 2, 2), torch.rand(1, 1, 2, 2), seed=2)
        assert float(gp) == pytest.approx(1.0)

    def test_fake_point_flag(self):
        # literal form: gradient taken at the fake sample, no interpolation draw
        w = torch.full((1, 1, 2, 2), 0.5)
        critic = _LinearCritic(w)
        a = gradient_penalty(critic, torch.rand(1, 1, 2, 2), torch.rand(1, 1, 2, 2), seed=0, point="fake")
        b = gradient_penalty(critic, torch.rand(1, 1, 2, 2), torch.rand(1, 1, 2, 2), seed=99, point="fake")
        assert float(a) == pytest.approx(float(b))  # linear critic: same everywhere

    def test_seed_determinism(self):
        torch.manual_seed(0)
        critic = torch.nn.Sequential(torch.nn.Conv2d(1, 2, 3, padding=1), torch.nn.Tanh(), torch.nn.Conv2d(2, 1, 1))
        real, fake = torch.rand(1, 1, 5, 5), torch.rand(1, 1, 5, 5)
        a = gradient_penalty(critic, real, fake, seed=7)
        b = gradient_penalty(critic, real, fake, seed=7)
        assert float(a.detach()) == float(b.detach())

    def test_unknown_point_rejected(self):
        with pytest.raises(ValueError, match="point"):
            gradient_penalty(_ScaledSum(1.0), torch.rand(1, 1, 2, 2), torch.rand(1, 1, 2, 2), point="midpoint")


class TestCosine:
    def test_identical_zero(self):
        img = np.random.default_rng(0).uniform(0.1, 1, (4, 4, 3))
        assert cosine_loss(img, img) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_one(self):
        assert cosine_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_opposite_two(self):
        a = np.array([0.5, -0.25])
        assert cosine_loss(a, -a) == pytest.approx(2.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError, match="zero-norm"):
            cosine_loss(np.zeros(3), np.ones(3))

    @settings(max_examples=30, deadline=None)
    @given(k=st.floats(0.01, 100.0))
    def test_scale_invariance(self, k):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(0.1, 1, 12), rng.uniform(0.1, 1, 12)
        assert cosine_loss(k * a, b) == pytest.approx(cosine_loss(a, b), abs=1e-9)


class TestMse:
    def test_identical_zero(self):
        img = np.random.default_rng(0).uniform(size=(4, 4, 3))
        assert mse_loss(img, img) == 0.0

    def test_constant_offset(self):
        a = np.zeros((4, 4, 3))
        assert mse_loss(a, a + 0.5) == pytest.approx(0.25)

    def test_mask_excludes_differing_pixel(self):
        a = np.zeros((3, 3, 3))
        b = a.copy()
        b[1, 1] = 1.0
        mask = np.ones((3, 3), dtype=bool)
        mask[1, 1] = False
        assert mse_loss(a, b, mask=mask) == 0.0
        assert mse_loss(a, b) > 0.0

    def test_all_masked_rejected(self):
        a = np.zeros((2, 2, 3))
        with pytest.raises(ValueError, match="mask excludes"):
            mse_loss(a, a, mask=np.zeros((2, 2), dtype=bool))

    def test_channel_first_mask(self):
        a = torch.zeros(1, 3, 2, 2)
        b = torch.ones(1, 3, 2, 2)
        mask = torch.tensor([[True, False], [False, False]])
        assert float(mse_loss(a, b, mask=mask)) == pytest.approx(1.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            mse_loss(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))


class TestTotals:
    def test_generator_weighted_sum_hand_value(self):
        w = LossWeights(alpha=50.0, beta=10.0, lambda_gp=1.0)
        assert generator_total(1.0, 0.1, 0.01, w) == pytest.approx(6.1, abs=1e-9)

    def test_generator_zero_weights(self):
        w = LossWeights(alpha=0.0, beta=0.0, lambda_gp=1.0)
        assert generator_total(1.23, 9.0, 9.0, w) == pytest.approx(1.23)

    def test_discriminator_hand_value(self):
        w = LossWeights(alpha=50.0, beta=10.0, lambda_gp=1.0)
        assert discriminator_total(-1.0, 0.5, w) == pytest.approx(-0.5, abs=1e-9)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(alpha=-1.0)


class TestScaleSchedule:
    def test_roi_beta_10_at_two_coarsest(self):
        n = 3
        betas = {k: weights_for_scale("roi", k, n).beta for k in range(n + 1)}
        assert betas == {3: 10.0, 2: 10.0, 1: 5.0, 0: 5.0}

    def test_roi_single_scale_is_coarse(self):
        assert weights_for_scale("roi", 0, 0).beta == 10.0

    def test_background_always_10(self):
        assert all(weights_for_scale("background", k, 3).beta == 10.0 for k in range(4))

    def test_alpha_and_lambda_defaults(self):
        w = weights_for_scale("roi", 0, 2)
        assert w.alpha == 50.0 and w.lambda_gp == 1.0

    def test_unknown_branch_rejected(self):
        with pytest.raises(ValueError, match="branch"):
            weights_for_scale("middle", 0, 1)


class TestReconAnchor:
    def test_amplitudes_all_zero(self):
        anchor = ReconAnchor(num_levels=4)
        assert anchor.amplitudes == [0.0, 0.0, 0.0, 0.0]
