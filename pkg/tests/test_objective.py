import numpy as np
import pytest
import torch

from respmoco import warp
from respmoco.errors import ConfigurationError, DimensionError
from respmoco.objective import (
    LossConfig,
    gaussian_blur3d,
    invertibility_loss,
    photometric_loss,
    total_loss,
)

SPACING = (2.0, 4.0, 4.0)


class TestLossConfig:
    def test_defaults_match_published_constants(self):
        cfg = LossConfig()
        assert cfg.alpha == 0.3
        assert cfg.epsilon == 1e-9
        assert cfg.lambda_inv == 1100.0
        assert cfg.blur_kernel_voxels == (15, 15, 15)
        assert cfg.blur_sigma_mm == (1.6, 3.2, 3.2)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigurationError):
            LossConfig(blur_kernel_voxels=(14, 15, 15))

    def test_bad_alpha_rejected(self):
        with pytest.raises(ConfigurationError):
            LossConfig(alpha=0.0)


class TestGaussianBlur:
    def test_constant_volume_unchanged(self):
        v = torch.full((20, 20, 20), 3.5, dtype=torch.float64)
        out = gaussian_blur3d(v, LossConfig(), SPACING)
        assert torch.allclose(out, v, atol=1e-12)

    def test_default_sigma_is_point_eight_voxels(self):
        # 1.6 mm / 2 mm slices and 3.2 mm / 4 mm pixels both give 0.8 voxels
        sigma_vox = [s / p for s, p in zip((1.6, 3.2, 3.2), SPACING)]
        assert sigma_vox == pytest.approx([0.8, 0.8, 0.8])

    def test_impulse_profiles_match_truncated_gaussian(self):
        n = 31
        v = torch.zeros(n, n, n, dtype=torch.float64)
        v[n // 2, n // 2, n // 2] = 1.0
        out = gaussian_blur3d(v, LossConfig(), SPACING).numpy()

        x = np.arange(15) - 7
        k = np.exp(-0.5 * (x / 0.8) ** 2)
        k /= k.sum()
        center = np.zeros(n)
        center[n // 2 - 7: n // 2 + 8] = k
        peak = k[7] ** 2
        for axis in range(3):
            idx = [n // 2] * 3
            idx[axis] = slice(None)
            profile = out[tuple(idx)]
            assert np.allclose(profile, center * peak, atol=1e-6)

    def test_mass_preserved_in_interior(self):
        torch.manual_seed(0)
        v = torch.zeros(31, 31, 31, dtype=torch.float64)
        v[10:21, 10:21, 10:21] = torch.rand(11, 11, 11, dtype=torch.float64)
        out = gaussian_blur3d(v, LossConfig(), SPACING)
        assert out.sum().item() == pytest.approx(v.sum().item(), rel=1e-12)

    def test_differentiable(self):
        v = torch.rand(16, 16, 16, dtype=torch.float64, requires_grad=True)
        gaussian_blur3d(v, LossConfig(), SPACING).sum().backward()
        assert torch.all(torch.isfinite(v.grad))


class TestPhotometricLoss:
    def test_identical_inputs_hit_epsilon_floor(self):
        cfg = LossConfig()
        v = torch.rand(6, 6, 6, dtype=torch.float64)
        loss = photometric_loss(v, v.clone(), cfg).item()
        expected = (cfg.epsilon ** 2) ** (2 * cfg.alpha / 2)  # eps^(2 alpha)
        assert loss == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(3.981e-6, rel=1e-3)

    def test_unit_difference_is_about_one(self):
        a = torch.zeros(1, 1, 1, dtype=torch.float64)
        b = torch.ones(1, 1, 1, dtype=torch.float64)
        assert photometric_loss(a, b, LossConfig()).item() == pytest.approx(1.0, rel=1e-9)

    def test_monotone_in_absolute_difference(self):
        cfg = LossConfig()
        diffs = torch.linspace(0, 5, 101, dtype=torch.float64)
        losses = [photometric_loss(torch.full((1, 1, 1), float(d)), torch.zeros(1, 1, 1, dtype=torch.float64), cfg).item()
                  for d in diffs]
        assert all(b > a for a, b in zip(losses, losses[1:]))

    def test_permutation_symmetry(self):
        torch.manual_seed(1)
        a = torch.rand(4, 5, 6, dtype=torch.float64)
        b = torch.rand(4, 5, 6, dtype=torch.float64)
        perm = torch.randperm(a.numel())
        ap = a.flatten()[perm].reshape(a.shape)
        bp = b.flatten()[perm].reshape(b.shape)
        cfg = LossConfig()
        assert photometric_loss(a, b, cfg).item() == pytest.approx(
            photometric_loss(ap, bp, cfg).item(), rel=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            photometric_loss(torch.zeros(2, 2, 2), torch.zeros(3, 2, 2), LossConfig())


class TestInvertibilityLoss:
    def test_zero_flows_give_zero_exactly(self):
        u = torch.zeros(3, 6, 6, 6, dtype=torch.float64)
        assert invertibility_loss(u, u).item() == 0.0

    def test_constant_forward_zero_backward_closed_form(self):
        # G_bwd = G0 samples exactly, so the loss is mean(u^2) over channels
        c = (1.25, -0.5, 0.75)
        u = torch.zeros(3, 12, 12, 12, dtype=torch.float64)
        for i, ci in enumerate(c):
            u[i] = ci
        loss = invertibility_loss(u, torch.zeros_like(u)).item()
        assert loss == pytest.approx(sum(ci ** 2 for ci in c) / 3, rel=1e-12)

    def test_mutually_inverse_translations_only_border_residual(self):
        d = 24
        u = torch.zeros(3, d, d, d, dtype=torch.float64)
        u[0], u[1], u[2] = 1.0, 1.0, 1.0
        loss = invertibility_loss(u, -u).item()
        assert 0.0 < loss < 3.0 / d  # clamped one-voxel band on one face per axis


class TestTotalLoss:
    def _frames_and_zero_flows(self, shape=(8, 12, 12), levels=1):
        torch.manual_seed(2)
        a = torch.rand(shape, dtype=torch.float64)
        flows = []
        for k in range(levels, -1, -1):
            s = tuple(x // 2 ** k for x in shape)
            flows.append(torch.zeros((3,) + s, dtype=torch.float64))
        return a, flows

    def test_identical_frames_zero_flows_hit_floor(self):
        cfg = LossConfig()
        a, flows = self._frames_and_zero_flows()
        total, values = total_loss(flows, flows, a, a.clone(), cfg, SPACING)
        floor = (cfg.epsilon ** 2) ** cfg.alpha
        assert values.invertibility == 0.0
        assert values.photometric == pytest.approx(len(flows) * floor, rel=1e-9)
        assert total.item() == values.total

    def test_total_is_photometric_plus_weighted_invertibility(self):
        cfg = LossConfig()
        torch.manual_seed(3)
        shape = (8, 12, 12)
        a = torch.rand(shape, dtype=torch.float64)
        b = torch.rand(shape, dtype=torch.float64)
        flows_f = [torch.randn((3,) + tuple(x // 2 for x in shape), dtype=torch.float64) * 0.3,
                   torch.randn((3,) + shape, dtype=torch.float64) * 0.3]
        flows_b = [torch.randn_like(flows_f[0]) * 0.3, torch.randn_like(flows_f[1]) * 0.3]
        _, values = total_loss(flows_f, flows_b, a, b, cfg, SPACING)
        assert values.total == pytest.approx(
            values.photometric + cfg.lambda_inv * values.invertibility, rel=1e-12)

    def test_scale_count_mismatch_rejected(self):
        a, flows = self._frames_and_zero_flows()
        with pytest.raises(DimensionError):
            total_loss(flows, flows[:-1], a, a, LossConfig(), SPACING)

    def test_gradient_matches_finite_differences(self):
        cfg = LossConfig()
        torch.manual_seed(4)
        shape = (8, 8, 8)
        a = torch.rand(shape, dtype=torch.float64)
        b = torch.rand(shape, dtype=torch.float64)
        f_full = (torch.randn((3,) + shape, dtype=torch.float64) * 0.4).requires_grad_(True)
        f_half = torch.randn((3, 4, 4, 4), dtype=torch.float64) * 0.4
        b_full = torch.randn((3,) + shape, dtype=torch.float64) * 0.4
        b_half = torch.randn((3, 4, 4, 4), dtype=torch.float64) * 0.4

        total, _ = total_loss([f_half, f_full], [b_half, b_full], a, b, cfg, SPACING)
        total.backward()

        eps = 1e-4
        for idx in [(0, 3, 3, 3), (1, 2, 5, 4), (2, 6, 1, 2)]:
            fp = f_full.detach().clone(); fp[idx] += eps
            fm = f_full.detach().clone(); fm[idx] -= eps
            lp, _ = total_loss([f_half, fp], [b_half, b_full], a, b, cfg, SPACING)
            lm, _ = total_loss([f_half, fm], [b_half, b_full], a, b, cfg, SPACING)
            fd = (lp.item() - lm.item()) / (2 * eps)
            assert f_full.grad[idx].item() == pytest.approx(fd, rel=1e-3, abs=1e-9)
