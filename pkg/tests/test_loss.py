import numpy as np
import pytest

from radistort.errors import DomainError
from radistort.loss import (
    RadiusGrid,
    default_grid,
    distortion_curve,
    distortion_loss,
    loss_gradient,
    split_loss,
)


def brute_force_loss(y, yhat, radii):
    """Independent plain-Python evaluation of the summed curve discrepancy."""
    total = 0.0
    for r in radii:
        p_true = r * (1 + y[0] * r**2 + y[1] * r**4)
        p_pred = r * (1 + yhat[0] * r**2 + yhat[1] * r**4)
        total += (p_true - p_pred) ** 2
    return total


class TestDefaultGrid:
    def test_first_radius(self):
        assert default_grid().radii[0] == pytest.approx(0.0109375, rel=1e-15)

    def test_last_radius(self):
        assert default_grid().radii[-1] == pytest.approx(0.7, rel=1e-15)

    def test_length(self):
        assert len(default_grid()) == 64


class TestRadiusGridValidation:
    def test_too_few(self):
        with pytest.raises(DomainError):
            RadiusGrid(np.linspace(0.1, 0.7, 4))

    def test_not_increasing(self):
        with pytest.raises(DomainError):
            RadiusGrid(np.array([0.1, 0.3, 0.2, 0.4, 0.5, 0.55, 0.6, 0.7]))

    def test_out_of_interval(self):
        with pytest.raises(DomainError):
            RadiusGrid(np.linspace(0.0, 0.7, 16))  # includes 0
        with pytest.raises(DomainError):
            RadiusGrid(np.linspace(0.1, 0.8, 16))  # beyond 0.7


class TestDistortionLoss:
    def test_zero_when_equal(self):
        assert distortion_loss((-0.2, 0.05), (-0.2, 0.05)) == 0.0

    def test_symmetry(self):
        y, yhat = (-0.3, 0.07), (0.1, -0.02)
        assert distortion_loss(y, yhat) == distortion_loss(yhat, y)

    def test_k1_only_closed_form(self):
        grid = default_grid()
        k = 0.17
        expected = k**2 * np.sum(grid.radii**6)
        assert distortion_loss((0.0, 0.0), (k, 0.0), grid) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force(self):
        grid = default_grid()
        rng = np.random.default_rng(11)
        for _ in range(25):
            y = tuple(rng.uniform(-0.7, 0.4, size=2))
            yhat = tuple(rng.uniform(-0.7, 0.4, size=2))
            assert distortion_loss(y, yhat, grid) == pytest.approx(
                brute_force_loss(y, yhat, grid.radii), rel=1e-12)

    def test_quadratic_homogeneity(self):
        grid = default_grid()
        k = -0.23
        small = distortion_loss((0.0, 0.0), (k, 0.0), grid)
        large = distortion_loss((0.0, 0.0), (2 * k, 0.0), grid)
        assert large == pytest.approx(4 * small, rel=1e-12)

    def test_zero_implies_equal_curves_on_grid(self):
        grid = default_grid()
        y, yhat = (-0.15, 0.031), (-0.15, 0.031)
        assert distortion_loss(y, yhat, grid) == 0.0
        np.testing.assert_array_equal(distortion_curve(grid.radii, y),
                                      distortion_curve(grid.radii, yhat))


class TestSplitLoss:
    def test_zero_triple_when_equal(self):
        assert split_loss((-0.1, 0.02), (-0.1, 0.02)) == (0.0, 0.0, 0.0)

    def test_k1_part_vanishes_when_k1_correct(self):
        y = (-0.2, 0.05)
        yhat = (-0.2, 0.11)
        l_k1, l_k2, total = split_loss(y, yhat)
        assert l_k1 == 0.0
        assert total == l_k2 > 0.0

    def test_matches_brute_force(self):
        grid = default_grid()
        y, yhat = (-0.2, 0.05), (-0.1, 0.08)
        l_k1, l_k2, total = split_loss(y, yhat, grid)
        assert l_k1 == pytest.approx(brute_force_loss(y, (yhat[0], y[1]), grid.radii),
                                     rel=1e-12)
        assert l_k2 == pytest.approx(brute_force_loss(y, (y[0], yhat[1]), grid.radii),
                                     rel=1e-12)
        assert total == l_k1 + l_k2

    def test_total_is_exact_sum(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            y = tuple(rng.uniform(-0.7, 0.4, size=2))
            yhat = tuple(rng.uniform(-0.7, 0.4, size=2))
            l_k1, l_k2, total = split_loss(y, yhat)
            assert total == l_k1 + l_k2


class TestLossGradient:
    def test_zero_at_minimum(self):
        assert loss_gradient((-0.3, 0.07), (-0.3, 0.07)) == (0.0, 0.0)

    def test_matches_central_differences(self):
        grid = default_grid()
        rng = np.random.default_rng(42)
        h = 1e-6
        for _ in range(120):
            y = tuple(rng.uniform(-0.7, 0.4, size=2))
            yhat = tuple(rng.uniform(-0.7, 0.4, size=2))
            g1, g2 = loss_gradient(y, yhat, grid)
            fd1 = (split_loss(y, (yhat[0] + h, yhat[1]), grid)[2]
                   - split_loss(y, (yhat[0] - h, yhat[1]), grid)[2]) / (2 * h)
            fd2 = (split_loss(y, (yhat[0], yhat[1] + h), grid)[2]
                   - split_loss(y, (yhat[0], yhat[1] - h), grid)[2]) / (2 * h)
            for analytic, numeric in ((g1, fd1), (g2, fd2)):
                scale = max(abs(analytic), abs(numeric), 1e-8)
                assert abs(analytic - numeric) / scale <= 1e-6

    def test_separability(self):
        grid = default_grid()
        y = (-0.25, 0.04)
        g1_a, _ = loss_gradient(y, (0.1, -0.3), grid)
        g1_b, _ = loss_gradient(y, (0.1, 0.25), grid)
        assert g1_a == g1_b
        _, g2_a = loss_gradient(y, (-0.6, 0.12), grid)
        _, g2_b = loss_gradient(y, (0.3, 0.12), grid)
        assert g2_a == g2_b
