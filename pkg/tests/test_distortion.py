import math

import numpy as np
import pytest

from radistort.distortion import (
    DEFAULT_R_MAX,
    CameraIntrinsics,
    CoordScale,
    InversePolynomial,
    RadialDistortion,
    apparent_from_normalized,
    distort_point,
    distortion_factor,
    inverse_coefficients,
    is_monotonic,
    manifold_k2,
    rescale,
    roundtrip_error,
    undistort_point_newton,
    undistort_point_poly,
    undistort_radius_newton,
    undistort_radius_poly,
)
from radistort.errors import DomainError, IterationError

ZERO = RadialDistortion(0.0, 0.0)


class TestDistortionFactor:
    def test_identity_with_zero_coefficients(self):
        assert distortion_factor(0.5, ZERO) == 1.0

    def test_single_coefficient(self):
        assert distortion_factor(0.5, RadialDistortion(-0.1, 0.0)) == pytest.approx(0.975)

    def test_two_coefficients_at_manifold(self):
        d = RadialDistortion(-0.7, 0.38115)
        assert distortion_factor(0.7, d) == pytest.approx(0.7485142, abs=1e-6)
        # independent evaluation of the polynomial
        expected = 1 + -0.7 * 0.7**2 + 0.38115 * 0.7**4
        assert distortion_factor(0.7, d) == pytest.approx(expected, rel=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            distortion_factor(float("nan"), ZERO)
        with pytest.raises(DomainError):
            RadialDistortion(float("inf"), 0.0)

    def test_rejects_negative_radius(self):
        with pytest.raises(DomainError):
            distortion_factor(-0.1, ZERO)

    def test_vectorized(self):
        r = np.array([0.0, 0.25, 0.5])
        d = RadialDistortion(-0.1, 0.0)
        np.testing.assert_allclose(distortion_factor(r, d), 1 - 0.1 * r**2)


class TestDistortPoint:
    def test_center_is_fixed_point(self):
        d = RadialDistortion(-0.4, 0.1212, 0.01, -0.002)
        np.testing.assert_array_equal(distort_point((0.0, 0.0), d), [0.0, 0.0])

    def test_known_value(self):
        out = distort_point((0.5, 0.0), RadialDistortion(-0.1, 0.0))
        np.testing.assert_allclose(out, [0.4875, 0.0], rtol=1e-15)

    def test_identity(self):
        np.testing.assert_allclose(distort_point((0.3, 0.4), ZERO), [0.3, 0.4], rtol=1e-15)

    def test_radial_symmetry(self):
        rng = np.random.default_rng(7)
        d = RadialDistortion(-0.3, 0.06675)
        for _ in range(50):
            p = rng.uniform(-0.5, 0.5, size=2)
            theta = rng.uniform(0, 2 * np.pi)
            c, s = np.cos(theta), np.sin(theta)
            rot = np.array([[c, -s], [s, c]])
            np.testing.assert_allclose(distort_point(rot @ p, d), rot @ distort_point(p, d),
                                       atol=1e-12)

    def test_batch(self):
        pts = np.array([[0.1, 0.2], [0.0, 0.0], [-0.3, 0.1]])
        out = distort_point(pts, RadialDistortion(-0.2, 0.0284))
        assert out.shape == (3, 2)
        np.testing.assert_allclose(out[1], [0.0, 0.0])

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            distort_point((float("nan"), 0.0), ZERO)


class TestInverseCoefficients:
    def test_zero_maps_to_zero(self):
        b = inverse_coefficients(ZERO)
        assert b.coefficients == (0.0, 0.0, 0.0, 0.0)

    def test_k1_only(self):
        b = inverse_coefficients(RadialDistortion(0.1, 0.0))
        np.testing.assert_allclose(b.coefficients, (-0.1, 0.03, -0.012, 0.0055), rtol=1e-12)

    def test_k1_k2(self):
        b = inverse_coefficients(RadialDistortion(-0.2, 0.05))
        np.testing.assert_allclose(b.coefficients, (0.2, 0.07, 0.016, -0.0095), rtol=1e-12)

    def test_k3_k4_terms(self):
        # term-by-term against the closed form with all four inputs set
        k1, k2, k3, k4 = 0.05, -0.02, 0.01, -0.003
        b = inverse_coefficients(RadialDistortion(k1, k2, k3, k4))
        np.testing.assert_allclose(
            b.coefficients,
            (-k1,
             3 * k1**2 - k2,
             -12 * k1**3 + 8 * k1 * k2 - k3,
             55 * k1**4 - 55 * k1**2 * k2 + 5 * k2**2 + 10 * k1 * k3 - k4),
            rtol=1e-12)


class TestUndistortPoly:
    def test_center_is_fixed_point(self):
        b = InversePolynomial(0.3, 0.2, 0.1, 0.05)
        np.testing.assert_array_equal(undistort_point_poly((0.0, 0.0), b), [0.0, 0.0])

    def test_zero_is_identity(self):
        b = InversePolynomial(0.0, 0.0, 0.0, 0.0)
        np.testing.assert_allclose(undistort_point_poly((0.2, -0.1), b), [0.2, -0.1],
                                   rtol=1e-15)

    def test_round_trip_radius(self):
        d = RadialDistortion(-0.3, 0.0)
        b = inverse_coefficients(d)
        p = distort_point((0.3, 0.0), d)
        back = undistort_point_poly(p, b)
        assert abs(np.linalg.norm(back) - 0.3) < 2e-4


class TestUndistortNewton:
    def test_center(self):
        d = RadialDistortion(-0.5, 0.19175)
        np.testing.assert_array_equal(undistort_point_newton((0.0, 0.0), d), [0.0, 0.0])

    def test_zero_coefficients_identity(self):
        out = undistort_point_newton((0.31, -0.17), ZERO)
        np.testing.assert_allclose(out, [0.31, -0.17], atol=1e-15)

    def test_self_consistency(self):
        d = RadialDistortion(-0.5, 0.0)
        r = undistort_radius_newton(0.4, d)
        assert abs(r * distortion_factor(r, d) - 0.4) < 1e-12

    def test_non_convergence_reports_residual(self):
        d = RadialDistortion(-0.7, 0.38115)
        with pytest.raises(IterationError) as exc:
            undistort_radius_newton(0.574, d, tol=1e-12, max_iter=1)
        assert exc.value.last_residual is not None


class TestRescale:
    def test_unit_scale_is_identity(self):
        d = RadialDistortion(-0.4, 0.1212, 0.01, 0.002)
        assert rescale(d, 1.0) == d

    def test_known_values(self):
        out = rescale(RadialDistortion(-0.4, 0.1212), 2.0)
        assert out.k1 == pytest.approx(-0.1, rel=1e-15)
        assert out.k2 == pytest.approx(0.007575, rel=1e-15)

    def test_composition(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            d = RadialDistortion(*rng.uniform(-0.5, 0.5, size=4))
            s1, s2 = rng.uniform(0.2, 3.0, size=2)
            a = rescale(rescale(d, s1), s2)
            b = rescale(d, s1 * s2)
            np.testing.assert_allclose(a.coefficients, b.coefficients, rtol=1e-12)

    def test_commutes_with_distortion(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            d = RadialDistortion(rng.uniform(-0.7, 0.3), rng.uniform(-0.1, 0.4))
            s = rng.uniform(0.25, 4.0)
            p = rng.uniform(-0.4, 0.4, size=2)
            lhs = np.linalg.norm(distort_point(s * p, rescale(d, s)))
            rhs = s * np.linalg.norm(distort_point(p, d))
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_rejects_bad_scale(self):
        with pytest.raises(DomainError):
            rescale(ZERO, 0.0)
        with pytest.raises(DomainError):
            rescale(ZERO, -1.0)


class TestApparentFromNormalized:
    def test_unit_focal_changes_only_tag(self):
        fov = math.degrees(2 * math.atan(0.5))  # f_width_units == 1
        c = CameraIntrinsics(fov)
        assert c.f_width_units == pytest.approx(1.0, rel=1e-12)
        d = RadialDistortion(0.2, -0.05, scale=CoordScale.NORMALIZED_PLANE)
        out = apparent_from_normalized(d, c)
        assert out.scale is CoordScale.WIDTH_NORMALIZED
        np.testing.assert_allclose((out.k1, out.k2), (0.2, -0.05), rtol=1e-12)

    def test_fov_sixty(self):
        c = CameraIntrinsics(60.0)
        assert c.f_width_units == pytest.approx(0.8660254, abs=1e-7)
        d = RadialDistortion(0.1, 0.0, scale=CoordScale.NORMALIZED_PLANE)
        out = apparent_from_normalized(d, c)
        assert out.k1 == pytest.approx(0.1333333, abs=1e-7)

    def test_zero_stays_zero(self):
        d = RadialDistortion(0.0, 0.0, scale=CoordScale.NORMALIZED_PLANE)
        out = apparent_from_normalized(d, CameraIntrinsics(35.0))
        assert out.coefficients == (0.0, 0.0, 0.0, 0.0)

    def test_rejects_wrong_tag(self):
        with pytest.raises(DomainError):
            apparent_from_normalized(RadialDistortion(0.1, 0.0), CameraIntrinsics(60.0))

    def test_intrinsics_validation(self):
        with pytest.raises(DomainError):
            CameraIntrinsics(0.0)
        with pytest.raises(DomainError):
            CameraIntrinsics(180.0)


class TestManifold:
    def test_zero(self):
        assert manifold_k2(0.0) == 0.0

    def test_known_values(self):
        assert manifold_k2(-0.4) == pytest.approx(0.1212, rel=1e-15)
        assert manifold_k2(-0.7) == pytest.approx(0.38115, rel=1e-15)

    def test_matches_polynomial(self):
        k1 = np.linspace(-0.7, 0.3, 21)
        np.testing.assert_allclose(manifold_k2(k1), 0.019 * k1 + 0.805 * k1**2, rtol=1e-15)


class TestRoundtripError:
    def test_zero_distortion(self):
        errors, max_err = roundtrip_error(ZERO)
        assert max_err == 0.0
        np.testing.assert_array_equal(errors, np.zeros_like(errors))

    def test_interval_extremes(self):
        # error grows large only at the k1 interval boundary
        _, err_lo = roundtrip_error(RadialDistortion(-0.7, manifold_k2(-0.7)))
        _, err_hi = roundtrip_error(RadialDistortion(0.3, manifold_k2(0.3)))
        assert max(err_lo, err_hi) <= 0.0025
        assert max(err_lo, err_hi) >= 5e-4

    def test_common_range_nearly_zero(self):
        _, max_err = roundtrip_error(RadialDistortion(-0.2, manifold_k2(-0.2)))
        assert max_err < 2e-4


class TestInversePolynomialFidelity:
    def test_poly_matches_newton_on_manifold(self):
        radii = np.linspace(1e-4, 0.574, 120)
        for k1 in np.linspace(-0.3, 0.1, 17):
            d = RadialDistortion(float(k1), float(manifold_k2(k1)))
            b = inverse_coefficients(d)
            gap = np.abs(undistort_radius_poly(radii, b)
                         - undistort_radius_newton(radii, d))
            assert gap.max() <= 1e-3


class TestMonotonicityGuard:
    def test_zero_is_monotonic(self):
        assert is_monotonic(ZERO)

    def test_folding_detected(self):
        assert not is_monotonic(RadialDistortion(-2.0, 0.0))

    def test_extreme_manifold_pair_is_monotonic(self):
        assert is_monotonic(RadialDistortion(-0.7, 0.38115), r_max=DEFAULT_R_MAX)
