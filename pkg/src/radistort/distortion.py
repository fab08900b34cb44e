"""Closed-form radial distortion math.

The polynomial model displaces a point radially by the factor

    d(r) = 1 + k1*r^2 + k2*r^4 + k3*r^6 + k4*r^8

where r is the distance from the image center. Coefficients are meaningful
only together with the coordinate scale they were fitted at; a
:class:`RadialDistortion` therefore carries a scale tag. The two scales used
here are the normalized image plane (Z=1 pinhole plane) and width-normalized
image coordinates (image width scaled to 1), the latter being resolution-
and focal-length-independent.

Coefficients convert between scales with ``rescale``: radii scaled by s need
coefficients divided by s^2, s^4, s^6, s^8.

The inverse radial map is approximated by a four-coefficient polynomial of
the same shape (``inverse_coefficients`` / ``undistort_point_poly``); a
Newton solver (``undistort_point_newton``) provides the exact inverse and
serves as the reference the polynomial approximation is measured against.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FoldedDistortionError, IterationError

# Corner radius of a width-1, 16:9 frame (hypot(0.5, 0.28125) = 0.57367,
# kept at the documented 0.5738 which slightly supersets the true corner).
DEFAULT_R_MAX = 0.5738

# Empirical relation tying k2 to k1 for many real lenses.
MANIFOLD_A = 0.019
MANIFOLD_B = 0.805


class CoordScale(enum.Enum):
    """Coordinate system a set of coefficients applies to."""

    NORMALIZED_PLANE = "normalized_plane"
    WIDTH_NORMALIZED = "width_normalized"


def _require_finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"{name} must be finite")


@dataclass(frozen=True)
class RadialDistortion:
    """Forward polynomial coefficients at a declared coordinate scale."""

    k1: float
    k2: float
    k3: float = 0.0
    k4: float = 0.0
    scale: CoordScale = CoordScale.WIDTH_NORMALIZED

    def __post_init__(self):
        _require_finite("distortion coefficients", self.k1, self.k2, self.k3, self.k4)

    @property
    def coefficients(self):
        return (self.k1, self.k2, self.k3, self.k4)


@dataclass(frozen=True)
class InversePolynomial:
    """Coefficients of the polynomial approximation to the inverse radial map."""

    b1: float
    b2: float
    b3: float
    b4: float

    def __post_init__(self):
        _require_finite("inverse coefficients", self.b1, self.b2, self.b3, self.b4)

    @property
    def coefficients(self):
        return (self.b1, self.b2, self.b3, self.b4)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics given as a horizontal field of view in degrees.

    The focal length is expressed in image-width units: a width-1 image
    spans x in [-0.5, 0.5], so f = 0.5 / tan(fov_h / 2).
    """

    fov_h: float

    def __post_init__(self):
        if not (np.isfinite(self.fov_h) and 0.0 < self.fov_h < 180.0):
            raise DomainError("fov_h must lie in (0, 180) degrees")

    @property
    def f_width_units(self) -> float:
        return 0.5 / math.tan(math.radians(self.fov_h) / 2.0)


def distortion_factor(r, d: RadialDistortion):
    """Evaluate d(r) = 1 + k1*r^2 + k2*r^4 + k3*r^6 + k4*r^8.

    Accepts a scalar or an array of radii; all-zero coefficients return
    exactly 1.
    """
    r = np.asarray(r, dtype=float)
    _require_finite("radius", r)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    r2 = r * r
    r4 = r2 * r2
    out = 1.0 + d.k1 * r2 + d.k2 * r4 + d.k3 * r4 * r2 + d.k4 * r4 * r4
    return float(out) if out.ndim == 0 else out


def distort_point(p, d: RadialDistortion):
    """Apply forward distortion to points of shape (..., 2).

    Each point is scaled by distortion_factor(|p|), so the distorted radius
    is d(r) * r and the center is a fixed point.
    """
    p = np.asarray(p, dtype=float)
    _require_finite("point", p)
    r = np.linalg.norm(p, axis=-1)
    factor = distortion_factor(r, d)
    out = p * np.expand_dims(np.asarray(factor, dtype=float), -1)
    return out


def inverse_coefficients(d: RadialDistortion) -> InversePolynomial:
    """Closed-form four-coefficient inverse of the polynomial model.

    b1 = -k1
    b2 = 3*k1^2 - k2
    b3 = -12*k1^3 + 8*k1*k2 - k3
    b4 = 55*k1^4 - 55*k1^2*k2 + 5*k2^2 + 10*k1*k3 - k4
    """
    k1, k2, k3, k4 = d.coefficients
    b1 = -k1
    b2 = 3.0 * k1**2 - k2
    b3 = -12.0 * k1**3 + 8.0 * k1 * k2 - k3
    b4 = 55.0 * k1**4 - 55.0 * k1**2 * k2 + 5.0 * k2**2 + 10.0 * k1 * k3 - k4
    return InversePolynomial(b1, b2, b3, b4)


def undistort_radius_poly(r_d, b: InversePolynomial):
    """Inverse radial map via the polynomial approximation, on radii."""
    r_d = np.asarray(r_d, dtype=float)
    _require_finite("radius", r_d)
    r2 = r_d * r_d
    r4 = r2 * r2
    factor = 1.0 + b.b1 * r2 + b.b2 * r4 + b.b3 * r4 * r2 + b.b4 * r4 * r4
    out = r_d * factor
    return float(out) if out.ndim == 0 else out


def undistort_point_poly(p_d, b: InversePolynomial):
    """Apply the polynomial inverse map to points of shape (..., 2)."""
    p_d = np.asarray(p_d, dtype=float)
    _require_finite("point", p_d)
    r_d = np.linalg.norm(p_d, axis=-1)
    r2 = r_d * r_d
    r4 = r2 * r2
    factor = 1.0 + b.b1 * r2 + b.b2 * r4 + b.b3 * r4 * r2 + b.b4 * r4 * r4
    return p_d * np.expand_dims(np.asarray(factor, dtype=float), -1)


def undistort_radius_newton(r_d, d: RadialDistortion, tol: float = 1e-12,
                            max_iter: int = 50):
    """Exact inverse on radii: solve r * d(r) = r_d by Newton iteration.

    Initialized at r = r_d. Requires the forward map to be monotonic over
    the radii of interest; raises IterationError if the residual does not
    reach tol within max_iter steps.
    """
    r_d = np.asarray(r_d, dtype=float)
    _require_finite("radius", r_d)
    k1, k2, k3, k4 = d.coefficients
    r = np.array(r_d, dtype=float)
    for _ in range(max_iter):
        r2 = r * r
        r4 = r2 * r2
        f = 1.0 + k1 * r2 + k2 * r4 + k3 * r4 * r2 + k4 * r4 * r4
        g = r * f - r_d
        if np.all(np.abs(g) <= tol):
            return float(r) if r.ndim == 0 else r
        # g'(r) = d(r) + r * d'(r)
        dg = f + r2 * (2.0 * k1 + 4.0 * k2 * r2 + 6.0 * k3 * r4 + 8.0 * k4 * r4 * r2)
        r = r - g / dg
    r2 = r * r
    r4 = r2 * r2
    resid = np.max(np.abs(r * (1.0 + k1 * r2 + k2 * r4 + k3 * r4 * r2 + k4 * r4 * r4) - r_d))
    raise IterationError(
        f"Newton undistortion did not converge in {max_iter} iterations "
        f"(last residual {resid:.3e})",
        last_residual=float(resid),
    )


def undistort_point_newton(p_d, d: RadialDistortion, tol: float = 1e-12,
                           max_iter: int = 50):
    """Exact inverse map on points of shape (..., 2)."""
    p_d = np.asarray(p_d, dtype=float)
    _require_finite("point", p_d)
    r_d = np.linalg.norm(p_d, axis=-1)
    r = undistort_radius_newton(r_d, d, tol=tol, max_iter=max_iter)
    factor = np.where(r_d > 0, np.asarray(r, dtype=float) / np.where(r_d > 0, r_d, 1.0), 1.0)
    return p_d * np.expand_dims(factor, -1)


def rescale(d: RadialDistortion, s: float) -> RadialDistortion:
    """Re-express coefficients for radii multiplied by s.

    distort(s*r, rescale(d, s)) == s * distort(r, d) exactly.
    """
    if not (np.isfinite(s) and s > 0):
        raise DomainError("scale factor must be positive and finite")
    s2 = s * s
    return RadialDistortion(
        k1=d.k1 / s2,
        k2=d.k2 / s2**2,
        k3=d.k3 / s2**3,
        k4=d.k4 / s2**4,
        scale=d.scale,
    )


def apparent_from_normalized(d: RadialDistortion, c: CameraIntrinsics) -> RadialDistortion:
    """Convert normalized-plane coefficients to width-normalized ones.

    Width-normalized radii are f (in width units) times normalized-plane
    radii, so this is rescale(d, f) with the tag switched.
    """
    if d.scale is not CoordScale.NORMALIZED_PLANE:
        raise DomainError("apparent_from_normalized expects normalized-plane coefficients")
    scaled = rescale(d, c.f_width_units)
    return RadialDistortion(scaled.k1, scaled.k2, scaled.k3, scaled.k4,
                            scale=CoordScale.WIDTH_NORMALIZED)


def manifold_k2(k1):
    """k2 value on the empirical one-dimensional lens manifold for a given k1."""
    k1 = np.asarray(k1, dtype=float)
    _require_finite("k1", k1)
    out = MANIFOLD_A * k1 + MANIFOLD_B * k1 * k1
    return float(out) if out.ndim == 0 else out


def is_monotonic(d: RadialDistortion, r_max: float = DEFAULT_R_MAX,
                 samples: int = 256) -> bool:
    """True when r * d(r) is strictly increasing on [0, r_max].

    Sampled check; coefficient pairs that fold the image have no usable
    inverse map and must be rejected before building remaps.
    """
    r = np.linspace(0.0, r_max, samples)
    g = r * distortion_factor(r, d)
    return bool(np.all(np.diff(g) > 0.0))


def require_monotonic(d: RadialDistortion, r_max: float = DEFAULT_R_MAX):
    if not is_monotonic(d, r_max):
        raise FoldedDistortionError(
            f"distortion (k1={d.k1:.9g}, k2={d.k2:.9g}) folds the image on [0, {r_max:g}]"
        )


def roundtrip_error(d: RadialDistortion, radii=None):
    """Residual of the inverse-polynomial approximation along the pipeline.

    Synthetic crops are warped by the inverse polynomial and labelled with
    the forward coefficients, so the error at an ideal radius r is

        |undistort_poly(distort(r)) - r|

    Returns (per-radius errors, max error). Radii default to a 257-point
    uniform grid on [0, DEFAULT_R_MAX].
    """
    if radii is None:
        radii = np.linspace(0.0, DEFAULT_R_MAX, 257)
    radii = np.asarray(radii, dtype=float)
    b = inverse_coefficients(d)
    r_d = radii * distortion_factor(radii, d)
    errors = np.abs(undistort_radius_poly(r_d, b) - radii)
    return errors, float(errors.max())
