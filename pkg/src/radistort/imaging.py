"""Raster images, file I/O, bilinear sampling, and remapping.

Images are numpy arrays of shape (height, width, 3), dtype uint8, RGB.
Intermediate math runs in float64 and is quantized once on output, so every
operation is deterministic: the same inputs give byte-identical results
regardless of run or worker count.

Coordinate convention: pixel index i covers the interval [i, i+1) with its
center at i + 0.5. Width-normalized coordinates place the origin at the
image center and scale both axes by the width:

    x_norm = (x_px - w/2) / w,   y_norm = (y_px - h/2) / w
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distortion import RadialDistortion, distortion_factor, require_monotonic
from .errors import DataError, DomainError


def _validate_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DomainError(f"expected an RGB image of shape (h, w, 3), got {img.shape}")
    return img


def read_image(path) -> np.ndarray:
    """Read a PPM (binary P6, maxval 255) or PNG file into an (h, w, 3) uint8 array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if data[:2] == b"P6":
        return _decode_ppm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(data, path)
    raise DataError(f"unsupported image format in {path} (expected P6 PPM or PNG)")


def write_image(path, img) -> None:
    """Write an (h, w, 3) uint8 array as PPM or PNG, chosen by file suffix."""
    img = _validate_image(img)
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        path.write_bytes(encode_ppm(img))
    elif path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        buf = io.BytesIO()
        PILImage.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").save(buf, "PNG")
        path.write_bytes(buf.getvalue())
    else:
        raise DataError(f"unsupported output suffix {path.suffix!r} (use .ppm or .png)")


def encode_ppm(img) -> bytes:
    """Binary P6 bytes with the canonical header 'P6\\n{w} {h}\\n255\\n'."""
    img = _validate_image(img).astype(np.uint8)
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


def _decode_ppm(data: bytes, path) -> np.ndarray:
    # Header: "P6", whitespace/comments, width, height, maxval, single whitespace.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"(?:\s|#[^\n]*\n)*(\d+)").match(data, pos)
        if m is None:
            raise DataError(f"malformed PPM header in {path}")
        fields.append(int(m.group(1)))
        pos = m.end()
    w, h, maxval = fields
    if maxval != 255 or w < 1 or h < 1:
        raise DataError(f"unsupported PPM in {path}: need maxval 255, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = w * h * 3
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise DataError(f"truncated PPM payload in {path}: "
                        f"expected {expected} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def _decode_png(data: bytes, path) -> np.ndarray:
    from PIL import Image as PILImage

    try:
        with PILImage.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except Exception as exc:
        raise DataError(f"malformed PNG in {path}: {exc}") from exc


def sample_bilinear(img, x, y):
    """Bilinearly interpolate at pixel coordinates (x, y), centers at i + 0.5.

    Coordinates are clamped to [0, w] x [0, h], so samples at or beyond the
    border take the edge pixel values. Accepts scalars or arrays; returns
    float RGB of shape x.shape + (3,).
    """
    img = _validate_image(img)
    h, w = img.shape[:2]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.clip(x - 0.5, 0.0, w - 1.0)
    v = np.clip(y - 0.5, 0.0, h - 1.0)
    i0 = np.floor(u).astype(np.intp)
    j0 = np.floor(v).astype(np.intp)
    i0 = np.minimum(i0, w - 2) if w > 1 else i0
    j0 = np.minimum(j0, h - 2) if h > 1 else j0
    i1 = np.minimum(i0 + 1, w - 1)
    j1 = np.minimum(j0 + 1, h - 1)
    tx = (u - i0)[..., None]
    ty = (v - j0)[..., None]
    pix = img.astype(np.float64)
    top = pix[j0, i0] * (1.0 - tx) + pix[j0, i1] * tx
    bot = pix[j1, i0] * (1.0 - tx) + pix[j1, i1] * tx
    return top * (1.0 - ty) + bot * ty


@dataclass(frozen=True)
class RemapField:
    """Per-output-pixel source coordinates in source-pixel units.

    Coordinates outside [0, w] x [0, h] of the source mark the pixel as
    out of bounds; ``remap`` paints such pixels black.
    """

    x_src: np.ndarray
    y_src: np.ndarray

    def __post_init__(self):
        if self.x_src.shape != self.y_src.shape or self.x_src.ndim != 2:
            raise DomainError("remap field coordinate arrays must share a 2D shape")

    @property
    def width(self):
        return self.x_src.shape[1]

    @property
    def height(self):
        return self.x_src.shape[0]


def identity_field(w: int, h: int) -> RemapField:
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    return RemapField(x_src=xs + 0.5, y_src=ys + 0.5)


def build_undistort_remap(d: RadialDistortion, out_w: int, out_h: int) -> RemapField:
    """Remap field that rectifies an image distorted with coefficients d.

    Each output (undistorted) pixel center is converted to width-normalized
    coordinates, pushed through the forward distortion, and converted back
    to source-pixel coordinates: the rectified image samples the distorted
    source at the forward-distorted location. Rejects folding coefficients.
    """
    corner = float(np.hypot(0.5, out_h / (2.0 * out_w)))
    require_monotonic(d, r_max=corner)
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(float)
    xn = (xs + 0.5 - out_w / 2.0) / out_w
    yn = (ys + 0.5 - out_h / 2.0) / out_w
    r = np.hypot(xn, yn)
    factor = distortion_factor(r, d)
    return RemapField(
        x_src=xn * factor * out_w + out_w / 2.0,
        y_src=yn * factor * out_w + out_h / 2.0,
    )


def remap(img, field: RemapField) -> np.ndarray:
    """Sample img at the field's coordinates; out-of-bounds pixels are black."""
    img = _validate_image(img)
    h, w = img.shape[:2]
    out = sample_bilinear(img, field.x_src, field.y_src)
    oob = (field.x_src < 0) | (field.x_src > w) | (field.y_src < 0) | (field.y_src > h)
    out[oob] = 0.0
    return np.rint(out).clip(0, 255).astype(np.uint8)


def rectify(img, d: RadialDistortion) -> np.ndarray:
    """Undistort an image with its own dimensions as the output size."""
    img = _validate_image(img)
    h, w = img.shape[:2]
    return remap(img, build_undistort_remap(d, w, h))


def resize_bilinear(img, new_w: int, new_h: int) -> np.ndarray:
    """Plain bilinear resize (no antialiasing prefilter)."""
    img = _validate_image(img)
    if new_w < 1 or new_h < 1:
        raise DomainError("resize dimensions must be >= 1")
    h, w = img.shape[:2]
    if (new_w, new_h) == (w, h):
        return img.astype(np.uint8).copy()
    xs = (np.arange(new_w) + 0.5) * (w / new_w)
    ys = (np.arange(new_h) + 0.5) * (h / new_h)
    gx, gy = np.meshgrid(xs, ys)
    out = sample_bilinear(img, gx, gy)
    return np.rint(out).clip(0, 255).astype(np.uint8)
