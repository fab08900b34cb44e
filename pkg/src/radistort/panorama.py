"""Synthetic distorted crops from equirectangular panoramas.

A crop is rendered by casting a ray for every output pixel: the pixel is
treated as a coordinate of the *distorted* image, mapped through the
inverse distortion polynomial to its ideal pinhole position, lifted to a
3D ray, rotated by the sampled camera orientation, and looked up in the
panorama. The rendered image therefore exhibits forward distortion with
exactly the sampled (k1, k2) in width-normalized terms, which become its
regression labels.

World/camera frame: x right, y down, z forward. The equirectangular
panorama maps longitude atan2(x, z) in [-pi, pi] to columns [0, w] and
latitude asin(y) in [-pi/2, pi/2] to rows [0, h], so the top row is the
zenith and the horizontal seam sits at longitude +-pi.

Sampling is counter-based: every sample's RNG is keyed by (global seed,
index) through a 64-bit mix, so datasets are reproducible regardless of
generation order or worker count.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distortion import (
    DEFAULT_R_MAX,
    CameraIntrinsics,
    InversePolynomial,
    RadialDistortion,
    inverse_coefficients,
    is_monotonic,
    manifold_k2,
)
from .errors import DataError, DomainError, NumericError
from .imaging import encode_ppm, read_image, resize_bilinear, write_image

MANIFEST_FORMAT = "radistort-dataset"
MANIFEST_VERSION = 1

_M64 = (1 << 64) - 1


@dataclass(frozen=True)
class SamplingSpec:
    """Camera/distortion parameter distributions for crop generation."""

    pan_range: tuple = (-35.0, 35.0)
    tilt_range: tuple = (-15.0, 0.0)
    roll_range: tuple = (-2.0, 2.0)
    fov_range: tuple = (15.0, 60.0)
    k1_range: tuple = (-0.7, 0.3)
    k2_sigma: float = 0.02
    render_size: tuple = (256, 144)
    output_size: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        for name in ("pan_range", "tilt_range", "roll_range", "fov_range", "k1_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise DomainError(f"{name} must be a finite (lo, hi) pair")
        if self.k2_sigma < 0:
            raise DomainError("k2_sigma must be >= 0")
        for name in ("render_size", "output_size"):
            w, h = getattr(self, name)
            if w < 1 or h < 1:
                raise DomainError(f"{name} must be >= 1 in both dimensions")

    def header_echo(self) -> dict:
        return {
            "pan_range": list(self.pan_range),
            "tilt_range": list(self.tilt_range),
            "roll_range": list(self.roll_range),
            "fov_range": list(self.fov_range),
            "k1_range": list(self.k1_range),
            "k2_sigma": self.k2_sigma,
            "render_size": list(self.render_size),
            "output_size": list(self.output_size),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CropParams:
    """Sampled camera pose, optics, and ground-truth labels for one crop."""

    pan: float
    tilt: float
    roll: float
    fov_h: float
    k1: float
    k2: float
    index: int
    seed: int

    def distortion(self) -> RadialDistortion:
        return RadialDistortion(self.k1, self.k2)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def _sample_rng(global_seed: int, index: int):
    """Counter-style generator keyed by a 64-bit mix of (seed, index)."""
    lo = _splitmix64((global_seed & _M64) ^ _splitmix64(index & _M64))
    hi = _splitmix64(lo)
    rng = np.random.Generator(np.random.Philox(key=lo | (hi << 64)))
    return rng, lo


def sample_crop_params(spec: SamplingSpec, index: int) -> CropParams:
    """Draw one sample; a pure function of (spec.seed, index).

    k2 sits on the lens manifold plus Normal(0, sigma) noise. Draws whose
    (k1, k2) fold the image on [0, 0.5738], or whose noise exceeds 6 sigma,
    are rejected and redrawn from the same per-sample stream.
    """
    rng, sample_seed = _sample_rng(spec.seed, index)
    pan = rng.uniform(*spec.pan_range)
    tilt = rng.uniform(*spec.tilt_range)
    roll = rng.uniform(*spec.roll_range)
    fov = rng.uniform(*spec.fov_range)
    for _ in range(1000):
        k1 = rng.uniform(*spec.k1_range)
        noise = rng.normal(0.0, spec.k2_sigma) if spec.k2_sigma > 0 else 0.0
        if abs(noise) > 6.0 * spec.k2_sigma:
            continue
        k2 = manifold_k2(k1) + noise
        if is_monotonic(RadialDistortion(k1, k2), r_max=DEFAULT_R_MAX):
            return CropParams(pan=pan, tilt=tilt, roll=roll, fov_h=fov,
                              k1=k1, k2=float(k2), index=index, seed=sample_seed)
    raise NumericError(f"could not draw a non-folding (k1, k2) for sample {index}")


def rotation_matrix(pan: float, tilt: float, roll: float) -> np.ndarray:
    """Camera-to-world rotation R = R_pan(y) @ R_tilt(x) @ R_roll(z), degrees."""
    p, t, r = (math.radians(a) for a in (pan, tilt, roll))
    cp, sp = math.cos(p), math.sin(p)
    ct, st = math.cos(t), math.sin(t)
    cr, sr = math.cos(r), math.sin(r)
    r_pan = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    r_tilt = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
    r_roll = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return r_pan @ r_tilt @ r_roll


def ray_for_pixel(px, c: CameraIntrinsics, inv: InversePolynomial, out_size) -> np.ndarray:
    """Unit camera-frame ray(s) for distorted-image pixel coordinates.

    px has shape (..., 2) in pixel units of an out_size = (w, h) image.
    The pixel is undistorted in width-normalized coordinates, divided by
    the focal length to reach the Z=1 plane, and normalized.
    """
    w, h = out_size
    px = np.asarray(px, dtype=float)
    xn = (px[..., 0] - w / 2.0) / w
    yn = (px[..., 1] - h / 2.0) / w
    pu = undistort_stack(xn, yn, inv)
    f = c.f_width_units
    rays = np.stack([pu[..., 0] / f, pu[..., 1] / f, np.ones_like(xn)], axis=-1)
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def undistort_stack(xn, yn, inv: InversePolynomial):
    """Inverse polynomial applied to stacked normalized coordinates."""
    r2 = xn * xn + yn * yn
    r4 = r2 * r2
    factor = 1.0 + inv.b1 * r2 + inv.b2 * r4 + inv.b3 * r4 * r2 + inv.b4 * r4 * r4
    return np.stack([xn * factor, yn * factor], axis=-1)


def _sample_equirect(pano: np.ndarray, u_px, v_px) -> np.ndarray:
    """Bilinear panorama sampling with horizontal wraparound, vertical clamp."""
    h, w = pano.shape[:2]
    u = np.asarray(u_px, dtype=float) - 0.5
    v = np.clip(np.asarray(v_px, dtype=float) - 0.5, 0.0, h - 1.0)
    i0f = np.floor(u)
    tx = (u - i0f)[..., None]
    i0 = i0f.astype(np.intp) % w
    i1 = (i0 + 1) % w
    j0 = np.floor(v).astype(np.intp)
    j0 = np.minimum(j0, h - 2) if h > 1 else j0
    j1 = np.minimum(j0 + 1, h - 1)
    ty = (v - j0)[..., None]
    pix = pano.astype(np.float64)
    top = pix[j0, i0] * (1.0 - tx) + pix[j0, i1] * tx
    bot = pix[j1, i0] * (1.0 - tx) + pix[j1, i1] * tx
    return top * (1.0 - ty) + bot * ty


def equirect_lookup(pano: np.ndarray, ray) -> np.ndarray:
    """RGB for unit ray(s) of shape (..., 3) in a full 360x180 panorama."""
    ray = np.asarray(ray, dtype=float)
    h, w = pano.shape[:2]
    lon = np.arctan2(ray[..., 0], ray[..., 2])
    lat = np.arcsin(np.clip(ray[..., 1], -1.0, 1.0))
    u_px = (lon + np.pi) / (2.0 * np.pi) * w
    v_px = (lat + np.pi / 2.0) / np.pi * h
    return _sample_equirect(pano, u_px, v_px)


def render_crop(pano: np.ndarray, p: CropParams, render_size=None,
                output_size=None) -> np.ndarray:
    """Render one distorted crop; deterministic in (pano, p, sizes)."""
    rw, rh = render_size if render_size is not None else (256, 144)
    c = CameraIntrinsics(p.fov_h)
    d = p.distortion()
    corner = float(np.hypot(0.5, rh / (2.0 * rw)))
    if not is_monotonic(d, r_max=corner):
        raise NumericError(f"crop {p.index}: (k1, k2) folds the image")
    inv = inverse_coefficients(d)
    ys, xs = np.mgrid[0:rh, 0:rw].astype(float)
    px = np.stack([xs + 0.5, ys + 0.5], axis=-1)
    rays = ray_for_pixel(px, c, inv, (rw, rh))
    world = rays @ rotation_matrix(p.pan, p.tilt, p.roll).T
    colors = equirect_lookup(pano, world)
    img = np.rint(colors).clip(0, 255).astype(np.uint8)
    if output_size is not None and tuple(output_size) != (rw, rh):
        img = resize_bilinear(img, output_size[0], output_size[1])
    return img


# ---------------------------------------------------------------------------
# Procedural panorama

@dataclass(frozen=True)
class MarkerLine:
    """A color-keyed great circle: plane normal through the sphere center."""

    name: str
    normal: tuple
    color: tuple


PANORAMA_MARKERS = (
    MarkerLine("meridian0", (1.0, 0.0, 0.0), (235, 40, 40)),
    MarkerLine("horizon", (0.0, 1.0, 0.0), (235, 40, 235)),
    MarkerLine("meridian25", (math.cos(math.radians(25)), 0.0, -math.sin(math.radians(25))),
               (40, 220, 235)),
    MarkerLine("tilted12", (0.0, math.cos(math.radians(12)), -math.sin(math.radians(12))),
               (245, 150, 40)),
)

_MARKER_HALF_WIDTH_DEG = 0.25
_GRATICULE_STEP_DEG = 15.0
_GRATICULE_HALF_WIDTH_DEG = 0.12
_STRIPE_STEP_DEG = 10.0


def procedural_panorama(w: int, h: int, style: str = "field") -> np.ndarray:
    """Deterministic equirectangular test pattern (requires w == 2h).

    A grass-green gradient below the horizon with longitude mowing stripes,
    a sky gradient above, a low-contrast latitude/longitude graticule, and
    the high-contrast color-keyed marker great circles used for
    straightness verification.
    """
    if w != 2 * h:
        raise DomainError("equirectangular panorama needs w == 2h")
    if style != "field":
        raise DomainError(f"unknown panorama style {style!r}")
    lon = ((np.arange(w) + 0.5) / w) * 2.0 * np.pi - np.pi
    lat = ((np.arange(h) + 0.5) / h) * np.pi - np.pi / 2.0
    lon_g, lat_g = np.meshgrid(lon, lat)
    y = np.sin(lat_g)
    x = np.cos(lat_g) * np.sin(lon_g)
    z = np.cos(lat_g) * np.cos(lon_g)

    img = np.zeros((h, w, 3), dtype=np.float64)
    ground = lat_g > 0  # y points down: positive latitude is below the horizon
    tg = np.clip(lat_g / (np.pi / 2.0), 0.0, 1.0)[..., None]
    ts = np.clip(-lat_g / (np.pi / 2.0), 0.0, 1.0)[..., None]
    field_col = (1.0 - tg) * np.array([64.0, 122.0, 52.0]) + tg * np.array([92.0, 150.0, 70.0])
    sky_col = (1.0 - ts) * np.array([168.0, 196.0, 228.0]) + ts * np.array([104.0, 148.0, 208.0])
    img = np.where(ground[..., None], field_col, sky_col)

    # Mowing stripes: alternate longitude bands on the ground only.
    stripe = (np.floor(np.degrees(lon_g) / _STRIPE_STEP_DEG).astype(int) % 2) == 0
    img[stripe & ground] += np.array([6.0, 11.0, 5.0])

    # Low-contrast graticule on both sky and ground.
    def _near_multiple(deg, step, half_width):
        m = np.mod(deg + step / 2.0, step) - step / 2.0
        return np.abs(m) < half_width

    grat = (_near_multiple(np.degrees(lon_g), _GRATICULE_STEP_DEG, _GRATICULE_HALF_WIDTH_DEG)
            | _near_multiple(np.degrees(lat_g), _GRATICULE_STEP_DEG, _GRATICULE_HALF_WIDTH_DEG))
    img[grat] += 24.0

    # High-contrast marker great circles, painted last.
    sin_band = math.sin(math.radians(_MARKER_HALF_WIDTH_DEG))
    for marker in PANORAMA_MARKERS:
        nx, ny, nz = marker.normal
        dist = np.abs(x * nx + y * ny + z * nz)
        img[dist < sin_band] = np.array(marker.color, dtype=np.float64)

    return np.rint(img).clip(0, 255).astype(np.uint8)


def marker_geometry() -> dict:
    """Marker metadata in the sidecar format the straightness check reads."""
    return {
        "markers": [
            {"name": m.name, "color": list(m.color), "normal": list(m.normal)}
            for m in PANORAMA_MARKERS
        ]
    }


# ---------------------------------------------------------------------------
# Dataset generation

@dataclass(frozen=True)
class DatasetManifest:
    header: dict
    records: list = field(default_factory=list)  # (filename, CropParams) pairs


def _record_line(filename: str, p: CropParams) -> str:
    rec = {
        "file": filename,
        "index": p.index,
        "seed": p.seed,
        "pan": p.pan,
        "tilt": p.tilt,
        "roll": p.roll,
        "fov": p.fov_h,
        "k1": p.k1,
        "k2": p.k2,
    }
    return json.dumps(rec)


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [json.dumps(manifest.header)]
    lines += [_record_line(f, p) for f, p in manifest.records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise DataError(f"empty manifest {path}")
    try:
        header = json.loads(lines[0])
        records = []
        for line in lines[1:]:
            if not line.strip():
                continue
            rec = json.loads(line)
            params = CropParams(pan=rec["pan"], tilt=rec["tilt"], roll=rec["roll"],
                                fov_h=rec["fov"], k1=rec["k1"], k2=rec["k2"],
                                index=rec["index"], seed=rec["seed"])
            records.append((rec["file"], params))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    if header.get("format") != MANIFEST_FORMAT:
        raise DataError(f"not a {MANIFEST_FORMAT} manifest: {path}")
    return DatasetManifest(header=header, records=records)


def manifest_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


_WORKER_PANOS = None
_WORKER_JOB = None


def _init_worker(panos, spec_dict, fmt, out_dir):
    global _WORKER_PANOS, _WORKER_JOB
    _WORKER_PANOS = panos
    _WORKER_JOB = (SamplingSpec(**spec_dict), fmt, out_dir)


def _render_index(index: int):
    spec, fmt, out_dir = _WORKER_JOB
    pano = _WORKER_PANOS[index % len(_WORKER_PANOS)]
    params = sample_crop_params(spec, index)
    img = render_crop(pano, params, spec.render_size, spec.output_size)
    filename = f"crop_{index:06d}.{fmt}"
    write_image(Path(out_dir) / filename, img)
    return filename, params


def generate_dataset(panos, spec: SamplingSpec, count: int, out_dir,
                     fmt: str = "ppm", workers: int = 1) -> DatasetManifest:
    """Render `count` labelled crops plus a manifest into out_dir.

    `panos` is a list of panorama images (arrays) or paths; panoramas are
    used round-robin by sample index. Output is fully determined by
    spec.seed and independent of the worker count.
    """
    if count < 0:
        raise DomainError("count must be >= 0")
    if fmt not in ("ppm", "png"):
        raise DataError(f"unsupported crop format {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded = [p if isinstance(p, np.ndarray) else read_image(p) for p in panos]
    if count > 0 and not loaded:
        raise DataError("at least one panorama is required")

    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "count": count,
        "spec": spec.header_echo(),
    }
    spec_dict = {
        "pan_range": spec.pan_range, "tilt_range": spec.tilt_range,
        "roll_range": spec.roll_range, "fov_range": spec.fov_range,
        "k1_range": spec.k1_range, "k2_sigma": spec.k2_sigma,
        "render_size": spec.render_size, "output_size": spec.output_size,
        "seed": spec.seed,
    }

    if workers == 0:
        workers = os.cpu_count() or 1
    indices = range(count)
    if workers <= 1 or count <= 1:
        _init_worker(loaded, spec_dict, fmt, str(out_dir))
        results = [_render_index(i) for i in indices]
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(loaded, spec_dict, fmt, str(out_dir)),
        ) as pool:
            results = list(pool.map(_render_index, indices, chunksize=16))

    manifest = DatasetManifest(header=header, records=results)
    write_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
