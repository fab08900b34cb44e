"""Evaluation harness: error sweeps, A/B comparisons, histograms, straightness.

All reports are plain data plus CSV emitters; plotting is left to external
tools.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distortion import DEFAULT_R_MAX, RadialDistortion, manifold_k2, roundtrip_error
from .errors import DataError, DomainError
from .loss import RadiusGrid, default_grid, distortion_loss


@dataclass(frozen=True)
class SweepResult:
    """Rows of (k1, k2, max round-trip error, mean round-trip error)."""

    rows: tuple


def reprojection_sweep(k1_min: float = -0.7, k1_max: float = 0.3, steps: int = 101,
                       k2_rule=None, radii=None) -> SweepResult:
    """Round-trip error of the polynomial inverse across a k1 interval.

    k2 follows the lens manifold unless k2_rule (a callable of k1) is given.
    Radii default to a uniform grid on [0, 0.5738].
    """
    if steps < 2:
        raise DomainError("sweep needs at least 2 steps")
    if k2_rule is None:
        k2_rule = manifold_k2
    if radii is None:
        radii = np.linspace(0.0, DEFAULT_R_MAX, 257)
    rows = []
    for k1 in np.linspace(k1_min, k1_max, steps):
        k2 = float(k2_rule(float(k1)))
        errors, max_err = roundtrip_error(RadialDistortion(float(k1), k2), radii)
        rows.append((float(k1), k2, max_err, float(errors.mean())))
    return SweepResult(rows=tuple(rows))


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1", "k2", "max_error", "mean_error"])
        for k1, k2, max_err, mean_err in result.rows:
            writer.writerow([f"{k1:.9g}", f"{k2:.9g}", f"{max_err:.9g}", f"{mean_err:.9g}"])


@dataclass(frozen=True)
class ABReport:
    """Per-image losses of two predictors against the truth.

    rows: (true pair, A pair, B pair, DL_A, DL_B, winner). Ties go to B, so
    the reported A win rate is a conservative lower bound.
    """

    rows: tuple
    win_rate_a: float


def ab_compare(preds_a, preds_b, labels, grid: RadiusGrid | None = None) -> ABReport:
    """Compare two coefficient predictors by distortion loss against truth."""
    grid = grid or default_grid()
    preds_a = np.asarray(preds_a, dtype=float)
    preds_b = np.asarray(preds_b, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if not (preds_a.shape == preds_b.shape == labels.shape) or labels.ndim != 2 \
            or labels.shape[1] != 2 or labels.shape[0] == 0:
        raise DomainError("ab_compare needs matching non-empty (N, 2) arrays")
    rows = []
    wins_a = 0
    for y, a, b in zip(labels, preds_a, preds_b):
        dl_a = distortion_loss(tuple(y), tuple(a), grid)
        dl_b = distortion_loss(tuple(y), tuple(b), grid)
        winner = "A" if dl_a < dl_b else "B"
        wins_a += winner == "A"
        rows.append((tuple(y), tuple(a), tuple(b), dl_a, dl_b, winner))
    return ABReport(rows=tuple(rows), win_rate_a=wins_a / len(rows))


def manifold_predictor(preds) -> np.ndarray:
    """Replace each prediction's k2 with the manifold value of its k1."""
    preds = np.asarray(preds, dtype=float)
    return np.stack([preds[:, 0], manifold_k2(preds[:, 0])], axis=1)


def write_ab_csv(report: ABReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1_true", "k2_true", "k1_a", "k2_a", "k1_b", "k2_b",
                         "dl_a", "dl_b", "winner"])
        for y, a, b, dl_a, dl_b, winner in report.rows:
            writer.writerow([f"{v:.9g}" for v in (*y, *a, *b, dl_a, dl_b)] + [winner])


@dataclass(frozen=True)
class HistogramReport:
    """Fixed-width bins of prediction errors per coefficient."""

    bin_edges: np.ndarray
    counts_k1: np.ndarray
    counts_k2: np.ndarray
    stats: dict  # per coefficient: mean / median / std


def error_histogram(preds, labels, bins: int = 40,
                    value_range=(-0.2, 0.2)) -> HistogramReport:
    """Histogram of (prediction - truth) per coefficient.

    Errors outside the range land in the end bins so every sample is
    counted; the summary statistics use the raw errors.
    """
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.shape != labels.shape or preds.ndim != 2 or preds.shape[0] == 0:
        raise DomainError("error_histogram needs matching non-empty (N, 2) arrays")
    lo, hi = value_range
    edges = np.linspace(lo, hi, bins + 1)
    errors = preds - labels
    clipped = np.clip(errors, lo, np.nextafter(hi, lo))
    counts_k1 = np.histogram(clipped[:, 0], bins=edges)[0]
    counts_k2 = np.histogram(clipped[:, 1], bins=edges)[0]
    stats = {}
    for j, name in enumerate(("k1", "k2")):
        e = errors[:, j]
        stats[name] = {"mean": float(e.mean()), "median": float(np.median(e)),
                       "std": float(e.std())}
    return HistogramReport(bin_edges=edges, counts_k1=counts_k1,
                           counts_k2=counts_k2, stats=stats)


def write_hist_csv(report: HistogramReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_k1", "count_k2"])
        for i in range(len(report.counts_k1)):
            writer.writerow([f"{report.bin_edges[i]:.9g}", f"{report.bin_edges[i + 1]:.9g}",
                             int(report.counts_k1[i]), int(report.counts_k2[i])])


# ---------------------------------------------------------------------------
# Straightness of rendered marker lines

_COLOR_MATCH_RADIUS = 70.0
_COLOR_WEIGHT_SCALE = 140.0


def marker_sagitta(img, color, min_pixels: int = 40, bin_size: float = 4.0) -> float:
    """Max deviation (px) of a color-keyed line's centerline from straight.

    Pixels near the marker color are weighted by color proximity, projected
    onto the line's principal axis, binned, and reduced to per-bin weighted
    centroids; the sagitta is the largest perpendicular residual of those
    centroids from a least-squares line. Binned centroids measure the
    centerline, so the line's own thickness does not register as curvature.
    """
    img = np.asarray(img)
    dist = np.linalg.norm(img.astype(np.float64) - np.asarray(color, dtype=np.float64),
                          axis=-1)
    weight = np.maximum(0.0, 1.0 - dist / _COLOR_WEIGHT_SCALE)
    weight[dist > _COLOR_MATCH_RADIUS] = 0.0
    ys, xs = np.nonzero(weight)
    if xs.size < min_pixels:
        raise DataError(f"marker line {tuple(color)} not found "
                        f"({xs.size} pixels < {min_pixels})")
    w = weight[ys, xs]
    pts = np.stack([xs + 0.5, ys + 0.5], axis=1)
    centroid = np.average(pts, axis=0, weights=w)
    q = pts - centroid
    cov = (q * w[:, None]).T @ q / w.sum()
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, np.argmax(eigvals)]
    normal = np.array([-direction[1], direction[0]])
    t = q @ direction
    s = q @ normal
    bin_idx = np.floor((t - t.min()) / bin_size).astype(int)
    order = np.argsort(bin_idx, kind="stable")
    bin_idx, t, s, w = bin_idx[order], t[order], s[order], w[order]
    boundaries = np.flatnonzero(np.diff(bin_idx)) + 1
    t_groups = np.split(t, boundaries)
    s_groups = np.split(s, boundaries)
    w_groups = np.split(w, boundaries)
    t_c, s_c = [], []
    for tg, sg, wg in zip(t_groups, s_groups, w_groups):
        if wg.sum() >= 1.0:
            t_c.append(np.average(tg, weights=wg))
            s_c.append(np.average(sg, weights=wg))
    if len(t_c) < 3:
        raise DataError(f"marker line {tuple(color)} too short to fit "
                        f"({len(t_c)} usable bins)")
    t_c = np.asarray(t_c)
    s_c = np.asarray(s_c)
    slope, intercept = np.polyfit(t_c, s_c, 1)
    return float(np.max(np.abs(s_c - (slope * t_c + intercept))))


def straightness_check(img, markers, min_pixels: int = 40,
                       skip_missing: bool = False) -> dict:
    """Sagitta per marker: {name: pixels}.

    `markers` is an iterable of mappings with "name" and "color" (the
    geometry sidecar format). With skip_missing, markers without enough
    pixels are omitted; finding none at all is still an error.
    """
    results = {}
    for marker in markers:
        name = marker["name"] if isinstance(marker, dict) else marker.name
        color = marker["color"] if isinstance(marker, dict) else marker.color
        try:
            results[name] = marker_sagitta(img, color, min_pixels=min_pixels)
        except DataError:
            if not skip_missing:
                raise
    if not results:
        raise DataError("no marker lines found in image")
    return results
