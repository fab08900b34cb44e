"""Distortion-area loss between two radial distortion curves.

A coefficient pair (k1, k2) defines the distortion curve

    p(r) = r * (1 + k1*r^2 + k2*r^4)

and the loss between a true pair y and a predicted pair yhat is the squared
discrepancy of the two curves summed over a fixed radius grid. For training,
the loss is evaluated once per coefficient (holding the other at its true
value) so each head receives an error signal for its own coefficient only;
the training loss is the sum of the two parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

GRID_R_MAX = 0.7
DEFAULT_GRID_N = 64


@dataclass(frozen=True)
class RadiusGrid:
    """Strictly increasing radii in (0, 0.7] the loss is sampled at."""

    radii: np.ndarray = field(repr=False)

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        object.__setattr__(self, "radii", radii)
        if radii.ndim != 1 or radii.size < 8:
            raise DomainError("radius grid needs at least 8 radii")
        if not np.all(np.isfinite(radii)):
            raise DomainError("radius grid must be finite")
        if radii[0] <= 0.0 or radii[-1] > GRID_R_MAX:
            raise DomainError(f"radius grid must lie within (0, {GRID_R_MAX}]")
        if not np.all(np.diff(radii) > 0.0):
            raise DomainError("radius grid must be strictly increasing")

    def __len__(self):
        return self.radii.size


def default_grid() -> RadiusGrid:
    """64 uniform radii r_i = 0.7 * i / 64, i = 1..64."""
    i = np.arange(1, DEFAULT_GRID_N + 1, dtype=float)
    return RadiusGrid(GRID_R_MAX * i / DEFAULT_GRID_N)


def distortion_curve(r, pair):
    """p(r) = r * (1 + k1*r^2 + k2*r^4) for a coefficient pair."""
    k1, k2 = pair
    r = np.asarray(r, dtype=float)
    out = r * (1.0 + k1 * r**2 + k2 * r**4)
    return float(out) if out.ndim == 0 else out


def distortion_loss(y, yhat, grid: RadiusGrid | None = None) -> float:
    """Sum over the grid of squared curve differences between y and yhat."""
    if grid is None:
        grid = default_grid()
    diff = distortion_curve(grid.radii, y) - distortion_curve(grid.radii, yhat)
    return float(np.sum(diff * diff))


def split_loss(y, yhat, grid: RadiusGrid | None = None):
    """Per-coefficient loss split: (L_k1, L_k2, total).

    L_k1 compares y against (yhat_1, y_2); L_k2 against (y_1, yhat_2).
    The total is their sum, so each predicted coefficient contributes
    independently.
    """
    if grid is None:
        grid = default_grid()
    y1, y2 = y
    yh1, yh2 = yhat
    l_k1 = distortion_loss(y, (yh1, y2), grid)
    l_k2 = distortion_loss(y, (y1, yh2), grid)
    return l_k1, l_k2, l_k1 + l_k2


def loss_gradient(y, yhat, grid: RadiusGrid | None = None):
    """Analytic gradient of the split-loss total w.r.t. (yhat_1, yhat_2).

    d total / d yhat_1 = -2 * sum_i r_i^3 * (p(r_i, y) - p(r_i, (yhat_1, y_2)))
    d total / d yhat_2 = -2 * sum_i r_i^5 * (p(r_i, y) - p(r_i, (y_1, yhat_2)))
    """
    if grid is None:
        grid = default_grid()
    r = grid.radii
    y1, y2 = y
    yh1, yh2 = yhat
    p_true = distortion_curve(r, y)
    g1 = -2.0 * np.sum(r**3 * (p_true - distortion_curve(r, (yh1, y2))))
    g2 = -2.0 * np.sum(r**5 * (p_true - distortion_curve(r, (y1, yh2))))
    return float(g1), float(g2)
