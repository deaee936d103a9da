"""Image resampling through a sensor grid.

Visual degrees map to pixels so that the field-of-view diameter
(2 * r_max) covers ``scale * min(H, W)`` pixels, centered on the fixation
point.  The visual y axis is aligned with image rows (downward), so a
neighbor "east" in visual space is a step along columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .grid import SensorGrid

__all__ = [
    "FixationSpec",
    "FixationZone",
    "FoveatedSignal",
    "foveate",
    "backproject",
    "sample_fixations",
    "local_resolution_profile",
]


@dataclass(frozen=True)
class FixationSpec:
    """Fixation center in normalized image coordinates plus FOV scale."""

    cx: float = 0.5
    cy: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError("fixation center must lie inside the image")
        if not (self.scale > 0):
            raise ValueError("scale must be > 0")


@dataclass(frozen=True)
class FixationZone:
    """Central disc from which random fixations are drawn."""

    radius: float = 0.25
    count: int = 4
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.radius <= 0.5):
            raise ValueError("zone radius must lie in (0, 0.5]")
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class FoveatedSignal:
    """Per-sensor-sample feature values for one fixation on one image."""

    grid_id: str
    fixation: FixationSpec
    values: np.ndarray        # (n_points, channels)
    source_dims: tuple        # (H, W)

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def _pixels_per_degree(dims, fix: FixationSpec, r_max: float) -> float:
    h, w = dims
    return fix.scale * min(h, w) / (2.0 * r_max)


def sensor_pixel_positions(grid: SensorGrid, fix: FixationSpec, dims):
    """Continuous (col, row) pixel positions of every sensor point."""
    h, w = dims
    ppd = _pixels_per_degree(dims, fix, grid.params.r_max)
    px = fix.cx * (w - 1) + grid.x * ppd
    py = fix.cy * (h - 1) + grid.y * ppd
    return px, py


def bilinear_gather_table(grid: SensorGrid, fix: FixationSpec, dims):
    """Precompiled bilinear sampling table: (n, 4) flat pixel indices and
    weights; out-of-image or padding points get all-zero weights.

    This is the exported artifact that lets downstream consumers foveate
    images without recomputing any geometry.
    """
    h, w = dims
    px, py = sensor_pixel_positions(grid, fix, dims)
    inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1) & (~grid.is_padding)

    pxc = np.clip(px, 0, w - 1)
    pyc = np.clip(py, 0, h - 1)
    x0 = np.minimum(np.floor(pxc), w - 2).astype(np.int64) if w > 1 else np.zeros(len(grid), np.int64)
    y0 = np.minimum(np.floor(pyc), h - 2).astype(np.int64) if h > 1 else np.zeros(len(grid), np.int64)
    fx = pxc - x0
    fy = pyc - y0
    weights = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy),
                        (1 - fx) * fy, fx * fy], axis=-1)
    weights[~inside] = 0.0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    indices = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
                       axis=-1).astype(np.int64)
    indices[~inside] = 0
    return indices, weights


def foveate(image: np.ndarray, grid: SensorGrid, fix: FixationSpec) -> FoveatedSignal:
    """Bilinearly sample an image at every sensor point.

    Points mapping outside the image, and padding points, get 0 in all
    channels.  Linear in the image.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("image must be (H, W) or (H, W, C) with H, W >= 2")
    h, w, c = img.shape
    indices, weights = bilinear_gather_table(grid, fix, (h, w))
    flat = img.reshape(h * w, c)
    values = np.einsum("nq,nqc->nc", weights, flat[indices])

    from .io import grid_content_id

    return FoveatedSignal(grid_id=grid_content_id(grid), fixation=fix,
                          values=values, source_dims=(h, w))


def nearest_sensor_map(grid: SensorGrid, out_dims, fix: FixationSpec | None = None):
    """(H, W) index of the nearest active sensor per pixel, and the
    in-field-of-view mask.  The FOV disc fills min(out_dims) when no
    fixation is given."""
    h, w = out_dims
    fix = fix or FixationSpec()
    ppd = _pixels_per_degree(out_dims, fix, grid.params.r_max)
    cols, rows_ = np.meshgrid(np.arange(w), np.arange(h))
    x = (cols - fix.cx * (w - 1)) / ppd
    y = (rows_ - fix.cy * (h - 1)) / ppd
    in_fov = np.hypot(x, y) <= grid.params.r_max
    active = grid.active_index
    tree = cKDTree(np.column_stack([grid.x[active], grid.y[active]]))
    _, nearest = tree.query(np.column_stack([x.ravel(), y.ravel()]))
    return active[nearest].reshape(h, w), in_fov


def backproject(signal: FoveatedSignal, grid: SensorGrid, out_dims) -> np.ndarray:
    """Nearest-sensor (Voronoi) rendering of a signal onto a canvas.

    Returns (H, W, C + 1): the last channel is 1 inside the field of view
    and 0 outside (the sentinel); values outside the FOV are 0.
    """
    idx_map, in_fov = nearest_sensor_map(grid, out_dims)
    vals = signal.values[idx_map]          # (H, W, C)
    vals[~in_fov] = 0.0
    return np.concatenate([vals, in_fov[:, :, None].astype(float)], axis=2)


def sample_fixations(zone: FixationZone, scale: float = 1.0) -> list[FixationSpec]:
    """Fixations uniform over the zone disc, deterministic per seed."""
    rng = np.random.default_rng(zone.seed)
    rad = zone.radius * np.sqrt(rng.uniform(0.0, 1.0, zone.count))
    ang = rng.uniform(0.0, 2.0 * np.pi, zone.count)
    return [FixationSpec(cx=0.5 + r * np.cos(t), cy=0.5 + r * np.sin(t), scale=scale)
            for r, t in zip(rad, ang)]


def local_resolution_profile(grid: SensorGrid, native_dims, fix: FixationSpec):
    """Sensor samples per native pixel, per ring.

    Ratio of local sensor linear density (1 / radial ring spacing) to the
    native pixel density implied by the degree-to-pixel mapping.  Returns
    (eccentricities, ratios, crossing) where ``crossing`` is the
    eccentricity at which the ratio passes 1.0 (None if it never does).
    """
    from .cmf import _invert_unchecked

    ppd = _pixels_per_degree(native_dims, fix, grid.params.r_max)
    sch = grid.scheme
    active = np.arange(sch.n_r)
    dr = (_invert_unchecked(grid.params, sch.w_values[active] + sch.delta_w)
          - _invert_unchecked(grid.params,
                              np.maximum(sch.w_values[active] - sch.delta_w, 0.0))) / 2.0
    ratios = 1.0 / (dr * ppd)
    eccs = sch.radii[active]
    crossing = None
    above = ratios >= 1.0
    if above.any() and not above.all():
        i = int(np.nonzero(above[:-1] != above[1:])[0][0])
        r0, r1 = eccs[i], eccs[i + 1]
        y0, y1 = ratios[i], ratios[i + 1]
        crossing = float(r0 + (1.0 - y0) * (r1 - r0) / (y1 - y0))
    return eccs, ratios, crossing
