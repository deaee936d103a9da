"""Log-polar and warped-Cartesian comparison samplers, plus the local
anisotropy diagnostics used to compare them against isotropic grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .grid import SensorGrid

__all__ = [
    "BaselineGrid",
    "logpolar_grid",
    "dr_dtheta_profile",
    "sensor_dr_dtheta_profile",
    "warped_cartesian_grid",
    "anisotropy_index",
]

# log-polar sampling starts at r_max / LOGPOLAR_INNER_DIVISOR instead of the
# singular r = 0
LOGPOLAR_INNER_DIVISOR = 1000.0


@dataclass(frozen=True)
class BaselineGrid:
    """Rectangular-topology comparison sampler ('log-polar' or
    'warped-cartesian'): rows x cols points with visual coordinates."""

    kind: str
    points: np.ndarray    # (rows * cols, 2)
    rows: int
    cols: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.points.shape != (self.rows * self.cols, 2):
            raise ValueError("points must be (rows * cols, 2)")
        if not np.isfinite(self.points).all():
            raise ValueError("grid coordinates must be finite")
        self.points.flags.writeable = False

    @property
    def radii(self) -> np.ndarray:
        """Per-row eccentricity (log-polar grids only)."""
        return np.asarray(self.params["radii"])


def logpolar_grid(a: float, n_r: int, n_theta: int, r_max: float) -> BaselineGrid:
    """Regular grid in (log(r + a), theta).

    Rows sample log(r + a) uniformly from the inner cutoff to r_max;
    every ring carries the same n_theta angles, which is exactly what
    makes the sampler anisotropic away from its sweet spot.
    """
    if n_r < 2 or n_theta < 2:
        raise ValueError("need at least 2 radii and 2 angles")
    r_min = r_max / LOGPOLAR_INNER_DIVISOR
    radii = np.exp(np.linspace(np.log(r_min + a), np.log(r_max + a), n_r)) - a
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    pts = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    return BaselineGrid(kind="log-polar", points=pts, rows=n_r, cols=n_theta,
                        params={"a": a, "r_max": r_max, "radii": radii,
                                "n_theta": n_theta})


def dr_dtheta_profile(grid: BaselineGrid):
    """Per-ring radial spacing over angular arc spacing; 1.0 = isotropic."""
    if grid.kind != "log-polar":
        raise ValueError("dr/dtheta profile is defined for log-polar grids")
    radii = grid.radii
    n_theta = grid.params["n_theta"]
    dr = np.diff(radii)
    arc = radii[:-1] * (2.0 * np.pi / n_theta)
    return radii[:-1], dr / arc


def sensor_dr_dtheta_profile(grid: SensorGrid):
    """Same diagnostic for an isotropic sensor grid (non-pole rings)."""
    from .cmf import _invert_unchecked

    sch = grid.scheme
    counts = grid.counts
    rings = np.arange(1, sch.n_r)
    dr = (_invert_unchecked(grid.params, sch.w_values[rings] + sch.delta_w)
          - _invert_unchecked(grid.params, sch.w_values[rings] - sch.delta_w)) / 2.0
    arc = sch.radii[rings] * (2.0 * np.pi / counts[rings])
    return sch.radii[rings], dr / arc


def warped_cartesian_grid(profile, side: int, r_max: float = 8.0,
                          n_table: int = 4096) -> BaselineGrid:
    """Square lattice radially remapped through the inverse cumulative
    magnification profile; angles are preserved.

    ``profile`` is a callable M(r) > 0, nonincreasing, evaluated over the
    lattice diagonal.  With the default 1/(r + 0.5) the center is heavily
    oversampled relative to the corners, and the periphery is anisotropic.
    """
    if side < 2:
        raise ValueError("side must be >= 2")
    if profile is None:
        profile = lambda r: 1.0 / (r + 0.5)
    g = np.linspace(-r_max, r_max, side)
    xx, yy = np.meshgrid(g, g, indexing="xy")
    rho = np.hypot(xx, yy).ravel()
    ang = np.arctan2(yy, xx).ravel()
    rho_max = r_max * np.sqrt(2.0)

    rt = np.linspace(0.0, rho_max, n_table)
    m = np.asarray(profile(rt), dtype=float)
    if np.any(m <= 0):
        raise ValueError("profile must be positive")
    if np.any(np.diff(m) > 1e-12):
        raise ValueError("profile must be monotone nonincreasing")
    cum = np.concatenate([[0.0], np.cumsum((m[1:] + m[:-1]) / 2.0 * np.diff(rt))])
    cum /= cum[-1]
    rho_new = np.interp(rho / rho_max, cum, rt)

    pts = np.column_stack([rho_new * np.cos(ang), rho_new * np.sin(ang)])
    return BaselineGrid(kind="warped-cartesian", points=pts, rows=side, cols=side,
                        params={"r_max": r_max})


def anisotropy_index(points: np.ndarray, query, k: int):
    """sigma1^2 / sigma2^2 of the centered k-nearest-neighbor coordinates.

    Invariant to rotation and uniform scaling; 1.0 means isotropic local
    sampling.  Degenerate (collinear) neighborhoods report +inf.
    Accepts a single (x, y) query or an (m, 2) batch.
    """
    points = np.asarray(points, dtype=float)
    if k < 8:
        raise ValueError("k must be >= 8")
    if k > points.shape[0]:
        raise ValueError("k exceeds the point count")
    q = np.atleast_2d(np.asarray(query, dtype=float))
    tree = cKDTree(points)
    _, idx = tree.query(q, k=k)
    nb = points[idx]                            # (m, k, 2)
    nb = nb - nb.mean(axis=1, keepdims=True)
    sv = np.linalg.svd(nb, compute_uv=False)    # (m, 2)
    with np.errstate(divide="ignore"):
        out = (sv[:, 0] / sv[:, 1]) ** 2
    out[sv[:, 1] == 0] = np.inf
    return out if out.shape[0] > 1 else float(out[0])
