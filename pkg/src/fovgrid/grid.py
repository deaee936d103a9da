"""Foveated sensor grid construction.

Rings sit at uniformly spaced manifold positions ``w_i = i / (n_r - 1)``
(a single pole sample at w = 0, the outermost active ring at w = 1, and
optional padding rings beyond).  Per-ring angular counts enforce local
isotropy: the angular spacing of samples matches the local radial spacing,

    count_i = max(1, ceil(2 * pi * r_i / dr_i)),

with ``dr_i`` the central difference of the ring radii.  This exact rule
(central difference + ceil) reproduces the reference sample counts for
matched-budget grids (e.g. 3976 active points when targeting 4096 at
a = 2.79, and 4032 at a = 60.94, fov radius 8).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmf import CmfParams, _invert_unchecked

__all__ = [
    "RadialScheme",
    "SensorGrid",
    "build_radial_scheme",
    "angular_counts",
    "build_grid",
    "lattice_grid",
    "search_resolution",
    "solve_a_for_exact_n",
    "default_pad_rings",
]


@dataclass(frozen=True)
class RadialScheme:
    """Ring layout: uniformly spaced manifold positions and their radii."""

    n_r: int                 # active ring count (pole included)
    pad_rings: int
    w_values: np.ndarray     # length n_r + pad_rings, spacing delta_w
    radii: np.ndarray        # visual eccentricity per ring (degrees)
    delta_w: float
    includes_pole: bool = True

    @property
    def n_total(self) -> int:
        return self.n_r + self.pad_rings


@dataclass(frozen=True)
class SensorGrid:
    """Sensor points in struct-of-arrays form, ring-major / angle-minor.

    ``flat_u``/``flat_v`` are complex-log chart coordinates, computed per
    hemifield (cut on the vertical meridian): the left hemifield is
    mirrored onto the right before applying w = log(z + a).
    """

    params: CmfParams
    scheme: RadialScheme
    counts: np.ndarray       # per-ring angular sample counts
    ring_offsets: np.ndarray  # per-ring angular phase (radians)
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    theta: np.ndarray        # in [0, 2*pi)
    w: np.ndarray
    flat_u: np.ndarray
    flat_v: np.ndarray
    ring_index: np.ndarray
    hemifield: np.ndarray    # 0 = right (x >= 0), 1 = left
    is_padding: np.ndarray   # bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("x", "y", "r", "theta", "w", "flat_u", "flat_v",
                     "ring_index", "hemifield", "is_padding",
                     "counts", "ring_offsets"):
            getattr(self, name).flags.writeable = False

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_active(self) -> int:
        return int((~self.is_padding).sum())

    @property
    def active_index(self) -> np.ndarray:
        return np.flatnonzero(~self.is_padding)

    def points(self) -> np.ndarray:
        """(n, 2) visual coordinates."""
        return np.column_stack([self.x, self.y])


def build_radial_scheme(params: CmfParams, n_r: int, pad_rings: int = 0) -> RadialScheme:
    """Uniform manifold spacing with a pole sample: w_i = i / (n_r - 1)."""
    if n_r < 2:
        raise ValueError("need at least 2 rings (pole and outer edge)")
    if pad_rings < 0:
        raise ValueError("pad_rings must be >= 0")
    delta_w = 1.0 / (n_r - 1)
    w_values = np.arange(n_r + pad_rings) * delta_w
    radii = _invert_unchecked(params, w_values)
    return RadialScheme(n_r=n_r, pad_rings=pad_rings, w_values=w_values,
                        radii=radii, delta_w=delta_w)


def _central_dr(params: CmfParams, w_values: np.ndarray, delta_w: float) -> np.ndarray:
    """Central difference of r(w), extended past both ends of the scheme.

    Below the pole the curve is pinned at r(0) = 0, so the first ring's
    difference reduces to r(w + dw) / 2.
    """
    up = _invert_unchecked(params, w_values + delta_w)
    dn = _invert_unchecked(params, np.maximum(w_values - delta_w, 0.0))
    return (up - dn) / 2.0


def angular_counts(scheme: RadialScheme, params: CmfParams) -> np.ndarray:
    """Per-ring sample counts enforcing local isotropy (ceil of arc budget)."""
    dr = _central_dr(params, scheme.w_values, scheme.delta_w)
    with np.errstate(invalid="ignore"):
        ratio = 2.0 * np.pi * scheme.radii / dr
    counts = np.maximum(1, np.ceil(ratio)).astype(np.int64)
    counts[scheme.radii <= 0] = 1  # pole
    return counts


def build_grid(params: CmfParams, n_r: int, pad_rings: int = 0,
               stagger: bool = False) -> SensorGrid:
    """Construct the full sensor grid, deterministically.

    Point ordering is ring-major, angle-minor; ring phases default to 0,
    or alternate by half a spacing on odd rings when ``stagger`` is set.
    """
    scheme = build_radial_scheme(params, n_r, pad_rings)
    counts = angular_counts(scheme, params)

    offsets = np.zeros(scheme.n_total)
    if stagger:
        odd = np.arange(scheme.n_total) % 2 == 1
        offsets[odd] = np.pi / counts[odd]

    ring_index = np.repeat(np.arange(scheme.n_total), counts)
    r = np.repeat(scheme.radii, counts)
    w = np.repeat(scheme.w_values, counts)
    theta = np.concatenate([
        (offsets[i] + 2.0 * np.pi * np.arange(c) / c) % (2.0 * np.pi)
        for i, c in enumerate(counts)
    ])
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    is_padding = ring_index >= n_r
    hemifield = (x < 0).astype(np.uint8)
    flat_u, flat_v = _flat_chart(params, x, y, hemifield)

    return SensorGrid(
        params=params, scheme=scheme, counts=counts, ring_offsets=offsets,
        x=x, y=y, r=r, theta=theta, w=w, flat_u=flat_u, flat_v=flat_v,
        ring_index=ring_index.astype(np.int64), hemifield=hemifield,
        is_padding=is_padding,
        meta={"stagger": bool(stagger)},
    )


def _flat_chart(params: CmfParams, x, y, hemifield):
    """Complex-log chart w = log(z + a), cut on the vertical meridian.

    The left hemifield is reflected (x -> -x) so both halves map into the
    right half-plane, mirroring the two cortical hemispheres.
    """
    xr = np.where(hemifield == 1, -x, x)
    zr = xr + params.a
    flat_u = 0.5 * np.log(zr * zr + y * y)
    flat_v = np.arctan2(y, zr)
    return flat_u, flat_v


def lattice_grid(rows: int, cols: int, pitch: float, pad: int = 1,
                 a: float = 1e6) -> SensorGrid:
    """Square-lattice grid for uniform-limit oracles and self-tests.

    Builds an honest SensorGrid whose active points form a rows x cols
    Cartesian lattice (spacing ``pitch`` degrees) surrounded by ``pad``
    border layers of padding points.  Manifold coordinates come from the
    same CMF formulas at very large ``a``, where the manifold metric is a
    uniform rescaling of the visual plane.  Unlike CMF-built grids the
    active region is square, so ``is_padding`` is set from the border
    mask rather than from ``r > r_max``.
    """
    tr, tc = rows + 2 * pad, cols + 2 * pad
    jj, ii = np.meshgrid(np.arange(tc), np.arange(tr))
    x = (jj.ravel() - (tc - 1) / 2.0) * pitch
    y = (ii.ravel() - (tr - 1) / 2.0) * pitch
    r = np.hypot(x, y)
    border = ((ii < pad) | (ii >= rows + pad) | (jj < pad) | (jj >= cols + pad))
    r_max = float(r[~border.ravel()].max()) + 0.25 * pitch
    params = CmfParams(a=a, r_max=r_max)
    theta = np.arctan2(y, x) % (2.0 * np.pi)
    w = params.k_a * np.log1p(r / a)
    hemifield = (x < 0).astype(np.uint8)
    flat_u, flat_v = _flat_chart(params, x, y, hemifield)
    n_r = tr
    scheme = RadialScheme(n_r=n_r, pad_rings=0,
                          w_values=np.arange(n_r) * (1.0 / (n_r - 1)),
                          radii=np.zeros(n_r), delta_w=1.0 / (n_r - 1))
    return SensorGrid(
        params=params, scheme=scheme,
        counts=np.full(tr, tc, dtype=np.int64),
        ring_offsets=np.zeros(tr),
        x=x, y=y, r=r, theta=theta, w=w, flat_u=flat_u, flat_v=flat_v,
        ring_index=ii.ravel().astype(np.int64), hemifield=hemifield,
        is_padding=border.ravel(),
        meta={"lattice": (rows, cols), "pitch": pitch, "pad": pad},
    )


def _n_active(params: CmfParams, n_r: int) -> int:
    scheme = build_radial_scheme(params, n_r, pad_rings=0)
    return int(angular_counts(scheme, params).sum())


def search_resolution(params: CmfParams, target_n: int, n_r_max: int = 512) -> int:
    """Ring count whose active sample count best matches ``target_n``
    without exceeding it.

    Active count is nondecreasing in n_r, so a forward scan with early
    exit suffices.
    """
    if target_n < 4:
        raise ValueError("target_n must be >= 4")
    best = None
    for n_r in range(2, n_r_max + 1):
        n = _n_active(params, n_r)
        if n <= target_n:
            best = n_r
        elif best is not None:
            break
    if best is None:
        raise ValueError(
            f"no grid with <= {target_n} samples exists for a={params.a}"
        )
    return best


def default_pad_rings(k_max: int) -> int:
    """Padding ring count that keeps edge kNNs of size ``k_max`` filled."""
    return int(np.ceil(np.sqrt(k_max) / 2.0)) + 1


def solve_a_for_exact_n(target_n: int, n_r_range=(2, 16), r_max: float = 8.0,
                        a_range=(0.01, 100.0), rel_tol: float = 0.004) -> list[float]:
    """Foveation parameters at which some ring count yields exactly
    ``target_n`` active samples.

    For each candidate n_r the active count is a nondecreasing step
    function of ``a``; bisection on the predicate count >= target
    converges onto the upward transition and the feasible (upper) end of
    the final bracket is returned, provided it lands exactly on the
    target.  The bracket and stopping rule are deliberately fixed —
    plain bisection on ``a`` over ``a_range`` with relative width
    tolerance ``rel_tol`` — so the returned representatives are
    reproducible.  n_r values whose count steps over the target
    contribute nothing.
    """
    if target_n < 4:
        raise ValueError("target_n must be >= 4")
    a_lo, a_hi = a_range
    roots = []
    for n_r in range(n_r_range[0], n_r_range[1] + 1):
        if _n_active(CmfParams(a_hi, r_max), n_r) < target_n:
            continue  # unreachable even at the uniform end
        if _n_active(CmfParams(a_lo, r_max), n_r) >= target_n:
            continue  # already past the transition at the strong-foveation end
        lo, hi = a_lo, a_hi
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if _n_active(CmfParams(mid, r_max), n_r) >= target_n:
                hi = mid
            else:
                lo = mid
        if _n_active(CmfParams(hi, r_max), n_r) == target_n:
            roots.append(hi)
    return sorted(roots)
