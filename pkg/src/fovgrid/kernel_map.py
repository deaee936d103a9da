"""Kernel mapping: compile neighborhoods into bilinear gather tables over
a shared Cartesian reference kernel, plus a reference kNN-convolution.

Each neighbor gets polar coordinates (geodesic distance on the manifold,
visual polar angle about its output unit), converted to Cartesian kernel
coordinates

    (u, v) = center + (dist / pitch) * (cos theta, sin theta)

where ``pitch = extent / s`` and ``center = (s - 1) / 2``.  Sampling the
reference kernel there with bilinear weights yields per-unit kernels that
are aligned in visual space and scale with eccentricity.  The compiled
table stores 4 flat indices + 4 weights per (output unit, slot), which is
what downstream consumers gather through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neighborhoods import NeighborhoodSet

__all__ = [
    "ReferenceKernelSpec",
    "KernelMapTable",
    "default_extent",
    "neighborhood_reference_coords",
    "build_kernel_map",
    "apply_knn_conv",
    "render_mapped_kernel",
]

# neighbors landing this far (in kernel samples) outside the kernel are
# clamped to the border; farther ones are flagged out-of-extent
CLAMP_MARGIN = 0.5


@dataclass(frozen=True)
class ReferenceKernelSpec:
    """Reference kernel geometry: k slots sampled from an s x s grid.

    ``s = res_multiplier * round(sqrt(k))``; the 2x option trades extra
    (heavily constrained) parameters for finer spatial sampling.
    """

    k: int
    extent: float            # kernel span in manifold units
    res_multiplier: int = 1

    def __post_init__(self):
        if self.res_multiplier not in (1, 2):
            raise ValueError("res_multiplier must be 1 or 2")
        if not (self.extent > 0):
            raise ValueError("extent must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def s(self) -> int:
        return self.res_multiplier * int(round(np.sqrt(self.k)))

    @property
    def pitch(self) -> float:
        return self.extent / self.s


def default_extent(k: int, delta_w: float) -> float:
    """Kernel span covered by a sqrt(k) x sqrt(k) patch of grid spacing
    ``delta_w``; makes the uniform-limit lattice equivalence exact."""
    return float(np.sqrt(k) * delta_w)


@dataclass(frozen=True)
class KernelMapTable:
    """Compiled bilinear gather table.

    For every (output unit j, slot i): 4 flat indices into the s*s
    reference grid and 4 nonnegative weights summing to 1, or all-zero
    weights when the slot fell out of extent.
    """

    n_out: int
    k: int
    s: int
    indices: np.ndarray       # (n_out, k, 4) int32, flat into s*s
    weights: np.ndarray       # (n_out, k, 4) float64
    out_of_extent: np.ndarray  # (n_out, k) bool

    def __post_init__(self):
        for name in ("indices", "weights", "out_of_extent"):
            getattr(self, name).flags.writeable = False


def neighborhood_reference_coords(nbhd: NeighborhoodSet, j: int,
                                  spec: ReferenceKernelSpec) -> np.ndarray:
    """(k, 2) kernel-grid coordinates (u, v) of output unit j's neighbors."""
    if spec.k != nbhd.k:
        raise ValueError(f"spec k={spec.k} does not match neighborhood k={nbhd.k}")
    center = (spec.s - 1) / 2.0
    rad = nbhd.dists[j] / spec.pitch
    u = center + rad * np.cos(nbhd.thetas[j])
    v = center + rad * np.sin(nbhd.thetas[j])
    return np.column_stack([u, v])


def build_kernel_map(nbhd: NeighborhoodSet, spec: ReferenceKernelSpec) -> KernelMapTable:
    """Compile bilinear indices/weights for every (unit, slot)."""
    if spec.k != nbhd.k:
        raise ValueError(f"spec k={spec.k} does not match neighborhood k={nbhd.k}")
    s = spec.s
    center = (s - 1) / 2.0
    rad = nbhd.dists / spec.pitch
    u = center + rad * np.cos(nbhd.thetas)
    v = center + rad * np.sin(nbhd.thetas)

    lo, hi = -CLAMP_MARGIN, (s - 1) + CLAMP_MARGIN
    oob = (u < lo) | (u > hi) | (v < lo) | (v > hi)
    uc = np.clip(u, 0.0, s - 1.0)
    vc = np.clip(v, 0.0, s - 1.0)

    u0 = np.minimum(np.floor(uc), s - 2).astype(np.int64) if s > 1 else np.zeros_like(uc, dtype=np.int64)
    v0 = np.minimum(np.floor(vc), s - 2).astype(np.int64) if s > 1 else np.zeros_like(vc, dtype=np.int64)
    fu = uc - u0
    fv = vc - v0

    w00 = (1 - fu) * (1 - fv)
    w10 = fu * (1 - fv)
    w01 = (1 - fu) * fv
    w11 = fu * fv
    weights = np.stack([w00, w10, w01, w11], axis=-1)
    weights[oob] = 0.0

    u1 = np.minimum(u0 + 1, s - 1)
    v1 = np.minimum(v0 + 1, s - 1)
    flat = lambda uu, vv: vv * s + uu  # row-major (v = row, u = column)
    indices = np.stack([flat(u0, v0), flat(u1, v0), flat(u0, v1), flat(u1, v1)],
                       axis=-1).astype(np.int32)
    indices[oob] = 0

    return KernelMapTable(n_out=nbhd.n_out, k=nbhd.k, s=s,
                          indices=indices, weights=weights, out_of_extent=oob)


def mapped_kernels(table: KernelMapTable, reference_kernels: np.ndarray) -> np.ndarray:
    """Gather reference kernels through the table.

    reference_kernels: (..., s, s) -> returns (..., n_out, k).
    """
    *lead, s1, s2 = reference_kernels.shape
    if (s1, s2) != (table.s, table.s):
        raise ValueError(f"reference kernel must be {table.s}x{table.s}")
    flat = reference_kernels.reshape(*lead, s1 * s2)
    gathered = flat[..., table.indices]            # (..., n_out, k, 4)
    return (gathered * table.weights).sum(axis=-1)


def apply_knn_conv(table: KernelMapTable, nbhd: NeighborhoodSet,
                   values: np.ndarray, reference_kernels: np.ndarray,
                   bias: np.ndarray | None = None) -> np.ndarray:
    """Reference kNN-convolution forward pass.

    values: (n_in, c_in); reference_kernels: (c_out, c_in, s, s);
    bias: (c_out,).  Returns (n_out, c_out).  Padding inputs are expected
    to carry value 0; the op is linear in both values and kernels.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("values must be (n_in, c_in)")
    c_out, c_in = reference_kernels.shape[:2]
    if reference_kernels.shape[2:] != (table.s, table.s):
        raise ValueError(f"reference kernels must be (c_out, c_in, {table.s}, {table.s})")
    if values.shape[1] != c_in:
        raise ValueError("channel mismatch between values and kernels")
    if nbhd.indices.max() >= values.shape[0]:
        raise ValueError("neighborhood indices exceed the value array")
    if bias is None:
        bias = np.zeros(c_out)
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (c_out,):
        raise ValueError("bias must be (c_out,)")

    wmap = mapped_kernels(table, reference_kernels)   # (c_out, c_in, n_out, k)
    gathered = values[nbhd.indices]                    # (n_out, k, c_in)
    out = np.einsum("ocjk,jkc->jo", wmap, gathered, optimize=True)
    return out + bias[None, :]


def render_mapped_kernel(table: KernelMapTable, reference: np.ndarray,
                         j: int) -> np.ndarray:
    """Per-neighbor kernel values of one output unit (for plots/tests)."""
    if reference.shape != (table.s, table.s):
        raise ValueError(f"reference must be {table.s}x{table.s}")
    flat = reference.ravel()
    return (flat[table.indices[j]] * table.weights[j]).sum(axis=-1)
