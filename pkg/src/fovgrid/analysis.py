"""Receptive-field back-projection across stacked layers, RF shape
statistics, and the ViT FLOPs scaling model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .cmf import CmfParams
from .grid import SensorGrid, build_grid, default_pad_rings, search_resolution
from .neighborhoods import NeighborhoodSet, knn

__all__ = [
    "LayerSpec",
    "LayerStack",
    "RfRecord",
    "VitFlopsConfig",
    "build_layer_stack",
    "rf_backproject",
    "rf_reachability",
    "rf_diameter_profile",
    "rf_shape_fit",
    "vit_flops",
    "powerlaw_fit",
    "fixation_flops_curve",
]


@dataclass(frozen=True)
class LayerSpec:
    """One processing layer: its grid and the neighborhoods into the
    previous layer's grid (None for the input layer)."""

    grid: SensorGrid
    nbhd: NeighborhoodSet | None
    op_kind: str = "input"    # input | conv | pool
    k: int = 0
    stride: int = 1


@dataclass(frozen=True)
class LayerStack:
    """Ordered layers from input (index 0) to top."""

    layers: list

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i) -> LayerSpec:
        return self.layers[i]


@dataclass(frozen=True)
class RfRecord:
    layer: int
    unit: int
    eccentricity: float
    diameter: float
    aspect_ratio: float = 1.0


def build_layer_stack(params: CmfParams, input_target_n: int, ops,
                      pad_rings: int | None = None) -> LayerStack:
    """Stack of grids connected by kNN neighborhoods.

    ``ops`` is a list of (op_kind, k, stride); each layer's grid targets
    n_prev / stride^2 samples via the resolution search, keeping the same
    CMF. Padding rings default to the size needed by the largest k.
    """
    if pad_rings is None:
        pad_rings = default_pad_rings(max(k for _, k, _ in ops))
    n_r = search_resolution(params, input_target_n)
    g0 = build_grid(params, n_r, pad_rings)
    layers = [LayerSpec(grid=g0, nbhd=None)]
    prev = g0
    for op_kind, k, stride in ops:
        if stride > 1:
            target = max(4, int(round(prev.n_active / stride ** 2)))
            n_r = search_resolution(params, target)
            g = build_grid(params, n_r, pad_rings)
        else:
            g = prev
        nb = knn(prev, g, k)
        layers.append(LayerSpec(grid=g, nbhd=nb, op_kind=op_kind, k=k, stride=stride))
        prev = g
    return LayerStack(layers=layers)


def _adjacency(nbhd: NeighborhoodSet, n_in: int) -> sparse.csr_matrix:
    n_out, k = nbhd.indices.shape
    rows = np.repeat(np.arange(n_out), k)
    data = np.ones(n_out * k, dtype=bool)
    return sparse.csr_matrix((data, (rows, nbhd.indices.ravel())),
                             shape=(n_out, n_in))


def rf_reachability(stack: LayerStack, layer: int):
    """Reachability of every unit of ``layer`` down to the input grid.

    Returns (reach, touches_padding): a sparse boolean (n_layer, n_input)
    matrix and a per-unit flag marking receptive fields that traversed a
    padding unit at any level.
    """
    if not (1 <= layer < len(stack)):
        raise ValueError("layer must be in [1, depth)")
    reach = _adjacency(stack[1].nbhd, len(stack[0].grid))
    touches = np.asarray(
        (reach @ stack[0].grid.is_padding.astype(np.int64)) > 0).ravel()
    for ell in range(2, layer + 1):
        a = _adjacency(stack[ell].nbhd, len(stack[ell - 1].grid))
        touches = (np.asarray((a @ stack[ell - 1].grid.is_padding.astype(np.int64)) > 0).ravel()
                   | np.asarray((a @ touches.astype(np.int64)) > 0).ravel())
        reach = (a @ reach).astype(bool)
    return reach.tocsr(), touches


def rf_backproject(stack: LayerStack, layer: int, unit: int) -> np.ndarray:
    """Input-grid point indices reachable from one unit.

    Padding points are traversed during composition but excluded from
    the returned set (their activation is fixed at zero).
    """
    if layer == 0:
        return np.array([unit])
    frontier = np.array([unit])
    for ell in range(layer, 0, -1):
        frontier = np.unique(stack[ell].nbhd.indices[frontier])
    g0 = stack[0].grid
    return frontier[~g0.is_padding[frontier]]


def _max_pairwise(points: np.ndarray) -> float:
    """Diameter of a 2D point set (hull-accelerated above a size cutoff)."""
    if points.shape[0] < 2:
        return 0.0
    if points.shape[0] > 64:
        from scipy.spatial import ConvexHull, QhullError
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass  # collinear set; brute force below
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    return float(np.sqrt(d2.max()))


def rf_diameter_profile(stack: LayerStack):
    """Per-layer (eccentricity, diameter) samples plus linear fits.

    Diameter is the max pairwise visual distance of the back-projected
    active set.  Fits exclude units whose back-projection touched
    padding at any level (the plateau regime).  Returns a list of dicts,
    one per layer >= 1.
    """
    results = []
    g0 = stack[0].grid
    pts0 = g0.points()
    for ell in range(1, len(stack)):
        reach, touches = rf_reachability(stack, ell)
        g = stack[ell].grid
        units = np.flatnonzero(~g.is_padding)
        ecc = g.r[units]
        diam = np.empty(units.size)
        keep = ~g0.is_padding
        for row, u in enumerate(units):
            members = reach.indices[reach.indptr[u]:reach.indptr[u + 1]]
            members = members[keep[members]]
            diam[row] = _max_pairwise(pts0[members])
        fit_mask = ~touches[units]
        if fit_mask.sum() >= 2 and np.ptp(ecc[fit_mask]) > 0:
            slope, intercept = np.polyfit(ecc[fit_mask], diam[fit_mask], 1)
        else:
            slope, intercept = np.nan, np.nan
        results.append({
            "layer": ell, "ecc": ecc, "diameter": diam,
            "touches_padding": touches[units],
            "slope": float(slope), "intercept": float(intercept),
        })
    return results


def rf_shape_fit(points: np.ndarray, weights=None):
    """Bivariate-Gaussian shape of a point set by weighted second moments.

    Returns (aspect_ratio, orientation): sqrt of the covariance
    eigenvalue ratio (>= 1) and the principal axis angle.  Degenerate
    covariance reports +inf.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 8:
        raise ValueError("need at least 8 points for a shape fit")
    wts = np.ones(pts.shape[0]) if weights is None else np.asarray(weights, float)
    wts = wts / wts.sum()
    mu = (pts * wts[:, None]).sum(axis=0)
    d = pts - mu
    cov = (wts[:, None, None] * d[:, :, None] * d[:, None, :]).sum(axis=0)
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 0:
        return np.inf, 0.0
    aspect = float(np.sqrt(evals[1] / evals[0]))
    orientation = float(np.arctan2(evecs[1, 1], evecs[0, 1]))
    return aspect, orientation


@dataclass(frozen=True)
class VitFlopsConfig:
    """Transformer dimensions for the analytic FLOPs model.

    Attention FLOPs count only the operations that scale with the square
    of the sequence length (QK^T and AV); the qkv/output projections are
    linear in sequence length and are booked under non-attention together
    with the MLP, patch embedding and classifier head.  Multiply-
    accumulates count as 2 FLOPs.  ``n_special_tokens`` models class /
    register tokens that join the sequence after patchification.
    """

    embed_dim: int = 320
    mlp_dim: int = 1280
    depth: int = 12
    heads: int = 5
    patch_side: int = 8
    in_channels: int = 3
    n_classes: int = 1000
    n_special_tokens: int = 5
    include_bias: bool = True

    @property
    def patch_dim(self) -> int:
        return self.in_channels * self.patch_side ** 2

    def tokens_for_resolution(self, m: int) -> int:
        """Token count for an m x m sample budget."""
        return int(round((m / self.patch_side) ** 2))


def vit_flops(config: VitFlopsConfig, n_tokens: int):
    """(attention_flops, non_attention_flops) for one forward pass.

    attention      = depth * 4 * n_eff^2 * d          (QK^T + AV)
    non-attention  = depth * (8 d^2 + 4 d mlp) * n_eff  (projections + MLP)
                   + 2 * patch_dim * d * n_tokens       (patch embedding)
                   + 2 * d * n_classes                  (head, CLS only)
                   + bias adds when enabled
    with n_eff = n_tokens + n_special_tokens.
    """
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    d, m = config.embed_dim, config.mlp_dim
    n_eff = n_tokens + config.n_special_tokens

    attention = config.depth * 4.0 * n_eff ** 2 * d

    per_token_linear = 8.0 * d * d + 4.0 * d * m
    if config.include_bias:
        per_token_linear += 4.0 * d + m  # qkv(3d) + proj(d) + fc1(m) + fc2(d)
    non_attention = (config.depth * per_token_linear * n_eff
                     + 2.0 * config.patch_dim * d * n_tokens
                     + 2.0 * d * config.n_classes)
    if config.include_bias:
        non_attention += d * n_tokens + config.n_classes
    return attention, non_attention


def powerlaw_fit(xs, ys) -> float:
    """Least-squares slope in log-log space."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit requires positive data")
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def fixation_flops_curve(config: VitFlopsConfig, resolutions, fixations):
    """Total FLOPs per image over (resolution, fixation-count) pairs.

    Returns a list of dicts with per-cell totals; one fixation at
    resolution m costs exactly vit_flops at that resolution's token
    count, and f fixations cost f times that.
    """
    rows = []
    for m in resolutions:
        n_tok = config.tokens_for_resolution(m)
        attn, rest = vit_flops(config, n_tok)
        single = attn + rest
        for f in fixations:
            rows.append({"resolution": int(m), "tokens": n_tok,
                         "fixations": int(f), "flops": f * single})
    return rows
