"""scikit-learn compatible estimator facade.

``FoveatedImageSampler`` turns image batches into foveated signals
(transform) and renders signals back to images (inverse_transform).
``KnnConvolution`` compiles neighborhood + kernel-map tables against a
fitted sampler's grid and applies the kNN-convolution as a fixed linear
map, so both compose in a sklearn ``Pipeline``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image_batch, check_signal_batch
from .cmf import CmfParams
from .grid import build_grid, default_pad_rings, search_resolution
from .kernel_map import ReferenceKernelSpec, apply_knn_conv, build_kernel_map, default_extent
from .neighborhoods import knn, min_covering_k
from .resample import FixationSpec, backproject, foveate

__all__ = ["FoveatedImageSampler", "KnnConvolution"]


class FoveatedImageSampler(TransformerMixin, BaseEstimator):
    """Resample images through a foveated sensor grid.

    Parameters
    ----------
    a : float
        Foveation strength; small is strongly foveated, large approaches
        uniform sampling.
    fov : float
        Field-of-view diameter in visual degrees.
    target_n : int or None
        Approximate active sample budget; the ring count is searched so
        the grid comes closest without exceeding it.  Mutually exclusive
        with ``n_rings``.
    n_rings : int or None
        Explicit ring count (overrides ``target_n``).
    pad_rings : int or None
        Padding rings beyond the field of view; None picks a default
        sized for neighborhoods up to k=25.
    stagger : bool
        Alternate ring phases by half a spacing.
    scale : float
        Image fraction covered by the field-of-view diameter.
    fixation : tuple of float
        Normalized fixation center used by transform().
    """

    def __init__(self, a=0.5, fov=16.0, target_n=4096, n_rings=None,
                 pad_rings=None, stagger=False, scale=1.0, fixation=(0.5, 0.5)):
        self.a = a
        self.fov = fov
        self.target_n = target_n
        self.n_rings = n_rings
        self.pad_rings = pad_rings
        self.stagger = stagger
        self.scale = scale
        self.fixation = fixation

    def fit(self, X, y=None):
        X = check_image_batch(X)
        params = CmfParams(a=self.a, r_max=self.fov / 2.0)
        if self.n_rings is not None:
            n_r = self.n_rings
        elif self.target_n is not None:
            n_r = search_resolution(params, self.target_n)
        else:
            raise ValueError("provide target_n or n_rings")
        pad = self.pad_rings if self.pad_rings is not None else default_pad_rings(25)
        self.grid_ = build_grid(params, n_r, pad, stagger=self.stagger)
        self.image_shape_ = X.shape[1:]
        self.n_points_ = len(self.grid_)
        self.n_channels_ = X.shape[3]
        return self

    def _fix(self) -> FixationSpec:
        return FixationSpec(cx=self.fixation[0], cy=self.fixation[1],
                            scale=self.scale)

    def transform(self, X):
        """(n_samples, n_points * channels) foveated signals."""
        check_is_fitted(self, "grid_")
        X = check_image_batch(X)
        out = np.stack([
            foveate(img, self.grid_, self._fix()).values for img in X
        ])
        return out.reshape(X.shape[0], -1)

    def signals(self, X):
        """Unflattened (n_samples, n_points, channels) signals."""
        flat = self.transform(X)
        return flat.reshape(flat.shape[0], self.n_points_, self.n_channels_)

    def inverse_transform(self, X):
        """Voronoi back-projection onto the training image dims, with the
        field-of-view mask appended as an extra channel."""
        check_is_fitted(self, "grid_")
        X = check_signal_batch(X, self.n_points_, self.n_channels_)
        h, w = self.image_shape_[:2]
        from .io import grid_content_id
        from .resample import FoveatedSignal

        gid = grid_content_id(self.grid_)
        frames = []
        for values in X:
            sig = FoveatedSignal(grid_id=gid, fixation=self._fix(),
                                 values=values, source_dims=(h, w))
            frames.append(backproject(sig, self.grid_, (h, w)))
        return np.stack(frames)


class KnnConvolution(TransformerMixin, BaseEstimator):
    """kNN-convolution over a fitted sampler's grid as a fixed linear map.

    Compiles the output grid, neighborhoods, and the bilinear kernel-map
    table at fit time; transform() gathers the (given or randomly
    initialized) reference kernels through the table.

    Parameters
    ----------
    sampler : fitted FoveatedImageSampler
        Source of the input grid (and channel count).
    k : int or 'min-covering'
        Neighborhood size; 'min-covering' picks the smallest k whose
        patch union covers every active input point.
    output_target_n : int
        Sample budget of the output (patch-center) grid.
    res_multiplier : {1, 2}
        Reference-kernel resolution factor (s = res_multiplier*sqrt(k)).
    n_filters : int
        Output channels when kernels are auto-initialized.
    kernels, bias : ndarray or None
        Explicit reference kernels (c_out, c_in, s, s) and bias (c_out,).
    random_state : int, RandomState or None
        Seed for kernel auto-initialization.
    """

    def __init__(self, sampler=None, k="min-covering", output_target_n=64,
                 res_multiplier=1, n_filters=8, kernels=None, bias=None,
                 random_state=None):
        self.sampler = sampler
        self.k = k
        self.output_target_n = output_target_n
        self.res_multiplier = res_multiplier
        self.n_filters = n_filters
        self.kernels = kernels
        self.bias = bias
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.sampler is None or not hasattr(self.sampler, "grid_"):
            raise ValueError("KnnConvolution needs a fitted FoveatedImageSampler")
        input_grid = self.sampler.grid_
        params = input_grid.params
        n_r_out = search_resolution(params, self.output_target_n)
        self.output_grid_ = build_grid(params, n_r_out, pad_rings=0)

        if self.k == "min-covering":
            self.k_ = min_covering_k(input_grid, self.output_grid_)
        else:
            self.k_ = int(self.k)
        self.nbhd_ = knn(input_grid, self.output_grid_, self.k_)
        extent = default_extent(self.k_, input_grid.scheme.delta_w)
        self.spec_ = ReferenceKernelSpec(k=self.k_, extent=extent,
                                         res_multiplier=self.res_multiplier)
        self.table_ = build_kernel_map(self.nbhd_, self.spec_)

        c_in = self.sampler.n_channels_
        if self.kernels is not None:
            self.kernels_ = np.asarray(self.kernels, dtype=float)
            if self.kernels_.shape[1] != c_in or self.kernels_.shape[2:] != (self.spec_.s,) * 2:
                raise ValueError(
                    f"kernels must be (c_out, {c_in}, {self.spec_.s}, {self.spec_.s})")
        else:
            rng = check_random_state(self.random_state)
            s = self.spec_.s
            std = 1.0 / np.sqrt(self.k_ * c_in)
            self.kernels_ = rng.normal(0.0, std, size=(self.n_filters, c_in, s, s))
        self.bias_ = (np.zeros(self.kernels_.shape[0]) if self.bias is None
                      else np.asarray(self.bias, dtype=float))
        return self

    def transform(self, X):
        """(n_samples, n_out * c_out) kNN-convolution outputs."""
        check_is_fitted(self, "table_")
        X = check_signal_batch(X, self.sampler.n_points_, self.sampler.n_channels_)
        out = np.stack([
            apply_knn_conv(self.table_, self.nbhd_, sig, self.kernels_, self.bias_)
            for sig in X
        ])
        return out.reshape(X.shape[0], -1)
