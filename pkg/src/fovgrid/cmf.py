"""Cortical magnification function (CMF) and its integral/inverse.

The sampler is built on the magnification profile

    M(r) = k_a / (r + a)

where ``r`` is eccentricity in visual degrees, ``a`` controls foveation
strength (small ``a`` = strong foveation, ``a -> inf`` = uniform sampling)
and ``k_a = 1 / ln((r_max + a) / a)`` normalizes the integral of M over
the field of view ``[0, r_max]`` to 1.  The integral

    w(r) = k_a * ln((r + a) / a)

maps eccentricity to a normalized radial position on the sensor manifold,
with w(0) = 0 and w(r_max) = 1, and is inverted in closed form by

    r(w) = a * (exp(w / k_a) - 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["CmfParams", "magnification", "integrate_cmf", "invert_cmf"]

# Padding rings sit at w > 1; allow a generous margin before rejecting.
W_PADDING_LIMIT = 2.0


@dataclass(frozen=True)
class CmfParams:
    """Magnification model: foveation parameter, field of view, normalizer.

    ``k_a`` is derived in ``__post_init__`` and is the single source of
    truth for the normalization constant across all modules.
    """

    a: float
    r_max: float
    k_a: float = field(init=False)

    def __post_init__(self):
        if not (self.a > 0):
            raise ValueError(f"foveation parameter a must be > 0, got {self.a}")
        if not (self.r_max > 0):
            raise ValueError(f"field-of-view radius must be > 0, got {self.r_max}")
        # 1 / ln((r_max + a) / a), written with log1p for large a
        object.__setattr__(self, "k_a", 1.0 / np.log1p(self.r_max / self.a))

    @property
    def log_ratio(self) -> float:
        """ln((r_max + a) / a) == 1 / k_a."""
        return np.log1p(self.r_max / self.a)


def magnification(params: CmfParams, r):
    """Normalized magnification density k_a / (r + a), in 1/degrees.

    Accepts scalars or arrays; raises on negative eccentricity.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("eccentricity must be >= 0")
    out = params.k_a / (r + params.a)
    return out if out.ndim else float(out)


def integrate_cmf(params: CmfParams, r):
    """Integral of the magnification from 0 to r: the manifold radial coordinate.

    Satisfies w(0) == 0 and w(r_max) == 1.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("eccentricity must be >= 0")
    out = params.k_a * np.log1p(r / params.a)
    return out if out.ndim else float(out)


def invert_cmf(params: CmfParams, w, *, w_limit: float = W_PADDING_LIMIT):
    """Eccentricity at manifold position w: r = a * (exp(w / k_a) - 1).

    w may exceed 1 up to ``w_limit`` to accommodate padding rings beyond
    the field of view.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(w > w_limit):
        raise ValueError(f"manifold position must lie in [0, {w_limit}]")
    out = _invert_unchecked(params, w)
    return out if out.ndim else float(out)


def _invert_unchecked(params: CmfParams, w):
    """Closed-form inverse without domain checks (internal)."""
    return params.a * np.expm1(np.asarray(w, dtype=float) * params.log_ratio)
