"""k-nearest-neighborhoods on the sensor manifold.

Distances default to a local two-point metric

    d(i, j) = sqrt(dw^2 + (rbar * M(rbar) * dtheta)^2)

with ``rbar`` the mean eccentricity of the pair and ``dtheta`` wrapped
into (-pi, pi].  An exact graph-geodesic mode (Dijkstra over a ring-and-
spoke metric graph) is kept as the slow reference; the two agree to a
few percent at kNN ranges, which is what the tests check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .grid import SensorGrid

__all__ = [
    "MetricGraph",
    "NeighborhoodSet",
    "local_manifold_distance",
    "pairwise_manifold_distance",
    "build_metric_graph",
    "knn",
    "min_covering_k",
]


@dataclass(frozen=True)
class MetricGraph:
    """Sparse symmetric graph with manifold edge lengths."""

    n_nodes: int
    adjacency: sparse.csr_matrix

    def geodesic(self, sources=None) -> np.ndarray:
        """All-pairs (or from ``sources``) shortest-path distances."""
        return dijkstra(self.adjacency, directed=False, indices=sources)


@dataclass(frozen=True)
class NeighborhoodSet:
    """Per-output-unit kNN indices into the input grid.

    ``dists`` are manifold distances, nondecreasing across the k slots;
    ``thetas`` are visual-space polar angles of each neighbor about its
    output unit.
    """

    input_grid_id: str
    output_grid_id: str
    k: int
    indices: np.ndarray   # (n_out, k) int64
    dists: np.ndarray     # (n_out, k) float64
    thetas: np.ndarray    # (n_out, k) float64

    def __post_init__(self):
        for name in ("indices", "dists", "thetas"):
            getattr(self, name).flags.writeable = False

    @property
    def n_out(self) -> int:
        return self.indices.shape[0]


def _metric_blocks(params, w_a, r_a, th_a, w_b, r_b, th_b):
    """Pairwise local metric between point sets a (rows) and b (cols)."""
    dw = w_a[:, None] - w_b[None, :]
    dth = np.abs(th_a[:, None] - th_b[None, :])
    dth = np.minimum(dth, 2.0 * np.pi - dth)
    rbar = 0.5 * (r_a[:, None] + r_b[None, :])
    tang = rbar * (params.k_a / (rbar + params.a)) * dth
    return np.sqrt(dw * dw + tang * tang)


def local_manifold_distance(grid: SensorGrid, i, j):
    """Local two-point metric between points ``i`` and ``j`` of one grid.

    Accepts scalar or array indices; symmetric bit-for-bit.
    """
    i = np.atleast_1d(np.asarray(i))
    j = np.atleast_1d(np.asarray(j))
    dw = grid.w[i] - grid.w[j]
    dth = np.abs(grid.theta[i] - grid.theta[j])
    dth = np.minimum(dth, 2.0 * np.pi - dth)
    rbar = 0.5 * (grid.r[i] + grid.r[j])
    p = grid.params
    tang = rbar * (p.k_a / (rbar + p.a)) * dth
    out = np.sqrt(dw * dw + tang * tang)
    return out if out.shape != (1,) else float(out[0])


def pairwise_manifold_distance(input_grid: SensorGrid, output_grid: SensorGrid,
                               out_rows=None) -> np.ndarray:
    """(n_out, n_in) local-metric distances between two grids sharing a CMF."""
    _check_shared_cmf(input_grid, output_grid)
    rows = slice(None) if out_rows is None else out_rows
    return _metric_blocks(
        input_grid.params,
        output_grid.w[rows], output_grid.r[rows], output_grid.theta[rows],
        input_grid.w, input_grid.r, input_grid.theta,
    )


def _check_shared_cmf(a: SensorGrid, b: SensorGrid):
    if (a.params.a != b.params.a) or (a.params.r_max != b.params.r_max):
        raise ValueError("grids must share the same CMF parameters")


def build_metric_graph(grid: SensorGrid) -> MetricGraph:
    """Ring-and-spoke graph: same-ring neighbors plus the two nearest
    points on each adjacent ring; edge length is the local metric.

    Used as the exact-geodesic oracle; construction is O(n * ring size).
    """
    n = len(grid)
    rows, cols = [], []
    ring_ids = np.unique(grid.ring_index)
    ring_members = {rid: np.flatnonzero(grid.ring_index == rid) for rid in ring_ids}

    for rid in ring_ids:
        members = ring_members[rid]
        c = members.size
        if c > 1:  # ring cycle
            rows.append(members)
            cols.append(np.roll(members, -1))
        nxt = ring_members.get(rid + 1)
        if nxt is None:
            continue
        # connect each point to the 2 angularly nearest points on the next ring
        th_a = grid.theta[members][:, None]
        th_b = grid.theta[nxt][None, :]
        dth = np.abs(th_a - th_b)
        dth = np.minimum(dth, 2.0 * np.pi - dth)
        take = min(2, nxt.size)
        nearest = np.argsort(dth, axis=1, kind="stable")[:, :take]
        rows.append(np.repeat(members, take))
        cols.append(nxt[nearest.ravel()])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    d = local_manifold_distance(grid, rows, cols)
    d = np.atleast_1d(d)
    adj = sparse.coo_matrix((d, (rows, cols)), shape=(n, n))
    adj = adj.maximum(adj.T).tocsr()  # symmetrize
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise RuntimeError("metric graph is disconnected")
    return MetricGraph(n_nodes=n, adjacency=adj)


def knn(input_grid: SensorGrid, output_grid: SensorGrid, k: int,
        block: int = 256) -> NeighborhoodSet:
    """k nearest input points around every output unit.

    Ties break by (ring index, point index); because points are stored
    ring-major / angle-minor, a stable sort on distance alone realizes
    exactly that order.
    """
    _check_shared_cmf(input_grid, output_grid)
    n_in, n_out = len(input_grid), len(output_grid)
    if not (1 <= k <= n_in):
        raise ValueError(f"k must lie in [1, {n_in}], got {k}")

    from .io import grid_content_id  # local import to avoid a cycle

    indices = np.empty((n_out, k), dtype=np.int64)
    dists = np.empty((n_out, k))
    for lo in range(0, n_out, block):
        hi = min(lo + block, n_out)
        d = pairwise_manifold_distance(input_grid, output_grid, slice(lo, hi))
        if k < n_in:
            part = np.argpartition(d, k - 1, axis=1)[:, :k]
            dpart = np.take_along_axis(d, part, axis=1)
            order = np.argsort(dpart, axis=1, kind="stable")
            cand = np.take_along_axis(part, order, axis=1)
            # argpartition breaks distance ties arbitrarily; re-sort the
            # candidate ids within equal-distance runs to restore the
            # (ring, index) tie order
            cd = np.take_along_axis(d, cand, axis=1)
            for row in range(cand.shape[0]):
                cand[row] = cand[row][np.lexsort((cand[row], cd[row]))]
            indices[lo:hi] = cand
            dists[lo:hi] = np.take_along_axis(d, cand, axis=1)
        else:
            order = np.argsort(d, axis=1, kind="stable")
            indices[lo:hi] = order
            dists[lo:hi] = np.take_along_axis(d, order, axis=1)

    dx = input_grid.x[indices] - output_grid.x[:, None]
    dy = input_grid.y[indices] - output_grid.y[:, None]
    thetas = np.arctan2(dy, dx)
    return NeighborhoodSet(
        input_grid_id=grid_content_id(input_grid),
        output_grid_id=grid_content_id(output_grid),
        k=k, indices=indices, dists=dists, thetas=thetas,
    )


def _covering_order(input_grid: SensorGrid, output_grid: SensorGrid) -> np.ndarray:
    """Full distance-sorted neighbor order for every output unit."""
    d = pairwise_manifold_distance(input_grid, output_grid)
    return np.argsort(d, axis=1, kind="stable")


def min_covering_k(input_grid: SensorGrid, output_grid: SensorGrid) -> int:
    """Smallest k whose union of output-unit kNNs covers every active
    input point (doubling search, then bisection)."""
    order = _covering_order(input_grid, output_grid)
    active = np.flatnonzero(~input_grid.is_padding)
    n_in = order.shape[1]

    def covers(k: int) -> bool:
        return np.isin(active, order[:, :k]).all()

    hi = 1
    while hi < n_in and not covers(hi):
        hi *= 2
    hi = min(hi, n_in)
    if not covers(hi):
        raise RuntimeError("full neighbor set does not cover the input grid")
    lo = max(1, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if covers(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi
