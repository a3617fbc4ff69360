"""Ground labeling: intensity raster over world XY plus fuzzy clustering.

Ground points (already separated from objects) are dropped onto a fixed-size
world-frame XY grid. Each occupied cell is described by a normalized
intensity histogram over its square neighborhood, and the cells are grouped
with fuzzy c-means; a point inherits its cell's hardened cluster, which
becomes a ground segment id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class GroundGrid:
    cell: float
    cell_keys: np.ndarray  # (C, 2) int64, lexicographically sorted
    point_cell: np.ndarray  # (G,) int64 index into cell_keys
    intensity: np.ndarray  # (G,) float64 min-max normalized


def rasterize_ground(
    points_xy: np.ndarray, intensity: np.ndarray, cell: float = 0.2
) -> GroundGrid:
    """Bin ground points into world-frame XY cells (floor rule)."""
    if cell <= 0:
        raise ParameterError("cell must be positive")
    xy = np.asarray(points_xy, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[1] < 2:
        raise ParameterError("points_xy must be (G, >=2)")
    inten = np.asarray(intensity, dtype=np.float64)
    if inten.shape != (len(xy),):
        raise ParameterError("intensity must align with points")
    if len(xy) == 0:
        return GroundGrid(
            cell,
            np.empty((0, 2), np.int64),
            np.empty((0,), np.int64),
            np.empty((0,)),
        )
    lo, hi = inten.min(), inten.max()
    norm = (inten - lo) / (hi - lo) if hi > lo else np.zeros_like(inten)
    keys = np.floor(xy[:, :2] / cell).astype(np.int64)
    uniq, point_cell = np.unique(keys, axis=0, return_inverse=True)
    return GroundGrid(cell, uniq, point_cell.reshape(-1), norm)


def cell_features(grid: GroundGrid, window: int = 2, bins: int = 16) -> np.ndarray:
    """Per-cell neighborhood histograms of normalized intensity.

    Each occupied cell gets a `bins`-bin histogram over every sample within
    the (2*window+1)^2 block of cells around it, normalized to sum 1 (the
    block always holds the cell's own samples, so rows are well defined).
    """
    if window < 0 or bins < 1:
        raise ParameterError("window must be >= 0 and bins >= 1")
    c = len(grid.cell_keys)
    if c == 0:
        return np.empty((0, bins))
    bin_idx = np.minimum((grid.intensity * bins).astype(np.int64), bins - 1)
    per_cell = np.zeros((c, bins))
    np.add.at(per_cell, (grid.point_cell, bin_idx), 1.0)
    kx, ky = grid.cell_keys[:, 0], grid.cell_keys[:, 1]
    x0, y0 = kx.min(), ky.min()
    nx = int(kx.max() - x0 + 1)
    ny = int(ky.max() - y0 + 1)
    dense = np.zeros((nx + 2 * window, ny + 2 * window, bins))
    dense[kx - x0 + window, ky - y0 + window] = per_cell
    summed = np.zeros((nx, ny, bins))
    for dx in range(2 * window + 1):
        for dy in range(2 * window + 1):
            summed += dense[dx : dx + nx, dy : dy + ny]
    feats = summed[kx - x0, ky - y0]
    totals = feats.sum(axis=1, keepdims=True)
    return feats / totals


@dataclass
class FuzzyPartition:
    centers: np.ndarray  # (c, D)
    membership: np.ndarray  # (N, c), rows sum to 1
    objective_history: list[float]

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.membership, axis=1)


def fuzzy_cmeans(
    data: np.ndarray,
    clusters: int = 8,
    fuzzifier: float = 2.0,
    tol: float = 1e-4,
    max_iter: int = 300,
    seed: int = 0,
) -> FuzzyPartition:
    """Fuzzy c-means with kmeans++-style seeding.

    Membership of point i in cluster j is 1 / sum_k (d_ij / d_ik)^(2/(m-1));
    a point coinciding with a center gets full membership there. Centers are
    the membership^m weighted means. The objective sum_ij u_ij^m d_ij^2 is
    non-increasing across iterations.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ParameterError("data must be a non-empty 2D array")
    if not 1 <= clusters <= len(x):
        raise ParameterError(f"clusters must be in [1, {len(x)}]")
    if fuzzifier <= 1.0:
        raise ParameterError("fuzzifier must be > 1")
    rng = np.random.default_rng(seed)
    from .descriptors import _plus_plus_init

    centers = _plus_plus_init(x, clusters, rng)
    history: list[float] = []
    membership = _fcm_membership(x, centers, fuzzifier)
    for _ in range(max_iter):
        um = membership**fuzzifier
        denom = um.sum(axis=0)
        dead = denom <= 0
        if dead.any():
            # re-seat degenerate centers deterministically
            centers[dead] = x[: int(dead.sum())]
            um = _fcm_membership(x, centers, fuzzifier) ** fuzzifier
            denom = um.sum(axis=0)
        centers = (um.T @ x) / denom[:, None]
        new_membership = _fcm_membership(x, centers, fuzzifier)
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        history.append(float(((new_membership**fuzzifier) * d2).sum()))
        shift = np.abs(new_membership - membership).max()
        membership = new_membership
        if shift < tol:
            break
    return FuzzyPartition(centers, membership, history)


def _fcm_membership(x: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    zero = d2 <= 0
    any_zero = zero.any(axis=1)
    power = 1.0 / (m - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = (1.0 / d2) ** power
        u = inv / inv.sum(axis=1, keepdims=True)
    if any_zero.any():
        rows = np.nonzero(any_zero)[0]
        u[rows] = 0.0
        z = zero[rows]
        u[rows] = z / z.sum(axis=1, keepdims=True)
    return u
