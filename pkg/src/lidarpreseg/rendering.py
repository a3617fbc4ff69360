"""Voxel rendering into pseudo-images and intensity-driven pseudo-color.

Each voxel is drawn by projecting its 8 cube corners and filling the convex
hull of those projections (a perspective image of a convex solid is exactly
the hull of its projected vertices, so 8 projections per voxel suffice).
Overlaps resolve by voxel center depth, nearest wins. The color stage maps
per-voxel normalized intensity to hue through histogram equalization, keeps
saturation constant, and brightens depth edges in the intensity channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregation import VoxelGrid
from .camera import PseudoCameraRig
from .errors import ParameterError

try:  # pragma: no cover - exercised only when numba is installed
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_CORNER_OFFSETS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [0, 1, 0],
        [1, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ],
    dtype=np.float64,
)

_NEAR = 1e-9


@dataclass
class PixelVoxelMap:
    """Per-pixel front-most voxel id (-1 where empty) and its center depth."""

    voxel_id: np.ndarray  # (H, W) int32
    depth: np.ndarray  # (H, W) float32, +inf where empty
    stats: dict

    @property
    def mapped(self) -> np.ndarray:
        return self.voxel_id >= 0

    @property
    def mapped_count(self) -> int:
        return int((self.voxel_id >= 0).sum())


@dataclass
class PseudoImage:
    rgb: np.ndarray  # (H, W, 3) float32 in [0, 1]
    map: PixelVoxelMap
    camera: int = 0
    frame: int = -1


def _scanline_fill_py(corner_px, order, depths, width, height):
    """Pure-python twin of the jitted kernel (used when numba is absent)."""
    id_buf = np.full((height, width), -1, np.int32)
    depth_buf = np.full((height, width), np.inf, np.float32)
    for oi in range(len(order)):
        vid = order[oi]
        pts = corner_px[vid]
        _fill_one_py(pts, vid, depths[vid], id_buf, depth_buf, width, height)
    return id_buf, depth_buf


def _fill_one_py(pts, vid, depth, id_buf, depth_buf, width, height):
    hull = _hull_py(pts)
    if len(hull) < 2:
        return
    ys = hull[:, 1]
    j0 = max(0, math.ceil(ys.min() - 0.5))
    j1 = min(height - 1, math.floor(ys.max() - 0.5))
    h = len(hull)
    for j in range(j0, j1 + 1):
        c = j + 0.5
        xlo, xhi = math.inf, -math.inf
        for e in range(h):
            ax, ay = hull[e]
            bx, by = hull[(e + 1) % h]
            if (ay - c) * (by - c) > 0:
                continue
            if ay == by:
                xlo = min(xlo, ax, bx)
                xhi = max(xhi, ax, bx)
            else:
                x = ax + (c - ay) / (by - ay) * (bx - ax)
                xlo = min(xlo, x)
                xhi = max(xhi, x)
        if xlo > xhi:
            continue
        i0 = max(0, math.ceil(xlo - 0.5))
        i1 = min(width - 1, math.floor(xhi - 0.5))
        for i in range(i0, i1 + 1):
            id_buf[j, i] = vid
            depth_buf[j, i] = depth


def _hull_py(pts):
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    sorted_pts = pts[order]
    lower, upper = [], []
    for p in sorted_pts:
        while (
            len(lower) >= 2
            and (lower[-1][0] - lower[-2][0]) * (p[1] - lower[-2][1])
            - (lower[-1][1] - lower[-2][1]) * (p[0] - lower[-2][0])
            <= 0
        ):
            lower.pop()
        lower.append(tuple(p))
    for p in sorted_pts[::-1]:
        while (
            len(upper) >= 2
            and (upper[-1][0] - upper[-2][0]) * (p[1] - upper[-2][1])
            - (upper[-1][1] - upper[-2][1]) * (p[0] - upper[-2][0])
            <= 0
        ):
            upper.pop()
        upper.append(tuple(p))
    return np.array(lower[:-1] + upper[:-1])


if HAVE_NUMBA:

    @njit(cache=True)
    def _scanline_fill_nb(corner_px, order, depths, width, height):  # pragma: no cover
        id_buf = np.full((height, width), -1, np.int32)
        depth_buf = np.full((height, width), np.inf, np.float32)
        hx = np.empty(16, np.float64)
        hy = np.empty(16, np.float64)
        idx = np.empty(8, np.int64)
        for oi in range(order.shape[0]):
            vid = order[oi]
            pts = corner_px[vid]
            # insertion sort of the 8 corners by (x, y)
            for k in range(8):
                idx[k] = k
            for k in range(1, 8):
                key = idx[k]
                kx = pts[key, 0]
                ky = pts[key, 1]
                m = k - 1
                while m >= 0 and (
                    pts[idx[m], 0] > kx
                    or (pts[idx[m], 0] == kx and pts[idx[m], 1] > ky)
                ):
                    idx[m + 1] = idx[m]
                    m -= 1
                idx[m + 1] = key
            # monotone chain
            nl = 0
            for k in range(8):
                px = pts[idx[k], 0]
                py = pts[idx[k], 1]
                while nl >= 2 and (hx[nl - 1] - hx[nl - 2]) * (py - hy[nl - 2]) - (
                    hy[nl - 1] - hy[nl - 2]
                ) * (px - hx[nl - 2]) <= 0:
                    nl -= 1
                hx[nl] = px
                hy[nl] = py
                nl += 1
            nh = nl
            for k in range(7, -1, -1):
                px = pts[idx[k], 0]
                py = pts[idx[k], 1]
                while nh - nl >= 1 and nh >= nl + 2 and (
                    hx[nh - 1] - hx[nh - 2]
                ) * (py - hy[nh - 2]) - (hy[nh - 1] - hy[nh - 2]) * (
                    px - hx[nh - 2]
                ) <= 0:
                    nh -= 1
                hx[nh] = px
                hy[nh] = py
                nh += 1
            # chains share endpoints; drop the duplicated last vertex
            h = nh - 1
            if h < 2:
                continue
            ymin = hy[0]
            ymax = hy[0]
            for k in range(1, h):
                if hy[k] < ymin:
                    ymin = hy[k]
                if hy[k] > ymax:
                    ymax = hy[k]
            j0 = int(math.ceil(ymin - 0.5))
            j1 = int(math.floor(ymax - 0.5))
            if j0 < 0:
                j0 = 0
            if j1 > height - 1:
                j1 = height - 1
            d = depths[vid]
            for j in range(j0, j1 + 1):
                c = j + 0.5
                xlo = math.inf
                xhi = -math.inf
                for e in range(h):
                    ax = hx[e]
                    ay = hy[e]
                    bx = hx[(e + 1) % h]
                    by = hy[(e + 1) % h]
                    if (ay - c) * (by - c) > 0:
                        continue
                    if ay == by:
                        if ax < xlo:
                            xlo = ax
                        if bx < xlo:
                            xlo = bx
                        if ax > xhi:
                            xhi = ax
                        if bx > xhi:
                            xhi = bx
                    else:
                        x = ax + (c - ay) / (by - ay) * (bx - ax)
                        if x < xlo:
                            xlo = x
                        if x > xhi:
                            xhi = x
                if xlo > xhi:
                    continue
                i0 = int(math.ceil(xlo - 0.5))
                i1 = int(math.floor(xhi - 0.5))
                if i0 < 0:
                    i0 = 0
                if i1 > width - 1:
                    i1 = width - 1
                for i in range(i0, i1 + 1):
                    id_buf[j, i] = vid
                    depth_buf[j, i] = d
        return id_buf, depth_buf


def project_voxels(
    grid: VoxelGrid,
    rig: PseudoCameraRig,
    camera: int = 0,
    use_numba: bool | None = None,
) -> PixelVoxelMap:
    """Render a voxel grid through one rig camera into a pixel-to-voxel map.

    Exactly 8 corner projections are performed per voxel (reported in
    stats["corner_projections"]). Voxels not entirely in front of the camera
    are culled; a voxel containing the camera center is skipped.
    """
    intr = rig.intrinsics
    width, height = intr.width, intr.height
    n = len(grid)
    stats = {
        "corner_projections": 8 * n,
        "voxels_in": n,
        "voxels_rendered": 0,
        "voxels_culled": 0,
        "voxels_camera_inside": 0,
    }
    if n == 0:
        return PixelVoxelMap(
            np.full((height, width), -1, np.int32),
            np.full((height, width), np.inf, np.float32),
            stats,
        )
    rot, center = rig.world_to_camera(camera)
    corners = (
        grid.keys[:, None, :].astype(np.float64) + _CORNER_OFFSETS[None, :, :]
    ) * grid.edge
    cam = (corners - center) @ rot.T  # (V, 8, 3)
    depth8 = cam[:, :, 2]
    in_front = (depth8 > _NEAR).all(axis=1)
    cam_voxel = np.floor(np.asarray(center) / grid.edge).astype(np.int64)
    inside = (grid.keys == cam_voxel).all(axis=1)
    stats["voxels_camera_inside"] = int(inside.sum())
    keep = in_front & ~inside
    stats["voxels_culled"] = int((~in_front & ~inside).sum())
    stats["voxels_rendered"] = int(keep.sum())

    corner_px = np.empty((n, 8, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        corner_px[:, :, 0] = intr.fx * cam[:, :, 0] / depth8 + intr.cx
        corner_px[:, :, 1] = intr.fy * cam[:, :, 1] / depth8 + intr.cy

    vc = (grid.keys.astype(np.float64) + 0.5) * grid.edge
    center_depth = ((vc - center) @ rot.T)[:, 2].astype(np.float32)

    kept = np.nonzero(keep)[0]
    # painter's order: far to near, stable so equal depths resolve by index
    order = kept[np.argsort(-center_depth[kept], kind="stable")].astype(np.int64)
    use_nb = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    fill = _scanline_fill_nb if use_nb else _scanline_fill_py
    id_buf, depth_buf = fill(corner_px, order, center_depth, width, height)
    return PixelVoxelMap(id_buf, depth_buf, stats)


# ---------------------------------------------------------------------------
# Histogram equalization and HSI color


def histogram_equalize(values: np.ndarray, levels: int = 256) -> np.ndarray:
    """Equalize values in [0, 1] over the given quantization levels.

    The lowest occupied level maps to 0 and the highest to 1; a constant
    input maps to all zeros.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return np.zeros_like(v)
    if v.min() < -1e-9 or v.max() > 1 + 1e-9:
        raise ParameterError("values must lie in [0, 1]")
    q = np.clip(np.rint(v * (levels - 1)), 0, levels - 1).astype(np.int64)
    counts = np.bincount(q.reshape(-1), minlength=levels)
    cdf = np.cumsum(counts)
    occupied = np.nonzero(counts)[0]
    cdf_min = counts[occupied[0]]
    total = cdf[-1]
    if total == cdf_min:
        return np.zeros_like(v)
    table = (cdf - cdf_min) / (total - cdf_min)
    table = np.clip(table, 0.0, 1.0)
    return table[q]


def hsi_to_rgb(h_deg: np.ndarray, s: np.ndarray, i: np.ndarray) -> np.ndarray:
    """Three-sector HSI to RGB conversion; inputs broadcast together."""
    h = np.mod(np.asarray(h_deg, dtype=np.float64), 360.0)
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), h.shape).copy()
    i = np.broadcast_to(np.asarray(i, dtype=np.float64), h.shape).copy()
    r = np.zeros_like(h)
    g = np.zeros_like(h)
    b = np.zeros_like(h)

    def sector(hh):
        hr = np.radians(hh)
        return i * (1 + s * np.cos(hr) / np.cos(np.radians(60.0) - hr))

    m0 = h < 120.0
    b[m0] = (i * (1 - s))[m0]
    r[m0] = sector(h)[m0]
    g[m0] = (3 * i - (r + b))[m0]
    m1 = (h >= 120.0) & (h < 240.0)
    hh = h - 120.0
    r[m1] = (i * (1 - s))[m1]
    g[m1] = sector(hh)[m1]
    b[m1] = (3 * i - (r + g))[m1]
    m2 = h >= 240.0
    hh = h - 240.0
    g[m2] = (i * (1 - s))[m2]
    b[m2] = sector(hh)[m2]
    r[m2] = (3 * i - (g + b))[m2]
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def rgb_to_hsi(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of hsi_to_rgb; hue is degrees in [0, 360)."""
    arr = np.asarray(rgb, dtype=np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    i = (r + g + b) / 3.0
    minc = np.minimum(np.minimum(r, g), b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(i > 0, 1.0 - minc / i, 0.0)
    num = 0.5 * ((r - g) + (r - b))
    den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.degrees(np.arccos(np.clip(np.where(den > 0, num / den, 1.0), -1, 1)))
    h = np.where(b > g, 360.0 - theta, theta)
    h = np.where(den > 0, h, 0.0)
    return np.mod(h, 360.0), s, i


@dataclass(frozen=True)
class PseudoColorParams:
    saturation: float = 0.85
    beta1: float = 0.55
    beta2: float = 0.2
    kernel_radius: int = 1
    levels: int = 256

    def __post_init__(self):
        if not 0.0 <= self.saturation <= 1.0:
            raise ParameterError("saturation must lie in [0, 1]")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ParameterError("beta1 and beta2 must be >= 0")
        if self.beta1 + self.beta2 > 1.0 + 1e-12:
            raise ParameterError("beta1 + beta2 must not exceed 1")
        if self.kernel_radius < 1:
            raise ParameterError("kernel_radius must be >= 1")


def depth_edge_response(pvmap: PixelVoxelMap, radius: int = 1) -> np.ndarray:
    """Max absolute depth difference to mapped neighbors within a Chebyshev
    radius; unmapped pixels and unmapped neighbors contribute nothing."""
    mapped = pvmap.mapped
    depth = np.where(mapped, pvmap.depth, 0.0).astype(np.float64)
    h, w = depth.shape
    response = np.zeros((h, w))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            src_y = slice(max(0, -dy), min(h, h - dy))
            src_x = slice(max(0, -dx), min(w, w - dx))
            dst_y = slice(max(0, dy), min(h, h + dy))
            dst_x = slice(max(0, dx), min(w, w + dx))
            both = mapped[dst_y, dst_x] & mapped[src_y, src_x]
            diff = np.abs(depth[dst_y, dst_x] - depth[src_y, src_x])
            sub = response[dst_y, dst_x]
            np.copyto(sub, np.maximum(sub, diff), where=both)
            response[dst_y, dst_x] = sub
    response[~mapped] = 0.0
    return response


def voxel_hues(grid: VoxelGrid, params: PseudoColorParams) -> np.ndarray:
    """Per-voxel hue in degrees from equalized normalized intensity."""
    if len(grid) == 0:
        return np.empty((0,))
    eq = histogram_equalize(grid.intensity, params.levels)
    level = np.clip(np.rint(eq * (params.levels - 1)), 0, params.levels - 1)
    return level * (360.0 / params.levels)


def pseudo_color(
    pvmap: PixelVoxelMap,
    grid: VoxelGrid,
    params: PseudoColorParams | None = None,
    camera: int = 0,
    frame: int = -1,
) -> PseudoImage:
    """Colorize a rendered map: hue from voxel intensity, constant saturation,
    intensity channel brightened at depth edges. Unmapped pixels stay black."""
    params = params or PseudoColorParams()
    mapped = pvmap.mapped
    h_img = np.zeros(mapped.shape)
    i_img = np.zeros(mapped.shape)
    if mapped.any():
        hues = voxel_hues(grid, params)
        h_img[mapped] = hues[pvmap.voxel_id[mapped]]
        response = depth_edge_response(pvmap, params.kernel_radius)
        vals = response[mapped]
        span = vals.max() - vals.min()
        norm = (vals - vals.min()) / span if span > 0 else np.zeros_like(vals)
        i_img[mapped] = params.beta1 + params.beta2 * histogram_equalize(
            norm, params.levels
        )
    rgb = hsi_to_rgb(h_img, params.saturation, i_img)
    rgb[~mapped] = 0.0
    return PseudoImage(rgb.astype(np.float32), pvmap, camera=camera, frame=frame)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    arr = np.asarray(rgb, dtype=np.float64)
    return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]


def render_view(
    grid: VoxelGrid,
    rig: PseudoCameraRig,
    camera: int = 0,
    params: PseudoColorParams | None = None,
    frame: int = -1,
    use_numba: bool | None = None,
) -> PseudoImage:
    pvmap = project_voxels(grid, rig, camera, use_numba=use_numba)
    return pseudo_color(pvmap, grid, params, camera=camera, frame=frame)


def render_sequence(
    grids: dict[int, VoxelGrid],
    rig: PseudoCameraRig,
    params: PseudoColorParams | None = None,
    cameras: list[int] | None = None,
    use_numba: bool | None = None,
) -> dict[int, list[PseudoImage]]:
    """Render every (camera, frame) view, frames in ascending order."""
    cams = cameras if cameras is not None else list(range(rig.n_cameras))
    out: dict[int, list[PseudoImage]] = {}
    for cam in cams:
        images = []
        for frame in sorted(grids):
            images.append(
                render_view(
                    grids[frame], rig, cam, params, frame=frame, use_numba=use_numba
                )
            )
        out[cam] = images
    return out


def save_png(image: PseudoImage, path: str) -> None:
    from PIL import Image

    arr = np.clip(image.rgb * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
