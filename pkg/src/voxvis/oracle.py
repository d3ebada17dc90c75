"""Brute-force visibility ground truth via per-pixel ray casting.

Deliberately the slow reference: every pixel (optionally supersampled)
shoots a ray from the camera center, an incremental grid walk visits the
voxels along it in order, and the first occupied voxel is visible. Rays
are batched with numpy and stepped in lockstep, but the semantics are a
plain per-ray walk. Accumulation is a bit-set union, so results do not
depend on ray order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraRig
from .errors import GridTooLargeError, ShapeMismatchError
from .grid import SemanticVoxelGrid, VoxelMask

# Refuse to walk grids larger than this without an explicit override;
# the walk is O(pixels * grid extent) and meant for validation scales.
MAX_ORACLE_CELLS = 1 << 22


@dataclass(frozen=True)
class AgreementReport:
    """Set statistics between two masks of equal dims."""

    iou: float
    intersection: int
    union: int
    only_a: int
    only_b: int

    def to_json(self) -> dict:
        return {
            "iou": self.iou,
            "intersection": self.intersection,
            "union": self.union,
            "only_a": self.only_a,
            "only_b": self.only_b,
        }


def compare_masks(a: VoxelMask, b: VoxelMask) -> AgreementReport:
    """IoU of set bits plus both set differences. Empty vs empty is 1.0."""
    if a.dims != b.dims:
        raise ShapeMismatchError(f"masks have dims {a.dims} vs {b.dims}")
    da, db = a.to_dense().reshape(-1), b.to_dense().reshape(-1)
    inter = int(np.count_nonzero(da & db))
    union = int(np.count_nonzero(da | db))
    return AgreementReport(
        iou=inter / union if union else 1.0,
        intersection=inter,
        union=union,
        only_a=int(np.count_nonzero(da & ~db)),
        only_b=int(np.count_nonzero(db & ~da)),
    )


def _pixel_ray_dirs(rig: CameraRig, points_uv: np.ndarray):
    """Unit camera-frame z of each ray and its direction in lattice space.

    Lattice direction is scaled so the ray parameter t is meters along the
    world-space unit ray; camera depth of a point at parameter t is then
    t * dir_cam_z.
    """
    intr, extr, vox = rig.intrinsics, rig.extrinsics, rig.vox
    d_cam = np.stack(
        [
            (points_uv[:, 0] - intr.cx) / intr.fx,
            (points_uv[:, 1] - intr.cy) / intr.fy,
            np.ones(len(points_uv)),
        ],
        axis=1,
    )
    d_cam /= np.linalg.norm(d_cam, axis=1, keepdims=True)
    d_world = d_cam @ extr.rotation  # row-vector form of R.T @ d
    d_lat = (d_world @ vox.rotation) / vox.voxel_size
    origin_lat = vox.to_lattice(extr.camera_center)
    return d_lat, origin_lat, d_cam[:, 2]


def _trace_first_hits(occ_flat: np.ndarray, dims, rig: CameraRig, points_uv: np.ndarray):
    """Walk every ray through the grid; return (hit linear index or -1,
    entry parameter t in meters, camera-z per unit t) per ray."""
    X, Y, Z = dims
    dims_arr = np.array(dims, dtype=np.int64)
    d_lat, origin, dz_cam = _pixel_ray_dirs(rig, points_uv)
    m = len(points_uv)

    # Slab clip of each ray against the lattice box [0,X]x[0,Y]x[0,Z].
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d_lat
    t_lo = (0.0 - origin) * inv
    t_hi = (dims_arr - origin) * inv
    # Rays parallel to an axis: inside the slab iff origin is.
    par = d_lat == 0.0
    inside_slab = (origin >= 0.0) & (origin <= dims_arr)
    t_near = np.where(par, -np.inf, np.minimum(t_lo, t_hi))
    t_far = np.where(par, np.where(inside_slab, np.inf, -np.inf), np.maximum(t_lo, t_hi))
    t_enter = t_near.max(axis=1)
    t_exit = t_far.min(axis=1)
    active = (t_enter <= t_exit) & (t_exit > 0.0)

    t = np.maximum(t_enter, 0.0)
    pos = origin[None, :] + t[:, None] * d_lat
    cell = np.clip(np.floor(pos).astype(np.int64), 0, dims_arr - 1)
    step = np.sign(d_lat).astype(np.int64)
    with np.errstate(divide="ignore"):
        t_delta = np.abs(inv)
    t_delta = np.where(par, np.inf, t_delta)
    boundary = cell + (step > 0)
    t_max = np.where(par, np.inf, t[:, None] + (boundary - pos) * inv)

    hit = np.full(m, -1, dtype=np.int64)
    hit_t = np.full(m, np.inf)
    entry_t = t.copy()
    rows = np.arange(m)

    # Lockstep walk; each ray visits at most X+Y+Z+1 cells.
    for _ in range(X + Y + Z + 1):
        if not active.any():
            break
        lin = (cell[:, 0] * Y + cell[:, 1]) * Z + cell[:, 2]
        occ = active & occ_flat[np.clip(lin, 0, occ_flat.size - 1)]
        if occ.any():
            hit[occ] = lin[occ]
            hit_t[occ] = entry_t[occ]
            active &= ~occ
        axis = np.argmin(t_max, axis=1)
        t_cross = t_max[rows, axis]
        entry_t = np.where(active, t_cross, entry_t)
        cell[rows, axis] += np.where(active, step[rows, axis], 0)
        t_max[rows, axis] = np.where(
            active, t_cross + t_delta[rows, axis], t_cross
        )
        oob = (cell[rows, axis] < 0) | (cell[rows, axis] >= dims_arr[axis])
        active &= ~oob & (t_cross <= t_exit)

    return hit, hit_t, dz_cam


def _guard_size(dims, max_cells, force):
    n = dims[0] * dims[1] * dims[2]
    if n > max_cells and not force:
        raise GridTooLargeError(
            f"grid has {n} cells > {max_cells}; pass force=True to walk it anyway"
        )


def cast_visibility(
    grid: SemanticVoxelGrid,
    rig: CameraRig,
    supersample: int = 2,
    *,
    max_cells: int = MAX_ORACLE_CELLS,
    force: bool = False,
) -> VoxelMask:
    """Visibility mask from exhaustive ray casting.

    Shoots supersample^2 rays per pixel through sub-pixel centers
    (u + (i + 0.5)/s); the first occupied voxel on each ray is visible, and
    the mask is the union over all rays. A ray starting inside an occupied
    voxel sees that voxel.
    """
    if supersample < 1:
        raise ValueError(f"supersample must be >= 1, got {supersample}")
    _guard_size(grid.dims, max_cells, force)
    intr = rig.intrinsics
    occ_flat = grid.labels != 0

    offsets = (np.arange(supersample) + 0.5) / supersample
    uu, vv = np.meshgrid(
        np.arange(intr.width, dtype=np.float64), np.arange(intr.height, dtype=np.float64)
    )
    visible = np.zeros(grid.num_voxels, dtype=bool)
    for du in offsets:
        for dv in offsets:
            pts = np.stack([(uu + du).reshape(-1), (vv + dv).reshape(-1)], axis=1)
            hit, _, _ = _trace_first_hits(occ_flat, grid.dims, rig, pts)
            visible[hit[hit >= 0]] = True
    return VoxelMask.from_dense(visible.reshape(grid.dims), grid.dims)


def first_hit_depths(
    grid: SemanticVoxelGrid,
    rig: CameraRig,
    *,
    max_cells: int = MAX_ORACLE_CELLS,
    force: bool = False,
) -> np.ndarray:
    """(H, W) camera-frame entry depth of the first occupied voxel along
    each pixel-center ray; 0.0 where the ray hits nothing."""
    _guard_size(grid.dims, max_cells, force)
    intr = rig.intrinsics
    occ_flat = grid.labels != 0
    uu, vv = np.meshgrid(
        np.arange(intr.width, dtype=np.float64), np.arange(intr.height, dtype=np.float64)
    )
    pts = np.stack([(uu + 0.5).reshape(-1), (vv + 0.5).reshape(-1)], axis=1)
    hit, hit_t, dz = _trace_first_hits(occ_flat, grid.dims, rig, pts)
    depth = np.where(hit >= 0, hit_t * dz, 0.0)
    return depth.reshape(intr.height, intr.width)
