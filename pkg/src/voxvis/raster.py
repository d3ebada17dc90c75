"""Sparse voxel rasterization with a global Z-buffer.

Turns a dense semantic grid plus one camera into a per-voxel visibility
mask. For every occupied voxel the cube's 8 corners are projected, the
pixel-space bounding box is sampled on a stride lattice, candidates are
tested against the six projected faces with exact integer cross products,
and accepted pixels write interpolated depths into a shared depth buffer.
A voxel is visible iff it attains the per-pixel minimum depth somewhere.

Two logical passes:
  1. every (pixel, voxel, depth) write lowers the per-pixel minimum;
  2. a voxel owns a pixel iff it wrote a depth within EPS_Z of that
     pixel's minimum and has the lowest linear index among such writers.

Both passes are pure min-reductions, so the result is independent of
traversal order: chunked and threaded runs are bitwise identical to the
sequential one.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .camera import DEFAULT_Z_MIN, CameraRig, PixelProjection, project_points, voxel_vertices_batch
from .errors import ParameterError
from .grid import SemanticVoxelGrid, VoxelMask, apply_mask, extract_occupied, unflatten_index

# Default sampling stride of the candidate lattice inside each AABB.
DEFAULT_STRIDE = 4

# Two depths within this window (meters) count as tied; the lower voxel
# linear index then wins, keeping ownership traversal-order independent.
EPS_Z = 1e-6

# Sentinel for "no voxel owns this pixel".
NO_OWNER = -1

# Pixel coordinates are clamped to this magnitude inside the rasterizer so
# every int64 edge/area cross product stays exact (and within float64's
# integer range). Voxels anywhere near the image are unaffected.
_COORD_LIMIT = 1 << 24

_OWNER_INIT = np.iinfo(np.int64).max

# Six faces of the corner cube (corner order: bit0->+x, bit1->+y, bit2->+z),
# each a cyclic vertex walk of one quadrilateral.
FACES = np.array(
    [
        [0, 2, 6, 4],  # -x
        [1, 3, 7, 5],  # +x
        [0, 1, 5, 4],  # -y
        [2, 3, 7, 6],  # +y
        [0, 1, 3, 2],  # -z
        [4, 5, 7, 6],  # +z
    ],
    dtype=np.int64,
)

_CHUNK_VOXELS = 65536


@dataclass
class DepthBuffer:
    """Per-pixel minimum depth and the voxel that attained it."""

    width: int
    height: int
    min_depth: np.ndarray
    owner: np.ndarray

    @classmethod
    def empty(cls, width: int, height: int) -> "DepthBuffer":
        return cls(
            width,
            height,
            np.full((height, width), np.inf),
            np.full((height, width), NO_OWNER, dtype=np.int64),
        )


@dataclass(frozen=True)
class FaceQuad:
    """One projected cube face: four corner projections in winding order."""

    vertices: tuple

    def __post_init__(self):
        if len(self.vertices) != 4:
            raise ValueError("a face quad has exactly 4 vertices")

    @property
    def us(self):
        return [p.u for p in self.vertices]

    @property
    def vs(self):
        return [p.v for p in self.vertices]

    @property
    def depths(self):
        return [p.depth for p in self.vertices]


@dataclass
class RasterStats:
    occupied: int = 0
    clipped: int = 0
    visible: int = 0
    pixels_written: int = 0
    degenerate_faces: int = 0
    wall_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "occupied": self.occupied,
            "clipped": self.clipped,
            "visible": self.visible,
            "pixels_written": self.pixels_written,
            "degenerate_faces": self.degenerate_faces,
            "wall_ms": round(self.wall_ms, 3),
        }


@dataclass
class VisibilityResult:
    mask: VoxelMask
    depth: DepthBuffer
    stats: RasterStats


def voxel_aabb(projections, width: int, height: int, z_min: float = DEFAULT_Z_MIN):
    """Pixel rectangle (u0, u1, v0, v1), inclusive, bounding the in-front
    corner projections, clamped to the image. None if no in-front corner
    lands anywhere near the image (empty rectangle)."""
    us = [p.u for p in projections if p.depth > z_min]
    vs = [p.v for p in projections if p.depth > z_min]
    if not us:
        return None
    u_lo, u_hi, v_lo, v_hi = min(us), max(us), min(vs), max(vs)
    if u_hi < 0 or u_lo >= width or v_hi < 0 or v_lo >= height:
        return None
    return (
        max(u_lo, 0),
        min(u_hi, width - 1),
        max(v_lo, 0),
        min(v_hi, height - 1),
    )


def sample_pixels(aabb, delta: int):
    """Candidate lattice {u0, u0+delta, ...} x {v0, ...} inside an inclusive
    rectangle, with the max edges appended so AABB corners are always hit.
    Returns an (n, 2) int array of (u, v), u varying fastest."""
    if delta < 1:
        raise ParameterError(f"stride must be >= 1, got {delta}")
    u0, u1, v0, v1 = aabb
    us = np.arange(u0, u1 + 1, delta, dtype=np.int64)
    if us[-1] != u1:
        us = np.append(us, u1)
    vs = np.arange(v0, v1 + 1, delta, dtype=np.int64)
    if vs[-1] != v1:
        vs = np.append(vs, v1)
    uu, vv = np.meshgrid(us, vs)
    return np.stack([uu.reshape(-1), vv.reshape(-1)], axis=1)


def _edge_crosses(us, vs, pu, pv):
    """Signed cross products of the four quad edges against point p.
    Exact when inputs are Python ints or magnitude-clamped int64."""
    out = []
    for k in range(4):
        ax, ay = us[k], vs[k]
        bx, by = us[(k + 1) % 4], vs[(k + 1) % 4]
        out.append((bx - ax) * (pv - ay) - (by - ay) * (pu - ax))
    return out


def point_in_quad(p, quad: FaceQuad) -> bool:
    """True iff p lies inside or on the projected face: the four edge cross
    products must share a sign (all >= 0 or all <= 0)."""
    pu, pv = int(p[0]), int(p[1])
    c = _edge_crosses([int(u) for u in quad.us], [int(v) for v in quad.vs], pu, pv)
    return all(x >= 0 for x in c) or all(x <= 0 for x in c)


def _tri_area2(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def interpolate_depth(p, quad: FaceQuad) -> float:
    """Depth at pixel p by barycentric interpolation over the quad split
    along the fixed 0-2 diagonal. Falls back to the other triangle when one
    collapses, and to the nearest vertex when both do. Integer pixel
    coordinates make collapse exact (area 0), so no epsilon is involved."""
    pu, pv = int(p[0]), int(p[1])
    us = [int(u) for u in quad.us]
    vs = [int(v) for v in quad.vs]
    zs = [float(z) for z in quad.depths]
    area_a = _tri_area2(us[0], vs[0], us[1], vs[1], us[2], vs[2])
    area_b = _tri_area2(us[0], vs[0], us[2], vs[2], us[3], vs[3])
    if area_a == 0 and area_b == 0:
        d2 = [(us[k] - pu) ** 2 + (vs[k] - pv) ** 2 for k in range(4)]
        return zs[d2.index(min(d2))]

    def bary_depth(i, j, k):
        li = _tri_area2(us[j], vs[j], us[k], vs[k], pu, pv)
        lj = _tri_area2(us[k], vs[k], us[i], vs[i], pu, pv)
        lk = _tri_area2(us[i], vs[i], us[j], vs[j], pu, pv)
        area = li + lj + lk
        return (li * zs[i] + lj * zs[j] + lk * zs[k]) / area, (li, lj, lk, area)

    if area_a != 0:
        depth_a, (li, lj, lk, area) = bary_depth(0, 1, 2)
        sign = 1 if area > 0 else -1
        in_a = li * sign >= 0 and lj * sign >= 0 and lk * sign >= 0
        if in_a or area_b == 0:
            return depth_a
    return bary_depth(0, 2, 3)[0]


def _raster_chunk(occ_lin, dims, rig: CameraRig, delta, z_min):
    """Project one slice of the occupied set and emit all depth writes.

    Returns (pix, vox, depth) flat write arrays plus (clipped, degenerate)
    counts. All arithmetic is elementwise, so output values are independent
    of how the occupied set was sliced.
    """
    intr = rig.intrinsics
    W, H = intr.width, intr.height
    xs, ys, zs = unflatten_index(occ_lin, dims)
    verts = voxel_vertices_batch(np.stack([xs, ys, zs], axis=1), rig.vox)
    u, v, z, _ = project_points(verts, rig.extrinsics, intr, z_min)

    in_front = (z > z_min).all(axis=1)
    clipped = int(occ_lin.size - in_front.sum())
    u, v, z, vox_lin = u[in_front], v[in_front], z[in_front], occ_lin[in_front]

    np.clip(u, -_COORD_LIMIT, _COORD_LIMIT, out=u)
    np.clip(v, -_COORD_LIMIT, _COORD_LIMIT, out=v)

    umin, umax = u.min(axis=1), u.max(axis=1)
    vmin, vmax = v.min(axis=1), v.max(axis=1)
    onscreen = (umax >= 0) & (umin < W) & (vmax >= 0) & (vmin < H)
    if not onscreen.any():
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0), clipped, 0

    u, v, z, vox_lin = u[onscreen], v[onscreen], z[onscreen], vox_lin[onscreen]
    u0 = np.clip(umin[onscreen], 0, W - 1)
    u1 = np.clip(umax[onscreen], 0, W - 1)
    v0 = np.clip(vmin[onscreen], 0, H - 1)
    v1 = np.clip(vmax[onscreen], 0, H - 1)

    # Per-voxel per-face quad coordinates and split-triangle areas.
    uf, vf, zf = u[:, FACES], v[:, FACES], z[:, FACES]
    area_a = _tri_area2(
        uf[..., 0], vf[..., 0], uf[..., 1], vf[..., 1], uf[..., 2], vf[..., 2]
    )
    area_b = _tri_area2(
        uf[..., 0], vf[..., 0], uf[..., 2], vf[..., 2], uf[..., 3], vf[..., 3]
    )
    degen = (area_a == 0) & (area_b == 0)
    degenerate = int(degen.sum())

    # Candidate lattice inside each AABB: stride steps plus the max edge.
    wu, wv = u1 - u0, v1 - v0
    qu, qv = wu // delta, wv // delta
    nu = qu + 1 + ((wu % delta) > 0)
    nv = qv + 1 + ((wv % delta) > 0)
    counts = nu * nv
    total = int(counts.sum())
    row = np.repeat(np.arange(counts.size), counts)
    starts = np.zeros(counts.size, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    rank = np.arange(total, dtype=np.int64) - starts[row]
    nu_r, qu_r, qv_r = nu[row], qu[row], qv[row]
    iu, iv = rank % nu_r, rank // nu_r
    pu = np.where(iu > qu_r, u1[row], u0[row] + iu * delta)
    pv = np.where(iv > qv_r, v1[row], v0[row] + iv * delta)

    pix_parts, vox_parts, depth_parts = [], [], []
    for f in range(6):
        act = ~degen[row, f]
        qus, qvs = uf[row, f], vf[row, f]
        c = _edge_crosses(
            [qus[:, k] for k in range(4)], [qvs[:, k] for k in range(4)], pu, pv
        )
        inside = ((c[0] >= 0) & (c[1] >= 0) & (c[2] >= 0) & (c[3] >= 0)) | (
            (c[0] <= 0) & (c[1] <= 0) & (c[2] <= 0) & (c[3] <= 0)
        )
        sel = np.flatnonzero(inside & act)
        if not sel.size:
            continue
        su, sv, srow = pu[sel], pv[sel], row[sel]
        a_u, a_v = qus[sel], qvs[sel]
        z_q = zf[srow, f]
        a_a, a_b = area_a[srow, f], area_b[srow, f]

        l0 = _tri_area2(a_u[:, 1], a_v[:, 1], a_u[:, 2], a_v[:, 2], su, sv)
        l1 = _tri_area2(a_u[:, 2], a_v[:, 2], a_u[:, 0], a_v[:, 0], su, sv)
        l2 = a_a - l0 - l1
        sign_a = np.sign(a_a)
        in_a = (a_a != 0) & (l0 * sign_a >= 0) & (l1 * sign_a >= 0) & (l2 * sign_a >= 0)
        use_a = (a_a != 0) & (in_a | (a_b == 0))

        m0 = _tri_area2(a_u[:, 2], a_v[:, 2], a_u[:, 3], a_v[:, 3], su, sv)
        m1 = _tri_area2(a_u[:, 3], a_v[:, 3], a_u[:, 0], a_v[:, 0], su, sv)
        m2 = a_b - m0 - m1
        num = np.where(
            use_a,
            l0 * z_q[:, 0] + l1 * z_q[:, 1] + l2 * z_q[:, 2],
            m0 * z_q[:, 0] + m1 * z_q[:, 2] + m2 * z_q[:, 3],
        )
        den = np.where(use_a, a_a, np.where(a_b != 0, a_b, 1)).astype(np.float64)
        pix_parts.append(sv * W + su)
        vox_parts.append(vox_lin[srow])
        depth_parts.append(num / den)

    # Degenerate faces skip the inclusion test but still stamp their corner
    # pixels so edge-on slivers stay visible.
    drow, dface = np.nonzero(degen)
    if drow.size:
        su = uf[drow, dface].reshape(-1)
        sv = vf[drow, dface].reshape(-1)
        sz = zf[drow, dface].reshape(-1)
        svox = np.repeat(vox_lin[drow], 4)
        ok = (su >= 0) & (su < W) & (sv >= 0) & (sv < H)
        pix_parts.append(sv[ok] * W + su[ok])
        vox_parts.append(svox[ok])
        depth_parts.append(sz[ok])

    if pix_parts:
        pix = np.concatenate(pix_parts)
        vox = np.concatenate(vox_parts)
        depth = np.concatenate(depth_parts)
    else:
        pix = vox = np.empty(0, dtype=np.int64)
        depth = np.empty(0)
    return pix, vox, depth, clipped, degenerate


def _reduce_writes(pix, vox, depth, width, height):
    """Fold all writes into (min_depth, owner) buffers. Order independent:
    pass 1 is a pure min, pass 2 a min over the EPS_Z tie window."""
    n_pix = width * height
    min_depth = np.full(n_pix, np.inf)
    np.minimum.at(min_depth, pix, depth)
    owner = np.full(n_pix, _OWNER_INIT, dtype=np.int64)
    if pix.size:
        tied = depth <= min_depth[pix] + EPS_Z
        np.minimum.at(owner, pix[tied], vox[tied])
    owner[owner == _OWNER_INIT] = NO_OWNER
    return min_depth.reshape(height, width), owner.reshape(height, width)


def rasterize_visibility(
    grid: SemanticVoxelGrid,
    rig: CameraRig,
    delta: int = DEFAULT_STRIDE,
    *,
    z_min: float = DEFAULT_Z_MIN,
    threads: int = 1,
) -> VisibilityResult:
    """Compute the visibility mask and depth buffer for one camera view.

    Grid geometry (origin, voxel size) comes from the rig's voxel-to-world
    transform. Voxels with any corner at camera depth <= z_min are rejected
    outright. `threads` only changes wall time, never the output.
    """
    if delta < 1:
        raise ParameterError(f"stride must be >= 1, got {delta}")
    t0 = time.perf_counter()
    occupied = extract_occupied(grid)
    stats = RasterStats(occupied=len(occupied))
    intr = rig.intrinsics

    chunks = [
        occupied.linear[i : i + _CHUNK_VOXELS]
        for i in range(0, len(occupied), _CHUNK_VOXELS)
    ] or [occupied.linear]
    run = lambda lin: _raster_chunk(lin, grid.dims, rig, delta, z_min)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]

    pix = np.concatenate([p[0] for p in parts])
    vox = np.concatenate([p[1] for p in parts])
    depth = np.concatenate([p[2] for p in parts])
    stats.clipped = sum(p[3] for p in parts)
    stats.degenerate_faces = sum(p[4] for p in parts)

    min_depth, owner = _reduce_writes(pix, vox, depth, intr.width, intr.height)
    buf = DepthBuffer(intr.width, intr.height, min_depth, owner)

    owners = owner[owner != NO_OWNER]
    mask = VoxelMask.from_linear(owners, grid.dims)
    stats.visible = mask.count
    stats.pixels_written = int(owners.size)
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return VisibilityResult(mask=mask, depth=buf, stats=stats)


def extract_visible_labels(
    grid: SemanticVoxelGrid,
    rig: CameraRig,
    delta: int = DEFAULT_STRIDE,
    *,
    z_min: float = DEFAULT_Z_MIN,
    threads: int = 1,
):
    """End-to-end entry point: visibility mask plus the masked label grid.

    Returns (visible_grid, mask, result).
    """
    result = rasterize_visibility(grid, rig, delta, z_min=z_min, threads=threads)
    visible = apply_mask(grid, result.mask)
    return visible, result.mask, result
