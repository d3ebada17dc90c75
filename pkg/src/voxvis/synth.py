"""Deterministic synthetic scenes and cameras for tests and benchmarks.

Randomness comes from numpy's Philox counter-based generator, keyed as
(seed, stage), so every stage of a scene draws from its own stream and a
given SceneSpec reproduces bit for bit on any platform. Stage keys:
0 structure, 1 labels, 2 camera.

Motifs build a structural cell set, then the occupancy density is honored
exactly: if the structure exceeds density * grid cells it is subsampled,
otherwise random filler voxels are added until the target count is met.

Camera placement rules:
  orbit  random azimuth at 15-45 degrees elevation outside the grid,
         looking at the grid center, focal length set to frame the grid
  front  fixed position off the -x side at mid height, same framing
  kitti  forward-driving layout: grid origin at (0, -Y*s/2, -2), camera at
         the world origin looking down +x, fx = fy = 707.0912
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, CameraRig, RigidTransform, VoxelToWorld
from .errors import ParameterError
from .grid import SemanticVoxelGrid
from .occupancy import DepthMap
from .oracle import MAX_ORACLE_CELLS, first_hit_depths

MOTIFS = ("random", "wall", "corridor", "boxes")
CAMERA_RULES = ("orbit", "front", "kitti")

_STAGE_STRUCTURE, _STAGE_LABELS, _STAGE_CAMERA = 0, 1, 2


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    dims: tuple = (16, 16, 16)
    density: float = 0.2
    motif: str = "random"
    camera: str = "orbit"
    image_size: tuple = (64, 64)
    voxel_size: float = 0.2
    num_classes: int = 20

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ParameterError(f"density must be in [0, 1], got {self.density}")
        if any(d <= 0 for d in self.dims):
            raise ParameterError(f"dims must be positive, got {self.dims}")
        if self.motif not in MOTIFS:
            raise ParameterError(f"unknown motif {self.motif!r}, expected {MOTIFS}")
        if self.camera not in CAMERA_RULES:
            raise ParameterError(f"unknown camera rule {self.camera!r}, expected {CAMERA_RULES}")
        if self.num_classes < 2:
            raise ParameterError("need at least one non-empty class")


def _rng(spec: SceneSpec, stage: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[spec.seed & (2**64 - 1), stage]))


def _box_cells(dims, x0, y0, z0, sx, sy, sz) -> np.ndarray:
    """Linear indices of an axis-aligned box, clipped to the grid."""
    X, Y, Z = dims
    xs = np.arange(max(x0, 0), min(x0 + sx, X))
    ys = np.arange(max(y0, 0), min(y0 + sy, Y))
    zs = np.arange(max(z0, 0), min(z0 + sz, Z))
    if not (xs.size and ys.size and zs.size):
        return np.empty(0, dtype=np.int64)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    return ((gx.reshape(-1) * Y + gy.reshape(-1)) * Z + gz.reshape(-1)).astype(np.int64)


def _structure_stream(spec: SceneSpec, rng: np.random.Generator):
    """Yield batches of cell indices in deterministic order; taking a prefix
    of the stream keeps the occupied set contiguous at any density."""
    X, Y, Z = spec.dims
    if spec.motif == "wall":
        # ground layer, then full y-z walls at random x positions
        yield _box_cells(spec.dims, 0, 0, 0, X, Y, 1)
        for px in rng.permutation(X):
            yield _box_cells(spec.dims, int(px), 0, 1, 1, Y, Z - 1)
        return
    if spec.motif == "corridor":
        yield _box_cells(spec.dims, 0, 0, 0, X, Y, 1)
        yield _box_cells(spec.dims, 0, 0, 1, X, 1, Z - 1)
        yield _box_cells(spec.dims, 0, Y - 1, 1, X, 1, Z - 1)
    else:  # boxes
        yield _box_cells(spec.dims, 0, 0, 0, X, Y, 1)
    # Clutter boxes standing on the ground. Attempt count is bounded; any
    # shortfall against dense targets is topped up with scatter afterwards.
    hi = max(X // 3, 3)
    for _ in range(4 * X * Y):
        sx, sy = (int(v) for v in rng.integers(2, hi, size=2))
        sz = int(rng.integers(2, max(Z - 1, 3)))
        x0 = int(rng.integers(0, max(X - sx, 1)))
        y0 = int(rng.integers(0, max(Y - sy, 1)))
        yield _box_cells(spec.dims, x0, y0, 1, sx, sy, sz)


def _occupied_cells(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Exactly round(density * cells) occupied voxels. The random motif
    scatters them; structured motifs fill contiguous material (ground,
    walls, boxes) until the target count is met."""
    n = spec.dims[0] * spec.dims[1] * spec.dims[2]
    target = int(round(spec.density * n))
    if target == 0:
        return np.empty(0, dtype=np.int64)
    if target == n:
        return np.arange(n, dtype=np.int64)
    if spec.motif == "random":
        return np.sort(rng.permutation(n)[:target].astype(np.int64))

    taken = np.zeros(n, dtype=bool)
    count = 0
    for batch in _structure_stream(spec, rng):
        fresh = batch[~taken[batch]]
        room = target - count
        if fresh.size >= room:
            taken[fresh[:room]] = True
            count = target
            break
        taken[fresh] = True
        count += fresh.size
    if count < target:  # motif exhausted; top up with scatter
        rest = np.flatnonzero(~taken)
        taken[rest[rng.permutation(rest.size)[: target - count]]] = True
    return np.flatnonzero(taken)


def _look_at(eye: np.ndarray, target: np.ndarray) -> RigidTransform:
    """World-to-camera transform with X right, Y down, Z forward and world
    +z as the up reference."""
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    nrm = np.linalg.norm(right)
    if nrm < 1e-9:  # looking straight up/down; pick an arbitrary right
        right = np.array([1.0, 0.0, 0.0])
        nrm = 1.0
    right = right / nrm
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    # Re-orthonormalize so the rotation passes the orthonormality check
    # even after floating-point roundoff.
    u_mat, _, vt = np.linalg.svd(rot)
    rot = u_mat @ vt
    return RigidTransform(rot, -(rot @ eye))


def _framing_focal(image_size, eye, center, radius) -> float:
    """Focal length that keeps a sphere of `radius` around `center` inside
    the image from `eye`, with a small margin."""
    dist = float(np.linalg.norm(center - eye))
    return 0.92 * (min(image_size) / 2.0) * dist / radius


def _place_camera(spec: SceneSpec, vox: VoxelToWorld, rng: np.random.Generator) -> CameraRig:
    W, H = spec.image_size
    X, Y, Z = spec.dims
    span = np.array([X, Y, Z]) * spec.voxel_size
    center = vox.origin + span / 2.0
    radius = float(np.linalg.norm(span)) / 2.0

    if spec.camera == "kitti":
        rot = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
        extr = RigidTransform(rot, np.zeros(3))
        intr = CameraIntrinsics(707.0912, 707.0912, W / 2.0, H / 2.0, W, H)
        return CameraRig(intr, extr, vox)

    if spec.camera == "front":
        eye = center + np.array([-(radius * 1.8), 0.0, 0.35 * span[2]])
    else:  # orbit
        azim = rng.uniform(0.0, 2.0 * np.pi)
        elev = rng.uniform(np.deg2rad(15.0), np.deg2rad(45.0))
        dist = radius * rng.uniform(1.6, 2.4)
        eye = center + dist * np.array(
            [np.cos(elev) * np.cos(azim), np.cos(elev) * np.sin(azim), np.sin(elev)]
        )
    extr = _look_at(eye, center)
    f = _framing_focal(spec.image_size, eye, center, radius)
    intr = CameraIntrinsics(f, f, W / 2.0, H / 2.0, W, H)
    return CameraRig(intr, extr, vox)


def generate(spec: SceneSpec):
    """Build (SemanticVoxelGrid, CameraRig) deterministically from the spec."""
    if spec.camera == "kitti":
        origin = np.array([0.0, -spec.dims[1] * spec.voxel_size / 2.0, -2.0])
    else:
        origin = np.zeros(3)
    vox = VoxelToWorld(origin=origin, voxel_size=spec.voxel_size)

    occupied = _occupied_cells(spec, _rng(spec, _STAGE_STRUCTURE))
    labels = np.zeros(spec.dims[0] * spec.dims[1] * spec.dims[2], dtype=np.uint16)
    if occupied.size:
        labels[occupied] = _rng(spec, _STAGE_LABELS).integers(
            1, spec.num_classes, size=occupied.size, dtype=np.uint16
        )
    grid = SemanticVoxelGrid(spec.dims, labels, vox)
    rig = _place_camera(spec, vox, _rng(spec, _STAGE_CAMERA))
    return grid, rig


def render_reference_depth(
    grid: SemanticVoxelGrid,
    rig: CameraRig,
    *,
    max_cells: int = MAX_ORACLE_CELLS,
    force: bool = False,
) -> DepthMap:
    """Per-pixel first-hit entry depth from the ray-cast reference; pixels
    whose ray hits nothing are invalid (0.0)."""
    depth = first_hit_depths(grid, rig, max_cells=max_cells, force=force)
    intr = rig.intrinsics
    return DepthMap(intr.width, intr.height, depth.astype(np.float32))
