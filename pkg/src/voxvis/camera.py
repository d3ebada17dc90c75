"""Pinhole camera geometry: voxel corners, rigid transforms, projection.

Coordinate conventions used throughout the toolkit:

  World frame:  right-handed, meters. The voxel grid is an axis-aligned
                box in *lattice* coordinates that a VoxelToWorld transform
                (rotation + uniform voxel-size scale + origin) maps into
                the world. Vertex (0,0,0) of voxel (0,0,0) lands exactly
                on the grid origin.
  Camera frame: right-handed, OpenCV-style. X right, Y down, Z forward
                (the camera looks along +Z). Extrinsics map world to
                camera:  p_cam = R @ p_world + t.
  Image frame:  u right, v down, origin at the top-left pixel. Projection
                is  u = round(fx * x/z + cx),  v = round(fy * y/z + cy)
                with round() = half away from zero, so pixel u covers the
                continuous span [u - 0.5, u + 0.5). Pixels with u == width
                or v == height are out of bounds (half-open convention).

Points with camera depth z <= z_min (default 0.1 m) are treated as behind
the near plane; a voxel with any corner behind the near plane is rejected
from rasterization entirely rather than clipped into a partial cube.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GridBoundsError

# Default near-plane distance in meters. Cube corners at or behind this
# depth make unbounded projections, so the whole voxel is rejected.
DEFAULT_Z_MIN = 0.1

# Corner order of a voxel cube: bit0 -> +x, bit1 -> +y, bit2 -> +z.
CORNER_OFFSETS = np.array(
    [[(b >> 0) & 1, (b >> 1) & 1, (b >> 2) & 1] for b in range(8)], dtype=np.float64
)

_ORTHO_TOL = 1e-6


def round_half_away(x):
    """round() with halves away from zero, identical on every platform.

    numpy's default rounding is half-to-even, which is why this exists.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths, principal point, and image size, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RigidTransform:
    """World-to-camera rigid motion: p_cam = rotation @ p_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tra = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        det = np.linalg.det(rot)
        if err > _ORTHO_TOL or abs(det - 1.0) > _ORTHO_TOL:
            raise ValueError(
                f"rotation not orthonormal (|R'R - I| = {err:.2e}, det = {det:.8f})"
            )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points. Elementwise arithmetic, so results are
        identical for any batch slicing (needed for thread determinism)."""
        p = np.asarray(points, dtype=np.float64)
        r, t = self.rotation, self.translation
        out = np.empty_like(p)
        for i in range(3):
            out[..., i] = (
                p[..., 0] * r[i, 0] + p[..., 1] * r[i, 1] + p[..., 2] * r[i, 2] + t[i]
            )
        return out

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    @property
    def camera_center(self) -> np.ndarray:
        """World-frame position of the camera optical center."""
        return -(self.rotation.T @ self.translation)


@dataclass(frozen=True)
class VoxelToWorld:
    """Maps continuous lattice coordinates to world meters.

    world = rotation @ (lattice * voxel_size) + origin

    Voxel (i, j, k) occupies lattice [i, i+1] x [j, j+1] x [k, k+1], so the
    grid origin is the minimum corner of voxel (0, 0, 0).
    """

    origin: np.ndarray
    voxel_size: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(
            self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3)
        )
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "rotation", rot)
        if not self.voxel_size > 0:
            raise ValueError(f"voxel size must be positive, got {self.voxel_size}")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > _ORTHO_TOL or abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("grid rotation not orthonormal")

    def to_world(self, lattice: np.ndarray) -> np.ndarray:
        p = np.asarray(lattice, dtype=np.float64) * self.voxel_size
        r, o = self.rotation, self.origin
        out = np.empty_like(p, dtype=np.float64)
        for i in range(3):
            out[..., i] = (
                p[..., 0] * r[i, 0] + p[..., 1] * r[i, 1] + p[..., 2] * r[i, 2] + o[i]
            )
        return out

    def to_lattice(self, world: np.ndarray) -> np.ndarray:
        p = np.asarray(world, dtype=np.float64)
        r, o = self.rotation, self.origin
        out = np.empty_like(p, dtype=np.float64)
        d = [p[..., i] - o[i] for i in range(3)]
        for i in range(3):
            # inverse rotation = transpose
            out[..., i] = (d[0] * r[0, i] + d[1] * r[1, i] + d[2] * r[2, i]) / self.voxel_size
        return out


@dataclass(frozen=True)
class PixelProjection:
    """One projected point: integer pixel, camera-frame depth, bounds flag."""

    u: int
    v: int
    depth: float
    in_bounds: bool


@dataclass(frozen=True)
class CameraRig:
    """Everything needed to project the grid into one camera."""

    intrinsics: CameraIntrinsics
    extrinsics: RigidTransform
    vox: VoxelToWorld


def voxel_vertices(index, grid_meta: VoxelToWorld, dims=None) -> np.ndarray:
    """The 8 world-space corners of voxel `index`, in fixed corner order.

    Corner order is binary: bit0 -> +x, bit1 -> +y, bit2 -> +z.
    """
    idx = np.asarray(index, dtype=np.int64).reshape(3)
    if dims is not None and (np.any(idx < 0) or np.any(idx >= np.asarray(dims))):
        raise GridBoundsError(f"voxel index {tuple(idx)} outside grid {tuple(dims)}")
    return grid_meta.to_world(idx[None, :] + CORNER_OFFSETS)


def voxel_vertices_batch(indices: np.ndarray, grid_meta: VoxelToWorld) -> np.ndarray:
    """(n, 3) integer voxel indices -> (n, 8, 3) world corners."""
    idx = np.asarray(indices, dtype=np.float64)
    return grid_meta.to_world(idx[:, None, :] + CORNER_OFFSETS[None, :, :])


def project_points(
    points_world: np.ndarray,
    extrinsics: RigidTransform,
    intrinsics: CameraIntrinsics,
    z_min: float = DEFAULT_Z_MIN,
):
    """Vectorized pinhole projection of (..., 3) world points.

    Returns (u, v, depth, in_bounds) with u/v int64 rounded half away from
    zero. u/v for points at or behind the near plane are computed against a
    clamped depth and are meaningless; in_bounds is False there.
    """
    cam = extrinsics.apply(points_world)
    x, y, z = cam[..., 0], cam[..., 1], cam[..., 2]
    # Avoid dividing by ~0 for points near the camera plane; those are
    # flagged out of bounds regardless.
    z_safe = np.where(np.abs(z) < 1e-12, 1e-12, z)
    u_f = round_half_away(intrinsics.fx * x / z_safe + intrinsics.cx)
    v_f = round_half_away(intrinsics.fy * y / z_safe + intrinsics.cy)
    lim = 2**40  # keep the int64 cast safe for extreme off-frustum points
    u = np.clip(u_f, -lim, lim).astype(np.int64)
    v = np.clip(v_f, -lim, lim).astype(np.int64)
    in_bounds = (
        (z > z_min)
        & (u >= 0)
        & (u < intrinsics.width)
        & (v >= 0)
        & (v < intrinsics.height)
    )
    return u, v, z, in_bounds


def project_point(
    p_world,
    extrinsics: RigidTransform,
    intrinsics: CameraIntrinsics,
    z_min: float = DEFAULT_Z_MIN,
) -> PixelProjection:
    """Project a single world point; out-of-frustum is encoded, not raised."""
    u, v, z, ok = project_points(
        np.asarray(p_world, dtype=np.float64).reshape(1, 3), extrinsics, intrinsics, z_min
    )
    return PixelProjection(int(u[0]), int(v[0]), float(z[0]), bool(ok[0]))


def project_voxel(
    index,
    grid_meta: VoxelToWorld,
    extrinsics: RigidTransform,
    intrinsics: CameraIntrinsics,
    dims=None,
    z_min: float = DEFAULT_Z_MIN,
) -> list[PixelProjection]:
    """Project all 8 corners of a voxel, preserving corner order."""
    verts = voxel_vertices(index, grid_meta, dims=dims)
    u, v, z, ok = project_points(verts, extrinsics, intrinsics, z_min)
    return [
        PixelProjection(int(u[i]), int(v[i]), float(z[i]), bool(ok[i])) for i in range(8)
    ]


def unproject_pixel(
    u: float, v: float, intrinsics: CameraIntrinsics, extrinsics: RigidTransform
):
    """World-frame origin and unit direction of the ray through continuous
    image coordinates (u, v). Pixel (i, j)'s center is (i + 0.5, j + 0.5)."""
    d_cam = np.array(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0]
    )
    d_cam /= np.linalg.norm(d_cam)
    d_world = extrinsics.rotation.T @ d_cam
    return extrinsics.camera_center, d_world


# --- calibration file -------------------------------------------------------
#
# Plain text, one `key: values` line per key, `#` starts a comment:
#   K:          9 floats, row-major 3x3 intrinsic matrix
#   Rt:         12 floats, row-major 3x4 [R|t] world-to-camera extrinsics
#   vox_origin: 3 floats, meters
#   vox_size:   1 float, meters
#   dims:       3 ints, voxel grid dimensions (X Y Z)
#   image_size: 2 ints, width height in pixels

_CALIB_KEYS = {"K": 9, "Rt": 12, "vox_origin": 3, "vox_size": 1, "dims": 3, "image_size": 2}


def load_calibration(path):
    """Parse a calibration file -> (CameraRig, dims tuple)."""
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key: values', got {raw!r}")
            key, _, rest = line.partition(":")
            key = key.strip()
            if key not in _CALIB_KEYS:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values = [float(tok) for tok in rest.split()]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            if len(values) != _CALIB_KEYS[key]:
                raise FormatError(
                    f"{path}:{lineno}: {key} needs {_CALIB_KEYS[key]} values, got {len(values)}"
                )
            fields[key] = values
    missing = sorted(set(_CALIB_KEYS) - set(fields))
    if missing:
        raise FormatError(f"{path}: missing keys {missing}")

    k = np.array(fields["K"]).reshape(3, 3)
    rt = np.array(fields["Rt"]).reshape(3, 4)
    width, height = (int(v) for v in fields["image_size"])
    dims = tuple(int(v) for v in fields["dims"])
    if any(d <= 0 for d in dims):
        raise FormatError(f"{path}: dims must be positive, got {dims}")
    intr = CameraIntrinsics(
        fx=k[0, 0], fy=k[1, 1], cx=k[0, 2], cy=k[1, 2], width=width, height=height
    )
    try:
        extr = RigidTransform(rt[:, :3], rt[:, 3])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    vox = VoxelToWorld(origin=np.array(fields["vox_origin"]), voxel_size=fields["vox_size"][0])
    return CameraRig(intr, extr, vox), dims


def save_calibration(path, rig: CameraRig, dims):
    """Write a calibration file that load_calibration round-trips exactly.

    Floats are written with repr(), which is lossless for IEEE doubles.
    Grid rotation is not part of the format; only axis-aligned grids are
    representable on disk.
    """
    if np.abs(rig.vox.rotation - np.eye(3)).max() > 0:
        raise FormatError("calibration files cannot carry a rotated voxel grid")
    intr, extr = rig.intrinsics, rig.extrinsics
    k = [intr.fx, 0.0, intr.cx, 0.0, intr.fy, intr.cy, 0.0, 0.0, 1.0]
    rt = np.hstack([extr.rotation, extr.translation[:, None]]).reshape(-1)
    lines = [
        "# camera + voxel grid calibration",
        "K: " + " ".join(repr(float(v)) for v in k),
        "Rt: " + " ".join(repr(float(v)) for v in rt),
        "vox_origin: " + " ".join(repr(float(v)) for v in rig.vox.origin),
        "vox_size: " + repr(float(rig.vox.voxel_size)),
        "dims: " + " ".join(str(int(d)) for d in dims),
        "image_size: " + f"{intr.width} {intr.height}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
