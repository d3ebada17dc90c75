"""Back-projecting a per-pixel depth map into a voxel occupancy mask.

Each valid pixel lifts to one 3D point at its depth through the pixel
center (u + 0.5, v + 0.5); the voxel containing that point gets its bit
set. Points exactly on a voxel face belong to the lower-index voxel
(floor convention). Depths <= 0 or non-finite are invalid.

Depth file formats:
  raw32  little-endian float32, row-major, height * width values, no header
  png16  16-bit grayscale PNG, depth = value / 256.0 meters, value 0 invalid
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .camera import CameraRig
from .errors import FormatError, ParameterError, ShapeMismatchError
from .grid import VoxelMask, dilate_mask

DEPTH_FORMATS = ("raw32", "png16")


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in meters; invalid pixels are <= 0 or non-finite."""

    width: int
    height: int
    depth: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.depth, dtype=np.float32)
        if d.shape != (self.height, self.width):
            raise ShapeMismatchError(
                f"depth array {d.shape} does not match {self.height}x{self.width}"
            )
        object.__setattr__(self, "depth", d)

    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0)


def occupancy_from_depth(
    depth: DepthMap, rig: CameraRig, dims, dilate: int = 0
) -> VoxelMask:
    """Splat every valid pixel's back-projected point into the grid.

    Optional cubic dilation grows the result by `dilate` voxels for
    consumers that want a margin around the sparse surface.
    """
    intr = rig.intrinsics
    if (depth.width, depth.height) != (intr.width, intr.height):
        raise ShapeMismatchError(
            f"depth map {depth.width}x{depth.height} vs camera "
            f"{intr.width}x{intr.height}"
        )
    vv, uu = np.nonzero(depth.valid())
    d = depth.depth[vv, uu].astype(np.float64)
    x = (uu + 0.5 - intr.cx) * d / intr.fx
    y = (vv + 0.5 - intr.cy) * d / intr.fy
    cam = np.stack([x, y, d], axis=1)
    world = rig.extrinsics.inverse().apply(cam)
    lattice = rig.vox.to_lattice(world)
    idx = np.floor(lattice).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.asarray(dims)), axis=1)
    idx = idx[ok]

    dense = np.zeros(dims, dtype=bool)
    dense[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    mask = VoxelMask.from_dense(dense, dims)
    if dilate > 0:
        mask = dilate_mask(mask, dilate)
    return mask


def load_depth(path, fmt: str, width: int | None = None, height: int | None = None) -> DepthMap:
    """Read a depth map. raw32 needs width/height (the file has no header);
    png16 carries its own size, checked against width/height when given."""
    if fmt == "raw32":
        if width is None or height is None:
            raise ParameterError("raw32 depth needs explicit width and height")
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != width * height:
            raise FormatError(
                f"{path}: {raw.size} float32 values, expected {width * height} "
                f"for {width}x{height}"
            )
        return DepthMap(width, height, raw.reshape(height, width))
    if fmt == "png16":
        with Image.open(path) as img:
            arr = np.asarray(img)
        if arr.dtype not in (np.uint16, np.int32):
            raise FormatError(f"{path}: not a 16-bit grayscale image ({arr.dtype})")
        arr = arr.astype(np.float32)
        if (width is not None and arr.shape[1] != width) or (
            height is not None and arr.shape[0] != height
        ):
            raise FormatError(
                f"{path}: image is {arr.shape[1]}x{arr.shape[0]}, "
                f"expected {width}x{height}"
            )
        return DepthMap(arr.shape[1], arr.shape[0], arr / 256.0)
    raise ParameterError(f"unknown depth format {fmt!r}, expected one of {DEPTH_FORMATS}")


def save_depth(path, depth: DepthMap, fmt: str):
    """Write a depth map. png16 quantizes to 1/256 m and stores invalid
    pixels as 0."""
    if fmt == "raw32":
        depth.depth.astype("<f4").tofile(path)
        return
    if fmt == "png16":
        vals = np.round(depth.depth.astype(np.float64) * 256.0)
        vals = np.where(depth.valid(), np.clip(vals, 0, 65535), 0.0).astype(np.uint16)
        Image.fromarray(vals, mode="I;16").save(path, format="PNG")
        return
    raise ParameterError(f"unknown depth format {fmt!r}, expected one of {DEPTH_FORMATS}")
