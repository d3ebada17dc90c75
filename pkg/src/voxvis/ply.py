"""Colored point-cloud export of labeled voxel grids.

One point per occupied voxel, placed at the voxel center in world meters.
Binary little-endian PLY with float x/y/z, uchar red/green/blue from the
class palette, and the class id as a uint16 scalar.
"""

from __future__ import annotations

import numpy as np

from .grid import SemanticVoxelGrid, VoxelMask, apply_mask, extract_occupied

# RGB palette for class ids; ids beyond the table wrap around. Index 0
# (empty space) is never exported but keeps indexing aligned.
CLASS_PALETTE = np.array(
    [
        [0, 0, 0],        # 0 empty
        [100, 150, 245],  # 1
        [100, 230, 245],  # 2
        [30, 60, 150],    # 3
        [80, 30, 180],    # 4
        [100, 80, 250],   # 5
        [255, 30, 30],    # 6
        [255, 40, 200],   # 7
        [150, 30, 90],    # 8
        [255, 0, 255],    # 9
        [255, 150, 255],  # 10
        [75, 0, 75],      # 11
        [175, 0, 75],     # 12
        [255, 200, 0],    # 13
        [255, 120, 50],   # 14
        [0, 175, 0],      # 15
        [135, 60, 0],     # 16
        [150, 240, 80],   # 17
        [255, 240, 150],  # 18
        [255, 0, 0],      # 19
    ],
    dtype=np.uint8,
)

_HEADER = """ply
format binary_little_endian 1.0
element vertex {count}
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
property ushort class_id
end_header
"""


def palette_color(class_id) -> np.ndarray:
    ids = np.asarray(class_id, dtype=np.int64)
    wrapped = np.where(ids == 0, 0, 1 + (ids - 1) % (len(CLASS_PALETTE) - 1))
    return CLASS_PALETTE[wrapped]


def export_ply(path, grid: SemanticVoxelGrid, mask: VoxelMask | None = None):
    """Write occupied voxels (optionally restricted by a mask) as points."""
    if mask is not None:
        grid = apply_mask(grid, mask)
    occ = extract_occupied(grid)
    centers = grid.meta.to_world(occ.indices_xyz() + 0.5)
    labels = grid.labels[occ.linear]
    colors = palette_color(labels)

    vertices = np.empty(
        len(occ),
        dtype=[
            ("x", "<f4"),
            ("y", "<f4"),
            ("z", "<f4"),
            ("red", "u1"),
            ("green", "u1"),
            ("blue", "u1"),
            ("class_id", "<u2"),
        ],
    )
    vertices["x"] = centers[:, 0]
    vertices["y"] = centers[:, 1]
    vertices["z"] = centers[:, 2]
    vertices["red"] = colors[:, 0]
    vertices["green"] = colors[:, 1]
    vertices["blue"] = colors[:, 2]
    vertices["class_id"] = labels
    with open(path, "wb") as fh:
        fh.write(_HEADER.format(count=len(occ)).encode("ascii"))
        vertices.tofile(fh)
    return len(occ)
