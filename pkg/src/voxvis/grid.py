"""Dense semantic voxel grids and bit-packed boolean masks.

Linear indexing is canonical everywhere: index = x*Y*Z + y*Z + z, i.e.
x outermost and z innermost, matching a C-ordered array of shape (X, Y, Z).
Class 0 means empty space. Mask bits are packed MSB-first within each byte
(numpy's packbits/unpackbits default), trailing pad bits zero.

On-disk formats (headerless; dimensions always come from the calibration
file or CLI flags):
  .label  little-endian uint16 labels, flat, canonical order
  .mask   packed bits as above, ceil(X*Y*Z / 8) bytes
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import VoxelToWorld
from .errors import FormatError, ShapeMismatchError


def flatten_index(x, y, z, dims):
    X, Y, Z = dims
    return (np.asarray(x) * Y + np.asarray(y)) * Z + np.asarray(z)


def unflatten_index(linear, dims):
    X, Y, Z = dims
    linear = np.asarray(linear)
    return linear // (Y * Z), (linear // Z) % Y, linear % Z


def _check_dims(a_dims, b_dims, what="operands"):
    if tuple(a_dims) != tuple(b_dims):
        raise ShapeMismatchError(f"{what} have dims {tuple(a_dims)} vs {tuple(b_dims)}")


@dataclass(frozen=True)
class SemanticVoxelGrid:
    """Dense per-voxel class labels plus the transform into world meters."""

    dims: tuple
    labels: np.ndarray
    meta: VoxelToWorld

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint16).reshape(-1)
        if labels.size != dims[0] * dims[1] * dims[2]:
            raise ShapeMismatchError(
                f"{labels.size} labels for dims {dims} (need {dims[0]*dims[1]*dims[2]})"
            )
        object.__setattr__(self, "labels", labels)

    def dense(self) -> np.ndarray:
        """Labels as an (X, Y, Z) view."""
        return self.labels.reshape(self.dims)

    @property
    def num_voxels(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class VoxelMask:
    """Bit-per-voxel boolean grid, packed MSB-first."""

    dims: tuple
    bits: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        n = dims[0] * dims[1] * dims[2]
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size != (n + 7) // 8:
            raise ShapeMismatchError(
                f"{bits.size} mask bytes for dims {dims} (need {(n + 7) // 8})"
            )
        # Pad bits in the last byte must be zero for bytewise comparisons
        # and popcounts to be meaningful.
        pad = bits.size * 8 - n
        if pad and bits.size:
            tail = int(bits[-1]) & ((1 << pad) - 1)
            if tail:
                bits = bits.copy()
                bits[-1] &= np.uint8(0xFF << pad)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_dense(cls, dense: np.ndarray, dims=None) -> "VoxelMask":
        dense = np.asarray(dense)
        if dims is None:
            dims = dense.shape
        return cls(tuple(dims), np.packbits(dense.reshape(-1).astype(bool)))

    @classmethod
    def zeros(cls, dims) -> "VoxelMask":
        n = dims[0] * dims[1] * dims[2]
        return cls(tuple(dims), np.zeros((n + 7) // 8, dtype=np.uint8))

    @classmethod
    def from_linear(cls, linear, dims) -> "VoxelMask":
        n = dims[0] * dims[1] * dims[2]
        dense = np.zeros(n, dtype=bool)
        dense[np.asarray(linear, dtype=np.int64)] = True
        return cls.from_dense(dense, dims)

    def to_dense(self) -> np.ndarray:
        n = self.dims[0] * self.dims[1] * self.dims[2]
        return np.unpackbits(self.bits, count=n).astype(bool).reshape(self.dims)

    def linear_indices(self) -> np.ndarray:
        return np.flatnonzero(self.to_dense().reshape(-1))

    @property
    def count(self) -> int:
        """Number of set bits."""
        return int(np.unpackbits(self.bits).sum())

    def __eq__(self, other):
        if not isinstance(other, VoxelMask):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.bits, other.bits)


def extract_occupied(grid: SemanticVoxelGrid) -> "OccupiedSet":
    """All voxels with nonzero label, in strictly increasing linear order."""
    return OccupiedSet(grid.dims, np.flatnonzero(grid.labels))


@dataclass(frozen=True)
class OccupiedSet:
    """Ordered linear indices of occupied voxels."""

    dims: tuple
    linear: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(
            self, "linear", np.ascontiguousarray(self.linear, dtype=np.int64)
        )

    def __len__(self):
        return self.linear.size

    def indices_xyz(self) -> np.ndarray:
        """(n, 3) integer coordinates in canonical order."""
        x, y, z = unflatten_index(self.linear, self.dims)
        return np.stack([x, y, z], axis=1)

    def to_mask(self) -> VoxelMask:
        return VoxelMask.from_linear(self.linear, self.dims)


def apply_mask(grid: SemanticVoxelGrid, mask: VoxelMask) -> SemanticVoxelGrid:
    """Keep labels where the mask bit is set, zero elsewhere."""
    _check_dims(grid.dims, mask.dims, "grid and mask")
    keep = np.unpackbits(mask.bits, count=grid.num_voxels).astype(bool)
    return SemanticVoxelGrid(grid.dims, np.where(keep, grid.labels, 0), grid.meta)


def mask_union(a: VoxelMask, b: VoxelMask) -> VoxelMask:
    _check_dims(a.dims, b.dims, "masks")
    return VoxelMask(a.dims, a.bits | b.bits)


def mask_intersection(a: VoxelMask, b: VoxelMask) -> VoxelMask:
    _check_dims(a.dims, b.dims, "masks")
    return VoxelMask(a.dims, a.bits & b.bits)


def mask_complement(a: VoxelMask) -> VoxelMask:
    # The constructor re-zeroes the pad bits the inversion flips on.
    return VoxelMask(a.dims, ~a.bits)


def mask_difference(a: VoxelMask, b: VoxelMask) -> VoxelMask:
    """Bits set in a but not b (occupied minus visible gives occluded)."""
    _check_dims(a.dims, b.dims, "masks")
    return VoxelMask(a.dims, a.bits & ~b.bits)


def dilate_mask(mask: VoxelMask, radius: int = 1) -> VoxelMask:
    """Cubic dilation: set every voxel within Chebyshev distance `radius`.

    The cube structuring element is separable, so one pass is a 1-voxel
    dilation along each axis in turn.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    dense = mask.to_dense()
    for _ in range(radius):
        for axis in range(3):
            fwd = np.zeros_like(dense)
            fwd[(slice(None),) * axis + (slice(1, None),)] = dense[
                (slice(None),) * axis + (slice(None, -1),)
            ]
            back = np.zeros_like(dense)
            back[(slice(None),) * axis + (slice(None, -1),)] = dense[
                (slice(None),) * axis + (slice(1, None),)
            ]
            dense = dense | fwd | back
    return VoxelMask.from_dense(dense, mask.dims)


# --- file I/O ----------------------------------------------------------------


def load_labels(path, dims, meta: VoxelToWorld | None = None) -> SemanticVoxelGrid:
    n = dims[0] * dims[1] * dims[2]
    raw = np.fromfile(path, dtype="<u2")
    if raw.size != n:
        raise FormatError(f"{path}: {raw.size} labels, expected {n} for dims {tuple(dims)}")
    if meta is None:
        meta = VoxelToWorld(origin=np.zeros(3), voxel_size=1.0)
    return SemanticVoxelGrid(tuple(dims), raw, meta)


def save_labels(path, grid: SemanticVoxelGrid):
    grid.labels.astype("<u2").tofile(path)


def load_mask(path, dims) -> VoxelMask:
    n = dims[0] * dims[1] * dims[2]
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != (n + 7) // 8:
        raise FormatError(
            f"{path}: {raw.size} bytes, expected {(n + 7) // 8} for dims {tuple(dims)}"
        )
    return VoxelMask(tuple(dims), raw)


def save_mask(path, mask: VoxelMask):
    mask.bits.tofile(path)
