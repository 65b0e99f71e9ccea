"""
Voxel grids, affines and exact segment traversal.

Conventions used throughout tractconn:
  - Continuous voxel coordinates place voxel (i, j, k) at its centre; the voxel
    covers [i - 0.5, i + 0.5) on every axis, so membership is floor(coord + 0.5).
  - Linear voxel index is Fortran ordered: i + nx * (j + ny * k).
  - Label 0 is background in every volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from nibabel.affines import apply_affine, voxel_sizes

from tractconn.errors import ConfigurationError, InvalidArgumentError

VoxelIndex = Tuple[int, int, int]

_MIN_DETERMINANT = 1e-12


@dataclass(frozen=True, eq=False)
class Affine:
    """4x4 voxel-to-world transform (world in millimetres)."""

    matrix: np.ndarray
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.shape != (4, 4):
            raise ConfigurationError(f"affine must be 4x4, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ConfigurationError("affine contains non-finite values")
        if not np.allclose(matrix[3], (0.0, 0.0, 0.0, 1.0)):
            raise ConfigurationError(f"affine bottom row must be (0, 0, 0, 1), got {matrix[3]}")
        det = float(np.linalg.det(matrix[:3, :3]))
        if abs(det) <= _MIN_DETERMINANT:
            raise ConfigurationError(f"singular affine (determinant {det:.3g})")
        matrix.setflags(write=False)
        inverse = np.linalg.inv(matrix)
        inverse.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "inverse", inverse)

    @classmethod
    def identity(cls) -> "Affine":
        return cls(np.eye(4))

    @classmethod
    def scaled(cls, voxel_size: Sequence[float], origin: Sequence[float] = (0.0, 0.0, 0.0)) -> "Affine":
        """Axis-aligned grid; `origin` is the world position of the centre of voxel (0, 0, 0)."""
        matrix = np.diag([*map(float, voxel_size), 1.0])
        matrix[:3, 3] = origin
        return cls(matrix)

    @property
    def voxel_size(self) -> Tuple[float, float, float]:
        sizes = voxel_sizes(self.matrix)
        return (float(sizes[0]), float(sizes[1]), float(sizes[2]))

    def to_voxel(self, points: np.ndarray) -> np.ndarray:
        return apply_affine(self.inverse, np.asarray(points, dtype=np.float64))

    def to_world(self, coords: np.ndarray) -> np.ndarray:
        return apply_affine(self.matrix, np.asarray(coords, dtype=np.float64))

    def allclose(self, other: "Affine", atol: float = 1e-6) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=atol))


@dataclass(frozen=True)
class GridShape:
    dims: Tuple[int, int, int]
    voxel_size: Tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or any(int(n) <= 0 for n in self.dims):
            raise ConfigurationError(f"grid dimensions must be three positive integers, got {self.dims}")
        if len(self.voxel_size) != 3 or any(not s > 0 for s in self.voxel_size):
            raise ConfigurationError(f"voxel sizes must be positive, got {self.voxel_size}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "voxel_size", tuple(float(s) for s in self.voxel_size))

    @classmethod
    def from_affine(cls, dims: Sequence[int], affine: Affine) -> "GridShape":
        return cls(tuple(dims), affine.voxel_size)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def linear_index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=np.int64)
        nx, ny, _ = self.dims
        return ijk[..., 0] + nx * (ijk[..., 1] + ny * ijk[..., 2])

    def unravel(self, index) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(index, dtype=np.int64), self.dims, order="F"), axis=-1)

    def contains(self, ijk: Sequence[int]) -> bool:
        return all(0 <= int(c) < n for c, n in zip(ijk, self.dims))


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Integer label grid with its voxel-to-world affine."""

    data: np.ndarray
    affine: Affine
    shape: GridShape = field(init=False)

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ConfigurationError(f"label volume must be 3-D, got {data.ndim}-D")
        if data.dtype.kind not in "iub":
            if not np.all(np.isfinite(data)) or not np.array_equal(data, np.round(data)):
                raise ConfigurationError("label volume holds non-integer values")
        if data.size and data.min() < 0:
            raise ConfigurationError("label volume holds negative labels")
        if data.size and data.max() > np.iinfo(np.uint32).max:
            raise ConfigurationError("labels must fit in 32 bits")
        labels = data.astype(np.uint32, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "data", labels)
        object.__setattr__(self, "shape", GridShape.from_affine(labels.shape, self.affine))

    @cached_property
    def labels(self) -> np.ndarray:
        """Distinct non-zero labels, ascending."""
        values = np.unique(self.data)
        return values[values != 0].astype(np.int64)

    def voxels_of(self, label: int) -> np.ndarray:
        """(n, 3) voxel indices carrying `label`, ordered by linear index."""
        flat = np.flatnonzero(self.data.ravel(order="F") == label)
        return self.shape.unravel(flat).reshape(-1, 3)

    def label_at(self, points: np.ndarray) -> np.ndarray:
        """Label under each world point; 0 for points outside the grid."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cells = np.floor(self.affine.to_voxel(points) + 0.5)
        dims = np.asarray(self.shape.dims)
        inside = np.all((cells >= 0) & (cells < dims), axis=1)
        out = np.zeros(len(points), dtype=np.int64)
        if inside.any():
            ijk = cells[inside].astype(np.int64)
            out[inside] = self.data[ijk[:, 0], ijk[:, 1], ijk[:, 2]]
        return out

    def with_data(self, data: np.ndarray) -> "LabelVolume":
        return LabelVolume(data, self.affine)


@dataclass(frozen=True, eq=False)
class SourceRegion:
    """A label inside a LabelVolume: the voxel set V whose rows form a connectivity matrix."""

    volume: LabelVolume
    label: int

    def __post_init__(self) -> None:
        label = int(self.label)
        if label <= 0 or label not in set(self.volume.labels.tolist()):
            raise InvalidArgumentError(f"source label {label} does not occur in the source volume")
        object.__setattr__(self, "label", label)

    @cached_property
    def voxels(self) -> np.ndarray:
        """Row order of every matrix built on this region."""
        return self.volume.voxels_of(self.label)

    @property
    def n_voxels(self) -> int:
        return len(self.voxels)

    @cached_property
    def row_lookup(self) -> np.ndarray:
        lookup = np.full(self.volume.shape.dims, -1, dtype=np.int64)
        v = self.voxels
        lookup[v[:, 0], v[:, 1], v[:, 2]] = np.arange(len(v))
        lookup.setflags(write=False)
        return lookup

    @cached_property
    def cell_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Half-open bounding box [lo, hi) of the region in cell coordinates."""
        return self.voxels.min(axis=0).astype(np.float64), self.voxels.max(axis=0) + 1.0

    def rows_of(self, voxels: Sequence[VoxelIndex]) -> np.ndarray:
        if not voxels:
            return np.empty(0, dtype=np.int64)
        v = np.asarray(voxels, dtype=np.int64)
        rows = self.row_lookup[v[:, 0], v[:, 1], v[:, 2]]
        return rows[rows >= 0]


def world_to_voxel(p: Sequence[float], affine: Affine) -> np.ndarray:
    """Continuous voxel coordinate of a world point."""
    return affine.to_voxel(np.asarray(p, dtype=np.float64))


def voxel_of(p: Sequence[float], vol: LabelVolume) -> Optional[VoxelIndex]:
    """Voxel containing `p`, or None when `p` lies outside the grid."""
    cell = np.floor(world_to_voxel(p, vol.affine) + 0.5)
    ijk = tuple(int(c) for c in cell)
    return ijk if vol.shape.contains(ijk) else None


def segment_voxels(a: Sequence[float], b: Sequence[float], shape: GridShape, affine: Affine) -> List[VoxelIndex]:
    """
    Voxels crossed by the closed world segment [a, b], in order from a to b.

    Exact parametric grid marching; a voxel touched only at a face, edge or
    corner may or may not be reported.
    """
    cells = affine.to_voxel(np.vstack([a, b])) + 0.5
    return march_cells(cells[0].tolist(), cells[1].tolist(), shape.dims)


def march_cells(start: Sequence[float], end: Sequence[float], dims: Sequence[int]) -> List[VoxelIndex]:
    """
    Amanatides-Woo traversal in cell coordinates (voxel coordinate + 0.5),
    where voxel n covers [n, n + 1). The segment is clipped to the grid box first.
    """
    delta = [end[a] - start[a] for a in range(3)]
    t_enter, t_exit = 0.0, 1.0
    for a in range(3):
        if delta[a] == 0.0:
            if not 0.0 <= start[a] < dims[a]:
                return []
            continue
        t0 = -start[a] / delta[a]
        t1 = (dims[a] - start[a]) / delta[a]
        if t0 > t1:
            t0, t1 = t1, t0
        t_enter = max(t_enter, t0)
        t_exit = min(t_exit, t1)
        if t_enter > t_exit:
            return []

    if t_exit <= t_enter:
        # zero-length overlap with the box: only the start point can count
        cell = [int(math.floor(c)) for c in start]
        if all(0 <= cell[a] < dims[a] for a in range(3)):
            return [(cell[0], cell[1], cell[2])]
        return []

    voxel = [
        min(max(int(math.floor(start[a] + t_enter * delta[a])), 0), dims[a] - 1)
        for a in range(3)
    ]
    step = [1 if d > 0.0 else (-1 if d < 0.0 else 0) for d in delta]
    voxels: List[VoxelIndex] = [(voxel[0], voxel[1], voxel[2])]
    while True:
        axis, t_next = -1, t_exit
        for a in range(3):
            if step[a] == 0:
                continue
            boundary = voxel[a] + 1 if step[a] > 0 else voxel[a]
            t = (boundary - start[a]) / delta[a]
            if t < t_next:
                axis, t_next = a, t
        if axis < 0:
            break
        voxel[axis] += step[axis]
        if not 0 <= voxel[axis] < dims[axis]:
            break
        voxels.append((voxel[0], voxel[1], voxel[2]))
    return voxels


def polyline_cells(
    cells: np.ndarray,
    dims: Sequence[int],
    bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Iterator[VoxelIndex]:
    """
    Voxels crossed by every segment of a polyline given in cell coordinates.

    With `bounds` = (lo, hi), segments lying entirely on one side of the box
    are skipped before marching; voxels are yielded per segment, so a voxel
    shared by consecutive segments appears more than once.
    """
    if len(cells) < 2:
        return
    starts, ends = cells[:-1], cells[1:]
    keep = np.ones(len(starts), dtype=bool)
    if bounds is not None:
        lo, hi = bounds
        seg_min = np.minimum(starts, ends)
        seg_max = np.maximum(starts, ends)
        keep = np.all((seg_max >= lo) & (seg_min < hi), axis=1)
    for s in np.flatnonzero(keep):
        yield from march_cells(starts[s].tolist(), ends[s].tolist(), dims)
