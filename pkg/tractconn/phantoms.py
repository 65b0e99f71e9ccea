"""
Analytic phantoms with known connectivity.

All phantoms share one world box, x in [0, 24), y and z in [0, 8) mm. The
direction field and the target labels live on a native 2 mm grid whose cell
faces fall on even millimetres; only the source grid changes with resolution.

  slab   two target slabs (label 7 at x < 4, label 9 at x >= 20), a +x field in
         the corridor between them and a 4 mm cubic source block in the middle.
  bar    same slabs and field; the source is a bar of `bar_voxels` voxels
         running along x.
  split  +y field between two slabs at the y ends; each slab is label 7 for
         x < 12 and label 9 for x >= 12, so the source block is cut by the
         plane x = 12 mm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from tractconn.errors import InvalidArgumentError
from tractconn.formats.nifti import save_label_volume
from tractconn.grid import Affine, LabelVolume, SourceRegion
from tractconn.tracking import DirectionField, save_direction_field

_log = logging.getLogger(__name__)

KINDS = ("slab", "bar", "split")
WORLD_MM = (24.0, 8.0, 8.0)
NATIVE_MM = 2.0
SOURCE_LABEL = 1
LEFT_LABEL = 7
RIGHT_LABEL = 9
MIDPLANE_MM = 12.0

Box = Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True, eq=False)
class Phantom:
    kind: str
    source: LabelVolume
    source_label: int
    targets: LabelVolume
    field: DirectionField
    midplane_mm: Optional[float] = None

    @cached_property
    def region(self) -> SourceRegion:
        return SourceRegion(self.source, self.source_label)


def _grid(voxel_mm: float) -> Tuple[Tuple[int, int, int], Affine]:
    dims = tuple(int(round(extent / voxel_mm)) for extent in WORLD_MM)
    if any(abs(n * voxel_mm - extent) > 1e-9 for n, extent in zip(dims, WORLD_MM)):
        raise InvalidArgumentError(f"voxel size {voxel_mm} mm does not tile the {WORLD_MM} mm phantom box")
    return dims, Affine.scaled((voxel_mm,) * 3, origin=(voxel_mm / 2.0,) * 3)


def _fill_box(data: np.ndarray, voxel_mm: float, box: Box, value: int) -> None:
    """Set every voxel whose cell lies inside the world box [lo, hi) per axis."""
    idx = []
    for lo, hi in box:
        a, b = int(round(lo / voxel_mm)), int(round(hi / voxel_mm))
        if abs(a * voxel_mm - lo) > 1e-9 or abs(b * voxel_mm - hi) > 1e-9:
            raise InvalidArgumentError(f"phantom box {box} is not aligned to a {voxel_mm} mm grid")
        idx.append(slice(a, b))
    data[tuple(idx)] = value


def _source_box(kind: str, voxel_mm: float, bar_voxels: int) -> Box:
    if kind == "slab":
        return (10.0, 14.0), (2.0, 6.0), (2.0, 6.0)
    if kind == "bar":
        return (10.0, 10.0 + bar_voxels * voxel_mm), (4.0, 4.0 + voxel_mm), (4.0, 4.0 + voxel_mm)
    return (8.0, 16.0), (2.0, 6.0), (2.0, 6.0)


def make_phantom(kind: str = "slab", source_voxel_mm: float = NATIVE_MM, bar_voxels: int = 3) -> Phantom:
    """Build phantom `kind` with its source label sampled at `source_voxel_mm`."""
    if kind not in KINDS:
        raise InvalidArgumentError(f"phantom must be one of {KINDS}, got {kind!r}")
    if not source_voxel_mm > 0:
        raise InvalidArgumentError(f"source voxel size must be positive, got {source_voxel_mm}")
    if int(bar_voxels) < 1:
        raise InvalidArgumentError(f"bar_voxels must be >= 1, got {bar_voxels}")

    native_dims, native_affine = _grid(NATIVE_MM)
    targets = np.zeros(native_dims, dtype=np.uint8)
    vectors = np.zeros(native_dims + (3,), dtype=np.float64)
    if kind == "split":
        _fill_box(targets, NATIVE_MM, ((0.0, 12.0), (0.0, 2.0), (0.0, 8.0)), LEFT_LABEL)
        _fill_box(targets, NATIVE_MM, ((12.0, 24.0), (0.0, 2.0), (0.0, 8.0)), RIGHT_LABEL)
        _fill_box(targets, NATIVE_MM, ((0.0, 12.0), (6.0, 8.0), (0.0, 8.0)), LEFT_LABEL)
        _fill_box(targets, NATIVE_MM, ((12.0, 24.0), (6.0, 8.0), (0.0, 8.0)), RIGHT_LABEL)
        vectors[:, 1:3, :, 1] = 1.0
        midplane = MIDPLANE_MM
    else:
        _fill_box(targets, NATIVE_MM, ((0.0, 4.0), (0.0, 8.0), (0.0, 8.0)), LEFT_LABEL)
        _fill_box(targets, NATIVE_MM, ((20.0, 24.0), (0.0, 8.0), (0.0, 8.0)), RIGHT_LABEL)
        vectors[2:10, :, :, 0] = 1.0
        midplane = None

    source_dims, source_affine = _grid(float(source_voxel_mm))
    source = np.zeros(source_dims, dtype=np.uint8)
    _fill_box(source, float(source_voxel_mm), _source_box(kind, float(source_voxel_mm), int(bar_voxels)), SOURCE_LABEL)

    phantom = Phantom(
        kind=kind,
        source=LabelVolume(source, source_affine),
        source_label=SOURCE_LABEL,
        targets=LabelVolume(targets, native_affine),
        field=DirectionField(vectors, native_affine),
        midplane_mm=midplane,
    )
    _log.debug("Built %s phantom at %.3g mm: N=%d source voxels", kind, source_voxel_mm, phantom.region.n_voxels)
    return phantom


def write_phantom(phantom: Phantom, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write source.nii.gz, targets.nii.gz and field.nii.gz into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "source": out_dir / "source.nii.gz",
        "targets": out_dir / "targets.nii.gz",
        "field": out_dir / "field.nii.gz",
    }
    save_label_volume(phantom.source, paths["source"])
    save_label_volume(phantom.targets, paths["targets"])
    save_direction_field(phantom.field, paths["field"])
    _log.info("Wrote %s phantom to %s", phantom.kind, out_dir)
    return paths
