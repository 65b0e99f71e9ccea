"""
Streamline containers, even-spacing upsampling, and the pass-through and
endpoint-region primitives used to accumulate connectivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Set

import numpy as np

from tractconn.errors import ConfigurationError, InvalidArgumentError
from tractconn.grid import LabelVolume, SourceRegion, polyline_cells

# gaps within this relative slack of max_spacing are left alone, which keeps
# upsample() idempotent under floating point
_SPACING_RTOL = 1e-9


class EndpointMode(str, Enum):
    LAST = "last"
    BOTH = "both"

    @classmethod
    def parse(cls, value) -> "EndpointMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError as exc:
            raise ConfigurationError(f"endpoint mode must be 'last' or 'both', got {value!r}") from exc


@dataclass(frozen=True, eq=False)
class Streamline:
    """Ordered world-mm points p1..pT, T >= 2."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError(f"streamline points must have shape (T, 3), got {pts.shape}")
        if len(pts) < 2:
            raise InvalidArgumentError(f"a streamline needs at least 2 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("streamline contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    @property
    def first(self) -> np.ndarray:
        return self.points[0]

    @property
    def last(self) -> np.ndarray:
        return self.points[-1]


@dataclass
class Tractogram:
    streamlines: List[Streamline] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.streamlines)

    def __iter__(self) -> Iterator[Streamline]:
        return iter(self.streamlines)

    def __getitem__(self, index):
        return self.streamlines[index]

    @classmethod
    def concatenate(cls, tractograms: Iterable["Tractogram"]) -> "Tractogram":
        streamlines: List[Streamline] = []
        metadata: Dict[str, str] = {}
        for tg in tractograms:
            streamlines.extend(tg.streamlines)
            for key, value in tg.metadata.items():
                metadata.setdefault(key, value)
        return cls(streamlines, metadata)

    def __add__(self, other: "Tractogram") -> "Tractogram":
        return Tractogram.concatenate([self, other])


def upsample(l: Streamline, max_spacing: float) -> Streamline:
    """
    Insert evenly spaced points so no gap exceeds `max_spacing`.

    A gap d > max_spacing is split into ceil(d / max_spacing) equal parts;
    original points are kept bit-for-bit. Gaps up to max_spacing * (1 + 1e-9)
    count as fitting, so rounding in the inserted points never triggers a
    second split and upsample(upsample(l)) == upsample(l).
    """
    if not max_spacing > 0:
        raise InvalidArgumentError(f"max_spacing must be positive, got {max_spacing}")
    pts = l.points
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    parts = np.ones(len(gaps), dtype=np.int64)
    long = gaps > max_spacing * (1.0 + _SPACING_RTOL)
    if not long.any():
        return l
    parts[long] = [math.ceil(g / max_spacing - _SPACING_RTOL) for g in gaps[long]]

    out = [pts[:1]]
    for s, n in enumerate(parts):
        p, q = pts[s], pts[s + 1]
        if n > 1:
            frac = np.arange(1, n, dtype=np.float64)[:, None] / n
            out.append(p + (q - p) * frac)
        out.append(pts[s + 1 : s + 2])
    return Streamline(np.concatenate(out))


def upsample_tractogram(tg: Tractogram, max_spacing: float) -> Tractogram:
    metadata = dict(tg.metadata)
    metadata["upsampled_spacing_mm"] = repr(float(max_spacing))
    return Tractogram([upsample(l, max_spacing) for l in tg], metadata)


def passthrough_rows(l: Streamline, region: SourceRegion) -> Set[int]:
    """Matrix rows of the source voxels the streamline passes through (each once)."""
    vol = region.volume
    cells = vol.affine.to_voxel(l.points) + 0.5
    lookup = region.row_lookup
    rows: Set[int] = set()
    for i, j, k in polyline_cells(cells, vol.shape.dims, region.cell_bounds):
        row = lookup[i, j, k]
        if row >= 0:
            rows.add(int(row))
    return rows


def endpoint_region(l: Streamline, targets: LabelVolume, mode: EndpointMode = EndpointMode.BOTH) -> List[int]:
    """Non-zero target labels under the streamline's terminal point(s)."""
    mode = EndpointMode.parse(mode)
    ends = l.points[[-1]] if mode is EndpointMode.LAST else l.points[[0, -1]]
    return [int(label) for label in targets.label_at(ends) if label != 0]
