"""
Pie-glyph slices: one pie per source voxel showing its relative connectivity
to the target regions, written as a standalone SVG 1.1 document.

Output is a pure function of the inputs: sectors are ordered by label and all
coordinates are printed with fixed precision.
"""

from __future__ import annotations

import colorsys
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np

from tractconn.connectivity import ConnectivityMatrix
from tractconn.errors import FormatError, InvalidArgumentError
from tractconn.grid import SourceRegion

_log = logging.getLogger(__name__)

PITCH = 20.0
RADIUS_FRACTION = 0.45
OTHER_COLOR = "#bdbdbd"
OTHER = None

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_HUE_BINS = 360
_HEX = re.compile(r"^#[0-9a-fA-F]{6}$")
_AXES = {"x": 0, "y": 1, "z": 2}
_LEGEND_ROW = 16.0


def _hue_bin(label: int) -> int:
    return int(math.floor(((int(label) * _GOLDEN) % 1.0) * _HUE_BINS)) % _HUE_BINS


def _hex_from_hue(bin_: int) -> str:
    r, g, b = colorsys.hsv_to_rgb(bin_ / _HUE_BINS, 0.65, 0.9)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


@dataclass
class Palette:
    """label -> '#rrggbb'."""

    colors: Dict[int, str] = field(default_factory=dict)

    @classmethod
    def for_labels(cls, labels: Sequence[int], overrides: Optional[Dict[int, str]] = None) -> "Palette":
        """
        Golden-ratio hue per label, assigned in ascending label order.

        A label's default colour depends on its value alone unless a smaller
        label of the same palette already holds its 1-degree hue bin; only then
        does it move to the next free bin, so that colour also depends on which
        other labels are present. Up to 360 labels get distinct colours.
        """
        overrides = dict(overrides or {})
        for label, color in overrides.items():
            if not _HEX.match(color):
                raise InvalidArgumentError(f"colour for label {label} must be #rrggbb, got {color!r}")
        taken = set()
        colors: Dict[int, str] = {}
        for label in sorted(int(x) for x in labels):
            if label in overrides:
                colors[label] = overrides[label].lower()
                continue
            hue = _hue_bin(label)
            for _ in range(_HUE_BINS):
                if hue not in taken:
                    break
                hue = (hue + 1) % _HUE_BINS
            taken.add(hue)
            colors[label] = _hex_from_hue(hue)
        return cls(colors)

    def color(self, label: Optional[int]) -> str:
        if label is OTHER:
            return OTHER_COLOR
        return self.colors.get(int(label)) or _hex_from_hue(_hue_bin(label))


class LabelTable(NamedTuple):
    names: Dict[int, str]
    colors: Dict[int, str]


def load_label_names(path: Union[str, Path]) -> LabelTable:
    """Read `label<TAB>name[<TAB>#rrggbb]` lines; blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label table not found: {path}")
    names: Dict[int, str] = {}
    colors: Dict[int, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\r").split("\t")
        if len(parts) not in (2, 3):
            raise FormatError(f"{path}: line {line_no}: expected label<TAB>name[<TAB>#rrggbb], got {line!r}")
        try:
            label = int(parts[0])
        except ValueError as exc:
            raise FormatError(f"{path}: line {line_no}: label {parts[0]!r} is not an integer") from exc
        if label <= 0:
            raise FormatError(f"{path}: line {line_no}: label must be positive, got {label}")
        names[label] = parts[1].strip()
        if len(parts) == 3:
            if not _HEX.match(parts[2].strip()):
                raise FormatError(f"{path}: line {line_no}: colour must be #rrggbb, got {parts[2]!r}")
            colors[label] = parts[2].strip().lower()
    return LabelTable(names, colors)


def pie_sectors(row: np.ndarray, col_labels: Sequence[int], min_fraction: float = 0.02) -> List[Tuple[Optional[int], float]]:
    """
    (label, fraction) sectors for one row of target counts, in label order;
    fractions below `min_fraction` are merged into a trailing OTHER sector.
    Empty for an all-zero row.
    """
    row = np.asarray(row, dtype=np.float64)
    total = row.sum()
    if total <= 0:
        return []
    sectors: List[Tuple[Optional[int], float]] = []
    other = 0.0
    for label, count in zip(col_labels, row):
        if count <= 0:
            continue
        frac = count / total
        if frac < min_fraction:
            other += frac
        else:
            sectors.append((int(label), frac))
    if other > 0:
        sectors.append((OTHER, other))
    return sectors


def sector_angles(sectors: Sequence[Tuple[Optional[int], float]]) -> List[float]:
    return [360.0 * frac for _, frac in sectors]


class SvgDocument:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts: List[str] = []

    def group_start(self, id_: str, title: str = "") -> None:
        self.parts.append(f'<g id="{id_}">\n')
        if title:
            self.parts.append(f"<title>{escape(title)}</title>\n")

    def group_end(self) -> None:
        self.parts.append("</g>\n")

    def circle(self, cx: float, cy: float, r: float, fill: str) -> None:
        self.parts.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{r:.3f}" fill="{fill}"/>\n')

    def wedge(self, cx: float, cy: float, r: float, start_deg: float, sweep_deg: float, fill: str) -> None:
        """Clockwise sector starting `start_deg` from 12 o'clock."""
        a0 = math.radians(start_deg)
        a1 = math.radians(start_deg + sweep_deg)
        x0, y0 = cx + r * math.sin(a0), cy - r * math.cos(a0)
        x1, y1 = cx + r * math.sin(a1), cy - r * math.cos(a1)
        large = 1 if sweep_deg > 180.0 else 0
        self.parts.append(
            f'<path d="M {cx:.3f} {cy:.3f} L {x0:.3f} {y0:.3f} '
            f'A {r:.3f} {r:.3f} 0 {large} 1 {x1:.3f} {y1:.3f} Z" fill="{fill}"/>\n'
        )

    def rect(self, x: float, y: float, w: float, h: float, fill: str, extra: str = "") -> None:
        self.parts.append(f'<rect x="{x:.3f}" y="{y:.3f}" width="{w:.3f}" height="{h:.3f}" fill="{fill}"{extra}/>\n')

    def text(self, x: float, y: float, string: str) -> None:
        self.parts.append(f'<text x="{x:.3f}" y="{y:.3f}" font-family="sans-serif" font-size="11">{escape(string)}</text>\n')

    def render(self) -> str:
        head = (
            '<?xml version="1.0" standalone="no"?>\n'
            '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
            f'<svg version="1.1" width="{self.width:.3f}" height="{self.height:.3f}" '
            f'viewBox="0 0 {self.width:.3f} {self.height:.3f}" xmlns="http://www.w3.org/2000/svg">\n'
        )
        return head + "".join(self.parts) + "</svg>\n"


def _axis_index(axis) -> int:
    if isinstance(axis, str) and axis.lower() in _AXES:
        return _AXES[axis.lower()]
    if axis in (0, 1, 2):
        return int(axis)
    raise InvalidArgumentError(f"axis must be x, y or z, got {axis!r}")


def render_pie_glyphs(
    C: ConnectivityMatrix,
    region: SourceRegion,
    axis="z",
    slice_index: int = 0,
    palette: Optional[Palette] = None,
    min_fraction: float = 0.02,
    names: Optional[Dict[int, str]] = None,
) -> str:
    """SVG of one slice through the source grid; rows with no target counts draw nothing."""
    if not np.array_equal(C.row_voxels, region.voxels):
        raise InvalidArgumentError("matrix rows do not match the source region's voxels")
    if not 0.0 <= min_fraction < 1.0:
        raise InvalidArgumentError(f"min_fraction must lie in [0, 1), got {min_fraction}")
    ax = _axis_index(axis)
    dims = region.volume.shape.dims
    if not 0 <= int(slice_index) < dims[ax]:
        raise InvalidArgumentError(f"slice {slice_index} is outside [0, {dims[ax]}) on axis {'xyz'[ax]}")
    u_ax, v_ax = [a for a in range(3) if a != ax]
    nu, nv = dims[u_ax], dims[v_ax]
    palette = palette or Palette.for_labels(C.col_labels)

    legend = sorted(names.items()) if names else []
    legend = [(label, name) for label, name in legend if label in set(C.col_labels.tolist())]
    doc = SvgDocument(nu * PITCH, nv * PITCH + _LEGEND_ROW * len(legend) + (PITCH / 2 if legend else 0.0))
    doc.rect(0.0, 0.0, nu * PITCH, nv * PITCH, "#ffffff", ' stroke="#cccccc"')

    radius = RADIUS_FRACTION * PITCH
    in_slice = np.flatnonzero(C.row_voxels[:, ax] == int(slice_index))
    drawn = 0
    for row in in_slice:
        sectors = pie_sectors(C.target_counts[row], C.col_labels, min_fraction)
        if not sectors:
            continue
        voxel = tuple(int(c) for c in C.row_voxels[row])
        cx = (voxel[u_ax] + 0.5) * PITCH
        # image rows grow downwards; keep the second in-plane axis pointing up
        cy = (nv - voxel[v_ax] - 0.5) * PITCH
        title = f"{voxel[0]},{voxel[1]},{voxel[2]}: " + ", ".join(
            f"{'other' if label is OTHER else label} {100.0 * frac:.1f}%" for label, frac in sectors
        )
        doc.group_start(f"v{voxel[0]}_{voxel[1]}_{voxel[2]}", title)
        if len(sectors) == 1:
            doc.circle(cx, cy, radius, palette.color(sectors[0][0]))
        else:
            start = 0.0
            for (label, _), sweep in zip(sectors, sector_angles(sectors)):
                doc.wedge(cx, cy, radius, start, sweep, palette.color(label))
                start += sweep
        doc.group_end()
        drawn += 1

    y = nv * PITCH + PITCH / 2
    for label, name in legend:
        doc.rect(4.0, y, 10.0, 10.0, palette.color(label))
        doc.text(20.0, y + 9.0, f"{label} {name}")
        y += _LEGEND_ROW

    _log.info("Rendered %d pie glyphs on slice %s=%d", drawn, "xyz"[ax], int(slice_index))
    return doc.render()
