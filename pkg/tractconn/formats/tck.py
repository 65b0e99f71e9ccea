"""
MRtrix .tck reader/writer on top of nibabel.streamlines.

nibabel handles the header dictionary, the (NaN, NaN, NaN) delimiters and the
(Inf, Inf, Inf) terminator. Around it we keep a header pass that names the
offending line and a payload pass that names the byte offset of bad points.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from nibabel.streamlines import Tractogram as NibTractogram
from nibabel.streamlines.header import Field
from nibabel.streamlines.tck import TckFile
from nibabel.streamlines.tractogram_file import DataError, HeaderError

from tractconn.errors import FormatError, UnsupportedFormatError
from tractconn.streamline import Streamline, Tractogram

_log = logging.getLogger(__name__)

MAGIC = "mrtrix tracks"
DATATYPES = ("Float32LE", "Float32BE")
RESERVED_KEYS = {
    "datatype",
    "file",
    "count",
    Field.MAGIC_NUMBER,
    Field.NB_STREAMLINES,
    Field.ENDIANNESS,
    Field.VOXEL_TO_RASMM,
}
TRIPLET_BYTES = 12

PathLike = Union[str, Path]


def _check_header(path: Path) -> int:
    """Validate the text header line by line and return the data offset."""
    header: Dict[str, str] = {}
    found_end = False
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("ascii").strip()
            except UnicodeDecodeError as exc:
                raise FormatError(f"{path}: line {line_no}: header is not ASCII text ({exc})") from exc
            if line_no == 1:
                if line != MAGIC:
                    raise FormatError(f"{path}: line 1: expected '{MAGIC}', got {line!r}")
                continue
            if line == "END":
                found_end = True
                break
            if not line:
                continue
            if ":" not in line:
                raise FormatError(f"{path}: line {line_no}: expected 'key: value', got {line!r}")
            key, value = line.split(":", 1)
            if not key.strip():
                raise FormatError(f"{path}: line {line_no}: empty key in {line!r}")
            header[key.strip()] = value.strip()
        header_end = fh.tell()
    if not found_end:
        raise FormatError(f"{path}: header is missing the END keyword")

    datatype = header.get("datatype")
    if datatype is None:
        raise FormatError(f"{path}: header has no 'datatype' line")
    if datatype not in DATATYPES:
        raise UnsupportedFormatError(f"{path}: unsupported datatype {datatype!r} (expected Float32LE or Float32BE)")

    parts = header.get("file", "").split()
    if len(parts) != 2 or parts[0] != "." or not parts[1].isdigit():
        raise FormatError(f"{path}: 'file' must be '. <offset>', got {header.get('file', '')!r}")
    offset = int(parts[1])
    if offset < header_end or offset > path.stat().st_size:
        raise FormatError(f"{path}: data offset {offset} lies inside the header or beyond the file")
    return offset


def _to_streamlines(points, path: Path, offset: int) -> List[Streamline]:
    streamlines: List[Streamline] = []
    row = 0
    for pts in points:
        bad = ~np.isfinite(pts).all(axis=1)
        if bad.any():
            at = offset + (row + int(np.flatnonzero(bad)[0])) * TRIPLET_BYTES
            raise FormatError(f"{path}: corrupt point (NaN/Inf outside a delimiter) at byte offset {at}")
        if len(pts) == 1:
            raise FormatError(f"{path}: single-point streamline at byte offset {offset + row * TRIPLET_BYTES}")
        streamlines.append(Streamline(np.asarray(pts, dtype=np.float64)))
        row += len(pts) + 1
    return streamlines


def read_tck(path: PathLike) -> Tractogram:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"TCK file not found: {path}")
    offset = _check_header(path)

    try:
        tck = TckFile.load(str(path))
    except HeaderError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    except DataError as exc:
        raise FormatError(
            f"{path}: truncated data: {exc} (payload from byte offset {offset} to {path.stat().st_size})"
        ) from exc

    streamlines = _to_streamlines(tck.streamlines, path, offset)

    count = tck.header.get("count")
    if isinstance(count, str) and count.isdigit() and int(count) != len(streamlines):
        _log.warning("%s: header count=%s but payload holds %d streamlines", path, count, len(streamlines))

    metadata = {
        k: v
        for k, v in tck.header.items()
        if isinstance(v, str) and k not in RESERVED_KEYS and not k.startswith("_")
    }
    _log.info("Read %d streamlines from %s", len(streamlines), path)
    return Tractogram(streamlines, metadata)


def _header_fields(metadata: Dict[str, str]) -> Dict[str, str]:
    fields: Dict[str, str] = {}
    for key, value in metadata.items():
        if key in RESERVED_KEYS or key.startswith("_"):
            continue
        value = str(value)
        if ":" in key or "\n" in key or "\n" in value or not key.strip():
            raise FormatError(f"metadata entry {key!r} cannot be written to a TCK header")
        fields[key] = value
    return fields


def write_tck(tractogram: Tractogram, path: PathLike) -> None:
    """Write Float32LE; `count` is zero-padded to ten digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = NibTractogram([l.points for l in tractogram], affine_to_rasmm=np.eye(4))
    try:
        TckFile(data, header=_header_fields(tractogram.metadata)).save(str(path))
    except HeaderError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    _log.info("Wrote %d streamlines to %s", len(tractogram), path)
