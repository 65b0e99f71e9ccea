"""
Connectivity matrix files.

CSV (`*.csv`): header `unassigned,<label>,...`, one line of counts per row, plus
two sidecars next to it: `<stem>_index.csv` (row,i,j,k) and
`<stem>_provenance.json`.

Binary (`*.cmat`), all little-endian:
    magic  b"TCMX" | u32 version=1 | u64 N | u64 M
    M  x u32 column labels
    N x 3 x u32 row voxels (i, j, k)
    N x (M+1) x i64 counts (column 0 = unassigned)
The provenance sidecar is written for both formats.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from tractconn.connectivity import ConnectivityMatrix, Provenance
from tractconn.errors import FormatError, UnsupportedFormatError

_log = logging.getLogger(__name__)

MAGIC = b"TCMX"
VERSION = 1
UNASSIGNED_COLUMN = "unassigned"
INDEX_COLUMNS = ["row", "i", "j", "k"]

_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u8"), ("m", "<u8")])

PathLike = Union[str, Path]


def _stem(path: Path) -> str:
    return path.name[: -len(path.suffix)] if path.suffix else path.name


def index_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(f"{_stem(path)}_index.csv")


def provenance_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(f"{_stem(path)}_provenance.json")


def _write_provenance(C: ConnectivityMatrix, path: Path) -> None:
    text = json.dumps(C.provenance.to_dict(), indent=2, sort_keys=True)
    provenance_path(path).write_text(text + "\n", encoding="utf-8")


def _read_provenance(path: Path) -> Provenance:
    side = provenance_path(path)
    if not side.exists():
        _log.info("No provenance sidecar next to %s", path)
        return Provenance(algorithm="unknown", endpoint_mode="unknown")
    return Provenance.from_dict(json.loads(side.read_text(encoding="utf-8")))


def write_matrix_csv(C: ConnectivityMatrix, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [UNASSIGNED_COLUMN] + [str(int(label)) for label in C.col_labels]
    pd.DataFrame(C.counts, columns=columns).to_csv(path, index=False, lineterminator="\n")

    index = pd.DataFrame(C.row_voxels, columns=INDEX_COLUMNS[1:])
    index.insert(0, "row", np.arange(C.n_rows))
    index.to_csv(index_path(path), index=False, lineterminator="\n")
    _write_provenance(C, path)


def read_matrix_csv(path: PathLike) -> ConnectivityMatrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    side = index_path(path)
    if not side.exists():
        raise FormatError(f"{path}: row index sidecar {side.name} is missing")

    df = pd.read_csv(path, dtype=np.int64)
    if not len(df.columns) or df.columns[0] != UNASSIGNED_COLUMN:
        raise FormatError(f"{path}: first column must be '{UNASSIGNED_COLUMN}'")
    try:
        col_labels = [int(c) for c in df.columns[1:]]
    except ValueError as exc:
        raise FormatError(f"{path}: column headers must be integer labels ({exc})") from exc

    index = pd.read_csv(side, dtype=np.int64)
    if list(index.columns) != INDEX_COLUMNS:
        raise FormatError(f"{side}: expected columns {INDEX_COLUMNS}, got {list(index.columns)}")
    if len(index) != len(df) or not np.array_equal(index["row"].to_numpy(), np.arange(len(df))):
        raise FormatError(f"{side}: rows do not match the {len(df)} rows of {path.name}")

    return ConnectivityMatrix(
        df.to_numpy(dtype=np.int64),
        index[["i", "j", "k"]].to_numpy(dtype=np.int64),
        np.asarray(col_labels, dtype=np.int64),
        _read_provenance(path),
    )


def write_matrix_binary(C: ConnectivityMatrix, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([(MAGIC, VERSION, C.n_rows, C.n_regions)], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(C.col_labels.astype("<u4").tobytes())
        fh.write(C.row_voxels.astype("<u4").tobytes())
        fh.write(C.counts.astype("<i8").tobytes())
    _write_provenance(C, path)


def read_matrix_binary(path: PathLike) -> ConnectivityMatrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.itemsize:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    if header["magic"] != MAGIC:
        raise FormatError(f"{path}: bad magic {header['magic']!r}")
    if int(header["version"]) != VERSION:
        raise UnsupportedFormatError(f"{path}: matrix format version {int(header['version'])} is not supported")
    n, m = int(header["n"]), int(header["m"])

    sizes = [m * 4, n * 3 * 4, n * (m + 1) * 8]
    expected = _HEADER.itemsize + sum(sizes)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for N={n}, M={m}, found {len(raw)}")
    offset = _HEADER.itemsize
    col_labels = np.frombuffer(raw, dtype="<u4", count=m, offset=offset)
    offset += sizes[0]
    row_voxels = np.frombuffer(raw, dtype="<u4", count=n * 3, offset=offset).reshape(n, 3)
    offset += sizes[1]
    counts = np.frombuffer(raw, dtype="<i8", count=n * (m + 1), offset=offset).reshape(n, m + 1)
    return ConnectivityMatrix(counts, row_voxels, col_labels, _read_provenance(path))


def write_matrix(C: ConnectivityMatrix, path: PathLike) -> None:
    """Pick the format from the suffix: .cmat is binary, anything else CSV."""
    if Path(path).suffix == ".cmat":
        write_matrix_binary(C, path)
    else:
        write_matrix_csv(C, path)
    _log.info("Wrote %d x %d matrix to %s", C.n_rows, C.n_regions + 1, path)


def read_matrix(path: PathLike) -> ConnectivityMatrix:
    if Path(path).suffix == ".cmat":
        return read_matrix_binary(path)
    return read_matrix_csv(path)
