"""NIfTI-1 reading and writing for label volumes and direction fields (via nibabel)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import nibabel as nib
import numpy as np

from tractconn.errors import FormatError, UnsupportedFormatError
from tractconn.grid import Affine, LabelVolume

_log = logging.getLogger(__name__)

# uint8, int16, int32, uint16
LABEL_DATATYPES = {2, 4, 8, 512}
# float32, float64 (direction fields only)
VECTOR_DATATYPES = {16, 64}

PathLike = Union[str, Path]


def _load_nifti1(path: PathLike) -> nib.Nifti1Image:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"NIfTI file not found: {path}")
    if not (path.name.endswith(".nii") or path.name.endswith(".nii.gz")):
        raise UnsupportedFormatError(f"{path}: only single-file .nii / .nii.gz volumes are supported")
    try:
        img = nib.load(str(path))
    except Exception as exc:
        raise FormatError(f"{path}: cannot parse NIfTI header: {exc}") from exc
    # Nifti2Image subclasses Nifti1Image, so compare the exact type
    if type(img) is not nib.Nifti1Image:
        raise UnsupportedFormatError(f"{path}: expected NIfTI-1, got {type(img).__name__}")
    return img


def _header_affine(img: nib.Nifti1Image, path: PathLike) -> Affine:
    hdr = img.header
    sform, sform_code = hdr.get_sform(coded=True)
    qform, qform_code = hdr.get_qform(coded=True)
    if sform_code and sform_code > 0:
        matrix = sform
    elif qform_code and qform_code > 0:
        matrix = qform
    else:
        raise FormatError(f"{path}: neither sform nor qform is set (both codes are 0)")
    return Affine(matrix)


def load_label_volume(path: PathLike) -> LabelVolume:
    img = _load_nifti1(path)
    code = int(img.header["datatype"])
    if code not in LABEL_DATATYPES:
        raise UnsupportedFormatError(
            f"{path}: datatype code {code} is not an accepted label type {sorted(LABEL_DATATYPES)}"
        )
    affine = _header_affine(img, path)
    data = np.asanyarray(img.dataobj)
    if data.ndim == 4 and data.shape[3] == 1:
        data = data[..., 0]
    if data.ndim != 3:
        raise FormatError(f"{path}: label volume must be 3-D, got shape {data.shape}")
    if data.dtype.kind == "f":
        # scl_slope/scl_inter made nibabel return floats; labels must stay integral
        if not np.array_equal(data, np.round(data)):
            raise FormatError(f"{path}: scaled label data is not integer valued")
    if data.size and data.min() < 0:
        raise FormatError(f"{path}: negative labels are not allowed")
    vol = LabelVolume(data, affine)
    _log.info("Loaded %s: dims=%s voxel=%s labels=%d", path, vol.shape.dims, vol.shape.voxel_size, len(vol.labels))
    return vol


def _label_dtype(max_label: int) -> np.dtype:
    if max_label <= np.iinfo(np.uint8).max:
        return np.dtype(np.uint8)
    if max_label <= np.iinfo(np.uint16).max:
        return np.dtype(np.uint16)
    if max_label <= np.iinfo(np.int32).max:
        return np.dtype(np.int32)
    raise FormatError(f"label {max_label} does not fit a NIfTI-1 integer datatype we write")


def _coded_image(data: np.ndarray, affine: Affine) -> nib.Nifti1Image:
    img = nib.Nifti1Image(data, affine.matrix)
    img.set_sform(affine.matrix, code=1)
    img.set_qform(affine.matrix, code=1)
    img.header.set_slope_inter(1.0, 0.0)
    return img


def save_label_volume(vol: LabelVolume, path: PathLike) -> None:
    max_label = int(vol.data.max()) if vol.data.size else 0
    data = vol.data.astype(_label_dtype(max_label))
    img = _coded_image(data, vol.affine)
    img.set_data_dtype(data.dtype)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    nib.save(img, str(path))


def load_vector_volume(path: PathLike):
    """(vectors, affine) for a 4-D NIfTI whose last axis has size 3."""
    img = _load_nifti1(path)
    code = int(img.header["datatype"])
    if code not in VECTOR_DATATYPES | LABEL_DATATYPES:
        raise UnsupportedFormatError(f"{path}: datatype code {code} is not supported for direction fields")
    affine = _header_affine(img, path)
    data = np.asanyarray(img.dataobj).astype(np.float64)
    if data.ndim != 4 or data.shape[3] != 3:
        raise FormatError(f"{path}: direction field must have shape (nx, ny, nz, 3), got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: direction field contains non-finite values")
    return data, affine


def save_vector_volume(vectors: np.ndarray, affine: Affine, path: PathLike) -> None:
    img = _coded_image(np.asarray(vectors, dtype=np.float32), affine)
    img.set_data_dtype(np.float32)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    nib.save(img, str(path))
