"""File formats: NIfTI volumes, TCK tractograms, connectivity matrices."""

__all__ = [
    "matrix",
    "nifti",
    "tck",
]
