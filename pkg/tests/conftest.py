import numpy as np
import pytest

from tractconn.connectivity import ConnectivityMatrix, Provenance
from tractconn.grid import Affine, LabelVolume, SourceRegion
from tractconn.phantoms import make_phantom

ENV_NAMES = ("TRACTCONN_LOG_LEVEL", "TRACTCONN_DEBUG", "TRACTCONN_THREADS")


@pytest.fixture
def slab():
    return make_phantom("slab", 2.0)


@pytest.fixture
def bar():
    return make_phantom("bar", 2.0)


@pytest.fixture
def split():
    return make_phantom("split", 2.0)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """No TRACTCONN_* variables and no .env file; restores the environment afterwards."""
    for name in ENV_NAMES:
        # setenv first so teardown also removes anything a .env file loaded
        monkeypatch.setenv(name, "placeholder")
        monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
    return monkeypatch


@pytest.fixture
def line_region():
    """Three voxels of label 1 in a row on a unit grid."""
    data = np.zeros((5, 3, 3), dtype=np.uint8)
    data[1:4, 1, 1] = 1
    return SourceRegion(LabelVolume(data, Affine.identity()), 1)


def make_matrix(region, counts, col_labels=(7, 9), algorithm="proposed"):
    return ConnectivityMatrix(
        np.asarray(counts, dtype=np.int64),
        region.voxels,
        np.asarray(col_labels, dtype=np.int64),
        Provenance(algorithm=algorithm, endpoint_mode="both"),
    )
