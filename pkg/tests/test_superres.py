import numpy as np
import pytest

from tractconn.connectivity import connectivity_from_tractogram, parcellate
from tractconn.errors import ConsistencyError, InvalidArgumentError
from tractconn.phantoms import make_phantom
from tractconn.streamline import Streamline, Tractogram
from tractconn.superres import superres_connectivity, superres_spacing
from tractconn.tracking import TrackParams, track_region


@pytest.fixture(scope="module")
def split_tracks():
    low = make_phantom("split", 2.0)
    return track_region(low.region, low.field, TrackParams(rng_seed=3), 3000)


@pytest.fixture(scope="module")
def hi():
    return make_phantom("split", 0.5)


def test_spacing_is_half_the_smallest_voxel(hi):
    assert superres_spacing(hi.region) == pytest.approx(0.25)


def test_fine_parcellation_follows_the_midplane(split_tracks, hi):
    C = superres_connectivity(split_tracks, hi.region, hi.targets, verify=True)
    assert C.provenance.algorithm == "superres"
    parcels = parcellate(C, hi.region)
    centres = hi.source.affine.to_world(hi.region.voxels.astype(np.float64))
    expected = np.where(centres[:, 0] < hi.midplane_mm, 7, 9)
    v = hi.region.voxels
    np.testing.assert_array_equal(parcels.data[v[:, 0], v[:, 1], v[:, 2]], expected)


def test_native_grid_matches_plain_accumulation(split_tracks):
    low = make_phantom("split", 2.0)
    C = superres_connectivity(split_tracks, low.region, low.targets, verify=False)
    plain = connectivity_from_tractogram(split_tracks, low.region, low.targets)
    np.testing.assert_array_equal(C.counts, plain.counts)


def test_empty_tractogram(hi):
    with pytest.raises(InvalidArgumentError):
        superres_connectivity(Tractogram(), hi.region, hi.targets)


def _shift_away(tg, spacing):
    return Tractogram([Streamline(l.points + [0.0, 0.0, 100.0]) for l in tg], tg.metadata)


def test_self_check_catches_a_broken_upsampler(monkeypatch, split_tracks, hi):
    monkeypatch.setattr("tractconn.superres.upsample_tractogram", _shift_away)
    with pytest.raises(ConsistencyError):
        superres_connectivity(split_tracks, hi.region, hi.targets, verify=True)


def test_self_check_follows_debug_setting(clean_env, split_tracks, hi):
    clean_env.setattr("tractconn.superres.upsample_tractogram", _shift_away)
    C = superres_connectivity(split_tracks, hi.region, hi.targets)
    assert C.counts.sum() == 0
    clean_env.setenv("TRACTCONN_DEBUG", "1")
    with pytest.raises(ConsistencyError):
        superres_connectivity(split_tracks, hi.region, hi.targets)
