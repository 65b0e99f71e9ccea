import numpy as np
import pytest

from tractconn.errors import ConfigurationError, InvalidArgumentError
from tractconn.grid import Affine, LabelVolume
from tractconn.phantoms import make_phantom
from tractconn.streamline import (
    EndpointMode,
    Streamline,
    Tractogram,
    endpoint_region,
    passthrough_rows,
    upsample,
    upsample_tractogram,
)


@pytest.mark.parametrize("points", [[[0, 0, 0]], [[0, 0, 0], [np.nan, 0, 0]], [[0, 0], [1, 1]]])
def test_invalid_streamlines(points):
    with pytest.raises(InvalidArgumentError):
        Streamline(points)


def test_streamline_length():
    l = Streamline([[0, 0, 0], [3, 4, 0], [3, 4, 2]])
    assert l.length == pytest.approx(7.0)
    np.testing.assert_array_equal(l.first, [0, 0, 0])
    np.testing.assert_array_equal(l.last, [3, 4, 2])


def test_upsample_inserts_even_points():
    l = Streamline([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    up = upsample(l, 0.3)
    np.testing.assert_allclose(up.points[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    assert up.points[0].tolist() == l.points[0].tolist()
    assert up.points[-1].tolist() == l.points[-1].tolist()


def test_upsample_keeps_original_points_and_bounds_gaps():
    rng = np.random.default_rng(3)
    l = Streamline(rng.uniform(0, 10, size=(8, 3)))
    up = upsample(l, 0.4)
    gaps = np.linalg.norm(np.diff(up.points, axis=0), axis=1)
    assert gaps.max() <= 0.4 * (1 + 1e-9)
    originals = {tuple(p) for p in l.points.tolist()}
    assert originals <= {tuple(p) for p in up.points.tolist()}


def test_upsample_is_idempotent():
    l = Streamline([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.7, 0.0]])
    once = upsample(l, 0.1)
    twice = upsample(once, 0.1)
    np.testing.assert_array_equal(once.points, twice.points)


def test_upsample_relative_slack_on_gap_length():
    within = Streamline([[0.0, 0.0, 0.0], [0.5 * (1 + 5e-10), 0.0, 0.0]])
    beyond = Streamline([[0.0, 0.0, 0.0], [0.5 * (1 + 1e-6), 0.0, 0.0]])
    assert len(upsample(within, 0.5)) == 2
    assert len(upsample(beyond, 0.5)) == 3


def test_upsample_rejects_non_positive_spacing():
    with pytest.raises(InvalidArgumentError):
        upsample(Streamline([[0, 0, 0], [1, 0, 0]]), 0.0)


def test_upsample_tractogram_records_spacing():
    tg = Tractogram([Streamline([[0, 0, 0], [2, 0, 0]])], {"rng_seed": "1"})
    up = upsample_tractogram(tg, 0.5)
    assert len(up[0]) == 5
    assert up.metadata["rng_seed"] == "1"
    assert float(up.metadata["upsampled_spacing_mm"]) == 0.5


def test_tractogram_concatenation():
    a = Tractogram([Streamline([[0, 0, 0], [1, 0, 0]])], {"seeding": "region"})
    b = Tractogram([Streamline([[0, 1, 0], [1, 1, 0]])] * 2, {"seeding": "other", "k": "2"})
    joined = a + b
    assert len(joined) == 3
    assert joined.metadata == {"seeding": "region", "k": "2"}


def test_passthrough_covers_whole_bar(bar):
    l = Streamline([[2.0, 5.0, 5.0], [22.0, 5.0, 5.0]])
    assert passthrough_rows(l, bar.region) == {0, 1, 2}


def test_passthrough_counts_each_voxel_once(line_region):
    l = Streamline([[0.0, 1.0, 1.0], [4.0, 1.0, 1.0], [2.0, 1.2, 1.0], [2.0, 1.2, 0.9]])
    assert passthrough_rows(l, line_region) == {0, 1, 2}


def test_passthrough_misses_region(bar):
    l = Streamline([[2.0, 1.0, 1.0], [22.0, 1.0, 1.0]])
    assert passthrough_rows(l, bar.region) == set()


def test_endpoint_regions():
    data = np.zeros((10, 1, 1), dtype=np.uint8)
    data[0:2] = 3
    data[8:] = 5
    targets = LabelVolume(data, Affine.identity())
    l = Streamline([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [9.0, 0.0, 0.0]])
    assert endpoint_region(l, targets, EndpointMode.BOTH) == [3, 5]
    assert endpoint_region(l, targets, "last") == [5]
    inside = Streamline([[4.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    assert endpoint_region(inside, targets) == []


def test_endpoint_mode_parse():
    assert EndpointMode.parse("LAST") is EndpointMode.LAST
    with pytest.raises(ConfigurationError):
        EndpointMode.parse("first")


@pytest.mark.parametrize("factor", [2, 5, 17])
def test_passthrough_is_invariant_to_upsampling(factor):
    region = make_phantom("slab", 0.5).region
    rng = np.random.default_rng(factor)
    for _ in range(200):
        n = int(rng.integers(2, 8))
        pts = np.column_stack(
            [rng.uniform(6.0, 18.0, n), rng.uniform(0.0, 8.0, n), rng.uniform(0.0, 8.0, n)]
        )
        l = Streamline(pts)
        spacing = np.linalg.norm(np.diff(pts, axis=0), axis=1).max() / factor
        assert passthrough_rows(upsample(l, spacing), region) == passthrough_rows(l, region)
