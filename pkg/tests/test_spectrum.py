import pytest

from bandshare.spectrum import SpectrumAllocation, partition_points


def test_block_and_width():
    a = SpectrumAllocation.block(0.0, 50.0, 100.0)
    assert a.intervals == ((0.0, 50.0),)
    assert a.width == 50.0
    assert a.covers(0.0) and a.covers(49.999) and not a.covers(50.0)


def test_touching_intervals_merge_to_canonical_form():
    split = SpectrumAllocation.from_intervals([(0.0, 20.0), (20.0, 50.0)], 100.0)
    whole = SpectrumAllocation.block(0.0, 50.0, 100.0)
    assert split == whole


def test_unsorted_input_is_sorted():
    a = SpectrumAllocation.from_intervals([(60.0, 70.0), (10.0, 20.0)], 100.0)
    assert a.intervals == ((10.0, 20.0), (60.0, 70.0))
    assert a.width == 20.0


@pytest.mark.parametrize(
    "intervals",
    [
        [(10.0, 10.0)],  # empty
        [(20.0, 10.0)],  # inverted
        [(0.0, 30.0), (20.0, 50.0)],  # overlapping
        [(-1.0, 5.0)],  # below band
        [(90.0, 101.0)],  # beyond band
    ],
)
def test_invalid_intervals_rejected(intervals):
    with pytest.raises(ValueError):
        SpectrumAllocation.from_intervals(intervals, 100.0)


def test_full_band_and_empty():
    full = SpectrumAllocation.full_band(100.0)
    assert full.width == 100.0
    empty = SpectrumAllocation.empty()
    assert empty.is_empty() and empty.width == 0.0
    assert not empty.covers(1.0)


def test_partition_points_cover_all_endpoints():
    a = SpectrumAllocation.from_intervals([(10.0, 20.0), (40.0, 60.0)], 100.0)
    b = SpectrumAllocation.block(15.0, 55.0, 100.0)
    pts = partition_points([a, b], 100.0)
    assert pts == [0.0, 10.0, 15.0, 20.0, 40.0, 55.0, 60.0, 100.0]
    assert pts == sorted(set(pts))
