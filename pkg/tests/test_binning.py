import numpy as np
import pytest

from ivselect.binning import make_bins
from ivselect.exceptions import DegenerateInstrumentError, InputError


class TestBinaryConvention:
    def test_binary_uses_single_bin_on_larger_value(self):
        z = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
        binning = make_bins(z, 4)
        assert binning.kind == "binary"
        assert binning.n_bins == 1
        assert binning.levels[0].tolist() == [1.0]
        member = binning.membership(z)
        assert member.shape == (5, 1)
        assert member[:, 0].tolist() == [False, True, True, False, True]

    def test_nonstandard_binary_values(self):
        z = np.array([-1.0, 2.5, 2.5, -1.0])
        binning = make_bins(z, 4)
        assert binning.levels[0].tolist() == [2.5]


class TestQuantileBins:
    def test_quartile_cuts_on_uniform_grid(self):
        z = np.arange(1.0, 101.0)
        binning = make_bins(z, 4)
        assert binning.kind == "quantile"
        assert binning.cut_points.tolist() == [25.5, 50.5, 75.5]
        assert binning.masses(z) == pytest.approx(np.full(4, 0.25))

    def test_membership_partitions_support(self, rng):
        z = rng.standard_normal(500)
        binning = make_bins(z, 4)
        member = binning.membership(z)
        assert np.all(member.sum(axis=1) == 1)

    def test_heavy_ties_merge_bins(self):
        z = np.concatenate([np.zeros(97), np.array([1.0, 2.0, 3.0])])
        with pytest.raises(DegenerateInstrumentError):
            make_bins(z, 4)


class TestDiscreteBins:
    def test_rare_level_merges_into_nearest(self):
        z = np.concatenate([np.zeros(50), np.ones(45), np.full(5, 2.0)])
        binning = make_bins(z, 4, min_mass=0.10)
        assert binning.n_bins == 2
        grouped = sorted(tuple(level.tolist()) for level in binning.levels)
        assert grouped == [(0.0,), (1.0, 2.0)]

    def test_all_levels_frequent_one_bin_per_level(self):
        z = np.repeat(np.arange(4.0), 25)
        binning = make_bins(z, 4)
        assert binning.kind == "discrete"
        assert binning.n_bins == 4
        assert binning.masses(z) == pytest.approx(np.full(4, 0.25))

    def test_value_outside_support_rejected(self):
        z = np.repeat(np.arange(3.0), 10)
        binning = make_bins(z, 4)
        with pytest.raises(InputError):
            binning.labels(np.array([7.0]))


def test_constant_instrument_rejected():
    with pytest.raises(DegenerateInstrumentError):
        make_bins(np.ones(50), 4)
