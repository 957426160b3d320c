"""Tests for window partitioning and fractal regrouping."""

import numpy as np
import pytest

from engine.tensor import Tensor
from fractal.partition import (
    FractalGeometry,
    GeometryError,
    fractal_regroup,
    fractal_regroup_reverse,
    index_map_oracle,
    window_partition,
    window_reverse,
)


def _pixel_ids(height, width, batch=1):
    """Feature map whose single channel holds the flat pixel index."""
    ids = np.arange(batch * height * width, dtype=np.float64).reshape(batch, height, width, 1)
    return Tensor(ids)


def _valid_geometries(limit=16):
    for height in range(1, limit + 1):
        for width in range(1, limit + 1):
            for p in range(1, min(height, width) + 1):
                for s in range(1, min(height, width) // p + 1):
                    if height % (p * s) == 0 and width % (p * s) == 0:
                        yield FractalGeometry(height, width, p, s)


class TestFractalGeometry:
    """Test cases for FractalGeometry."""

    def test_region(self):
        """Test P = s * p."""
        assert FractalGeometry(8, 8, 2, 4).region == 8

    def test_non_tiling_extent_raises(self):
        """Test H=6 with P=4 is rejected."""
        with pytest.raises(GeometryError):
            FractalGeometry(6, 8, 2, 2).validate()

    def test_non_positive_extent_raises(self):
        """Test zero window side is rejected."""
        with pytest.raises(GeometryError):
            FractalGeometry(4, 4, 0, 2).validate()


class TestWindowPartition:
    """Test cases for window_partition and window_reverse."""

    def test_single_window_is_flatten(self, rng):
        """Test p = H = W gives one window equal to the flattened image."""
        x = rng.standard_normal((1, 4, 4, 3))
        out = window_partition(Tensor(x), 4).data
        np.testing.assert_array_equal(out, x.reshape(1, 16, 3))

    def test_hand_worked_pixel(self):
        """Test pixel (2, 3) of a 4x4 image with p=2 lands in window 3 at position 1."""
        out = window_partition(_pixel_ids(4, 4), 2).data
        assert out[3, 1, 0] == 2 * 4 + 3

    def test_round_trip_exact(self, rng):
        """Test window_reverse inverts window_partition exactly."""
        x = rng.standard_normal((2, 6, 4, 3))
        back = window_reverse(window_partition(Tensor(x), 2), 2, 6, 4).data
        np.testing.assert_array_equal(back, x)

    def test_non_multiple_raises(self):
        """Test H not a multiple of p raises GeometryError."""
        with pytest.raises(GeometryError):
            window_partition(Tensor(np.zeros((1, 5, 4, 1))), 2)


class TestFractalRegroup:
    """Test cases for fractal_regroup."""

    def test_group_of_one_keeps_order(self, rng):
        """Test s=1 gives singleton groups in the level-1 order."""
        geometry = FractalGeometry(4, 4, 2, 1)
        y1 = window_partition(Tensor(rng.standard_normal((1, 4, 4, 2))), 2)
        out = fractal_regroup(y1, geometry).data
        np.testing.assert_array_equal(out, y1.data.reshape(-1, 1, 2))

    def test_unit_windows_group_neighbours(self):
        """Test p=1, s=2 on 4x4 puts pixels {(0,0),(0,1),(1,0),(1,1)} in group 0."""
        geometry = FractalGeometry(4, 4, 1, 2)
        out = fractal_regroup(window_partition(_pixel_ids(4, 4), 1), geometry).data
        np.testing.assert_array_equal(out[0, :, 0], [0, 1, 4, 5])

    def test_round_trip_exact(self, rng):
        """Test the reverse regroup restores the level-1 tensor exactly."""
        geometry = FractalGeometry(8, 4, 2, 2)
        y1 = window_partition(Tensor(rng.standard_normal((2, 8, 4, 3))), 2)
        back = fractal_regroup_reverse(fractal_regroup(y1, geometry), geometry).data
        np.testing.assert_array_equal(back, y1.data)

    def test_groups_stay_inside_one_region(self):
        """Test every level-2 group draws from a single P x P region."""
        geometry = FractalGeometry(8, 12, 2, 2)
        out = fractal_regroup(window_partition(_pixel_ids(8, 12), 2), geometry).data[..., 0].astype(int)
        rows, cols = out // 12, out % 12
        regions = (rows // geometry.region) * 100 + cols // geometry.region
        assert np.all(regions == regions[:, :1])

    def test_mismatched_tensor_raises(self):
        """Test a level-1 tensor from another geometry is rejected."""
        y1 = window_partition(Tensor(np.zeros((1, 4, 4, 1))), 2)
        with pytest.raises(GeometryError):
            fractal_regroup(y1, FractalGeometry(4, 4, 1, 2))


class TestIndexMapOracle:
    """Test cases for index_map_oracle against the tensor path."""

    def test_hand_worked_level1(self):
        """Test pixel (2, 3) maps to 3 * 4 + 1 under the level-1 map."""
        oracle = index_map_oracle(FractalGeometry(4, 4, 2, 2), 'L1')
        assert oracle.permutation[2 * 4 + 3] == 13

    def test_hand_worked_level2(self):
        """Test pixels (0, 1) and (2, 3) of a 4x4 map with p=s=2."""
        oracle = index_map_oracle(FractalGeometry(4, 4, 2, 2), 'L2')
        assert oracle.permutation[0 * 4 + 1] == 4
        assert oracle.permutation[2 * 4 + 3] == 7

    def test_identity_for_unit_geometry(self):
        """Test p = s = 1 maps every pixel to itself at both stages."""
        for stage in ('L1', 'L2'):
            oracle = index_map_oracle(FractalGeometry(3, 5, 1, 1), stage)
            np.testing.assert_array_equal(oracle.permutation, np.arange(15))

    def test_unknown_stage_raises(self):
        """Test only L1 and L2 are accepted."""
        with pytest.raises(ValueError):
            index_map_oracle(FractalGeometry(4, 4, 2, 2), 'L3')

    def test_exhaustive_agreement(self):
        """Test both stages match the tensor path for every geometry up to 16x16."""
        checked = 0
        for geometry in _valid_geometries():
            x = _pixel_ids(geometry.height, geometry.width, batch=2)
            pixels = geometry.height * geometry.width
            y1 = window_partition(x, geometry.window)
            y2 = fractal_regroup(y1, geometry)

            l1 = index_map_oracle(geometry, 'L1')
            l2 = index_map_oracle(geometry, 'L2')
            assert l1.is_bijection() and l2.is_bijection()
            np.testing.assert_array_equal(y1.data.reshape(2, pixels, 1), l1.apply(x.data))
            np.testing.assert_array_equal(y2.data.reshape(2, pixels, 1), l2.apply(x.data))
            checked += 1
        assert checked > 100
