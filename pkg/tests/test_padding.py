"""Tests for reflect padding and cropping."""

import numpy as np

from harness.padding import crop, pad_reflect_to_geometry


class TestPadding:
    """Test cases for pad_reflect_to_geometry and crop."""

    def test_already_tiled_is_unchanged(self, rng):
        """Test inputs on the multiple come back as-is."""
        x = rng.random((1, 8, 8, 1))
        padded, original = pad_reflect_to_geometry(x, 4)
        assert padded is x and original == (8, 8)

    def test_reflection_excludes_edge(self):
        """Test H=5 with P=4 appends rows 3, 2, 1."""
        x = np.arange(5, dtype=np.float64).reshape(1, 5, 1, 1) * np.ones((1, 5, 4, 1))
        padded, original = pad_reflect_to_geometry(x, 4)
        assert padded.shape == (1, 8, 4, 1)
        np.testing.assert_array_equal(padded[0, :, 0, 0], [0, 1, 2, 3, 4, 3, 2, 1])
        assert original == (5, 4)

    def test_crop_inverts_pad(self, rng):
        """Test cropping the padded array restores the input exactly."""
        x = rng.random((2, 5, 7, 3))
        padded, original = pad_reflect_to_geometry(x, 4)
        np.testing.assert_array_equal(crop(padded, original), x)

    def test_crop_scales_for_sr(self, rng):
        """Test scale=2 keeps twice the original extents."""
        y = rng.random((1, 16, 16, 1))
        assert crop(y, (5, 6), scale=2).shape == (1, 10, 12, 1)
