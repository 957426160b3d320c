"""Reflect padding up to the model's tiling multiple, and the matching crop."""

import numpy as np


def pad_reflect_to_geometry(x: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """
    Reflect-pad ``x[B, H, W, C]`` at the bottom and right so H, W become multiples of ``multiple``.

    Reflection excludes the edge pixel: for H=5 padded to 8, rows 5..7 repeat rows 3..1.

    Returns:
        ``(padded, (H, W))`` with the original extents for :func:`crop`
    """
    height, width = x.shape[1], x.shape[2]
    extra_h = -height % multiple
    extra_w = -width % multiple
    if not extra_h and not extra_w:
        return x, (height, width)
    padded = np.pad(x, ((0, 0), (0, extra_h), (0, extra_w), (0, 0)), mode='reflect')
    return padded, (height, width)


def crop(y: np.ndarray, original: tuple[int, int], scale: int = 1) -> np.ndarray:
    """Keep the top-left ``scale * H`` x ``scale * W`` region of ``y[B, H', W', C]``."""
    height, width = original
    return y[:, :height * scale, :width * scale, :]
