"""Index geometry of the fractal: window partition and the region regroup."""

import logging
from dataclasses import dataclass

import numpy as np

from engine.tensor import Tensor

# Configure logging
logger = logging.getLogger(__name__)

STAGES = ('L1', 'L2')


# Custom Exceptions
class GeometryError(ValueError):
    """Raised when extents do not tile into windows or regions."""
    pass


@dataclass(frozen=True)
class FractalGeometry:
    """
    Spatial tiling of one feature map.

    ``window`` is the level-1 window side p, ``group`` the number of windows s per
    region side, and ``region`` the level-2 region side P = s * p.
    """

    height: int
    width: int
    window: int
    group: int

    @property
    def region(self) -> int:
        return self.window * self.group

    def validate(self) -> "FractalGeometry":
        """
        Check the exact-tiling invariant.

        Returns:
            The geometry itself, for chaining

        Raises:
            GeometryError: If any extent is non-positive or H, W are not multiples of P
        """
        if min(self.height, self.width, self.window, self.group) < 1:
            logger.error(f"Non-positive geometry extent: {self}")
            raise GeometryError(f"All geometry extents must be positive, got {self}")
        if self.height % self.region or self.width % self.region:
            logger.error(f"{self.height}x{self.width} does not tile into {self.region}x{self.region} regions")
            raise GeometryError(
                f"H={self.height}, W={self.width} must be multiples of P={self.region}"
            )
        return self


@dataclass(frozen=True)
class IndexMap:
    """Bijection from flat source pixel index to flat destination position."""

    permutation: np.ndarray
    stage: str

    def is_bijection(self) -> bool:
        n = self.permutation.size
        return bool(np.array_equal(np.sort(self.permutation), np.arange(n)))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Move the pixels of ``x[B, H, W, C]`` to their destinations, giving ``[B, H*W, C]``."""
        batch, height, width, channels = x.shape
        flat = x.reshape(batch, height * width, channels)
        out = np.empty_like(flat)
        out[:, self.permutation, :] = flat
        return out


def window_partition(x: Tensor, p: int) -> Tensor:
    """
    Split ``x[B, H, W, C]`` into non-overlapping p x p windows.

    Windows are ordered batch-major then row-major over the window grid; pixels
    are row-major inside each window.

    Args:
        x: Feature map
        p: Window side

    Returns:
        Tensor ``[B * (H/p) * (W/p), p*p, C]``

    Raises:
        GeometryError: If H or W is not a multiple of p
    """
    batch, height, width, channels = x.shape
    if p < 1 or height % p or width % p:
        logger.error(f"Cannot partition {height}x{width} into {p}x{p} windows")
        raise GeometryError(f"H={height}, W={width} must be multiples of p={p}")
    return (
        x.reshape(batch, height // p, p, width // p, p, channels)
        .permute(0, 1, 3, 2, 4, 5)
        .reshape(-1, p * p, channels)
    )


def window_reverse(windows: Tensor, p: int, height: int, width: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    per_image = (height // p) * (width // p) if p >= 1 else 0
    if p < 1 or height % p or width % p or windows.ndim != 3 or windows.shape[1] != p * p \
            or per_image == 0 or windows.shape[0] % per_image:
        logger.error(f"Windows {windows.shape} inconsistent with p={p}, H={height}, W={width}")
        raise GeometryError(f"Windows {windows.shape} inconsistent with p={p}, H={height}, W={width}")
    batch = windows.shape[0] // per_image
    channels = windows.shape[2]
    return (
        windows.reshape(batch, height // p, width // p, p, p, channels)
        .permute(0, 1, 3, 2, 4, 5)
        .reshape(batch, height, width, channels)
    )


def _check_level1_shape(y1: Tensor, geometry: FractalGeometry) -> int:
    geometry.validate()
    p = geometry.window
    per_image = (geometry.height // p) * (geometry.width // p)
    if y1.ndim != 3 or y1.shape[1] != p * p or y1.shape[0] % per_image:
        logger.error(f"Level-1 tensor {y1.shape} does not match {geometry}")
        raise GeometryError(f"Level-1 tensor {y1.shape} does not match {geometry}")
    return y1.shape[0] // per_image


def fractal_regroup(y1: Tensor, geometry: FractalGeometry) -> Tensor:
    """
    Regroup level-1 windows into level-2 attention groups.

    Reshapes to ``(B, H/P, s, W/P, s, p, p, C)`` and permutes so each group of
    s*s tokens holds, for one in-window offset, the matching pixel of every window
    in one P x P region (row-major over the s x s window grid).

    Args:
        y1: Output of :func:`window_partition` for the same geometry
        geometry: Fractal geometry

    Returns:
        Tensor ``[B * (H/P) * (W/P) * p*p, s*s, C]``

    Raises:
        GeometryError: If the tensor does not match the geometry
    """
    batch = _check_level1_shape(y1, geometry)
    p, s = geometry.window, geometry.group
    rows, cols = geometry.height // geometry.region, geometry.width // geometry.region
    channels = y1.shape[2]
    return (
        y1.reshape(batch, rows, s, cols, s, p, p, channels)
        .permute(0, 1, 3, 5, 6, 2, 4, 7)
        .reshape(-1, s * s, channels)
    )


def fractal_regroup_reverse(y2: Tensor, geometry: FractalGeometry) -> Tensor:
    """Inverse of :func:`fractal_regroup`, back to the level-1 window layout."""
    geometry.validate()
    p, s = geometry.window, geometry.group
    rows, cols = geometry.height // geometry.region, geometry.width // geometry.region
    per_image = rows * cols * p * p
    if y2.ndim != 3 or y2.shape[1] != s * s or y2.shape[0] % per_image:
        logger.error(f"Level-2 tensor {y2.shape} does not match {geometry}")
        raise GeometryError(f"Level-2 tensor {y2.shape} does not match {geometry}")
    batch = y2.shape[0] // per_image
    channels = y2.shape[2]
    return (
        y2.reshape(batch, rows, cols, p, p, s, s, channels)
        .permute(0, 1, 5, 2, 6, 3, 4, 7)
        .reshape(-1, p * p, channels)
    )


def index_map_oracle(geometry: FractalGeometry, stage: str) -> IndexMap:
    """
    Enumerate the partition (L1) or partition+regroup (L2) map with plain loops.

    Walks regions, windows inside a region, and offsets inside a window, and
    writes down where each source pixel ends up. Shares no code with the tensor
    path.

    Args:
        geometry: Fractal geometry
        stage: ``'L1'`` or ``'L2'``

    Returns:
        IndexMap over the H*W spatial positions
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    geometry.validate()
    height, width = geometry.height, geometry.width
    p, s, big = geometry.window, geometry.group, geometry.region
    windows_per_row = width // p
    regions_per_row = width // big
    permutation = np.empty(height * width, dtype=np.int64)

    for region_row in range(height // big):
        for region_col in range(regions_per_row):
            region = region_row * regions_per_row + region_col
            for sub_row in range(s):
                for sub_col in range(s):
                    window_row = region_row * s + sub_row
                    window_col = region_col * s + sub_col
                    window = window_row * windows_per_row + window_col
                    for off_row in range(p):
                        for off_col in range(p):
                            src_h = window_row * p + off_row
                            src_w = window_col * p + off_col
                            offset = off_row * p + off_col
                            if stage == 'L1':
                                dest = window * p * p + offset
                            else:
                                group = region * p * p + offset
                                dest = group * s * s + sub_row * s + sub_col
                            permutation[src_h * width + src_w] = dest

    return IndexMap(permutation=permutation, stage=stage)
