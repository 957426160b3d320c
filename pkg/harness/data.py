"""Seeded synthetic restoration data: clean images, noisy and downsampled inputs."""

import logging

import numpy as np
from scipy import ndimage

# Configure logging
logger = logging.getLogger(__name__)

INTENSITY_RANGE = (0.1, 0.9)
MAX_RECTANGLES = 3
NOISE_SMOOTHING = (1.0, 2.0)
SPLITS = ('train', 'val')


def synth_clean_image(size: int, channels: int, rng: np.random.Generator) -> np.ndarray:
    """
    One clean ``[size, size, channels]`` image: a linear gradient, a few
    rectangles and Gaussian-smoothed noise, rescaled into ``INTENSITY_RANGE``.
    """
    rows, cols = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    image = np.empty((size, size, channels))
    for c in range(channels):
        angle = rng.uniform(0, 2 * np.pi)
        layer = rng.uniform(0.5, 1.5) * (rows * np.cos(angle) + cols * np.sin(angle))
        for _ in range(rng.integers(1, MAX_RECTANGLES + 1)):
            top, left = rng.integers(0, size, size=2)
            height, width = rng.integers(1, size // 2 + 2, size=2)
            layer[top:top + height, left:left + width] += rng.uniform(-1, 1)
        smooth = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=rng.uniform(*NOISE_SMOOTHING))
        layer = layer + smooth * rng.uniform(0.5, 2.0)
        span = layer.max() - layer.min()
        unit = (layer - layer.min()) / span if span > 0 else np.full_like(layer, 0.5)
        low, high = INTENSITY_RANGE
        image[:, :, c] = low + (high - low) * unit
    return image


def box_downsample(images: np.ndarray, factor: int = 2) -> np.ndarray:
    """Mean over non-overlapping ``factor`` x ``factor`` blocks of ``[N, H, W, C]``."""
    n, height, width, channels = images.shape
    blocks = images.reshape(n, height // factor, factor, width // factor, factor, channels)
    return blocks.mean(axis=(2, 4))


def synth_dataset(
    n_images: int,
    image_size: int,
    task: str,
    noise_sigma: float = 0.0,
    seed: int = 0,
    channels: int = 1,
    split: str = 'train',
) -> tuple[np.ndarray, np.ndarray]:
    """
    Synthesize (inputs, targets) pairs.

    Every image draws from its own generator keyed by (seed, split, index), so a
    split is reproducible on its own and independent of the other split.

    Args:
        n_images: Number of pairs
        image_size: Side of the clean images
        task: ``denoise`` (clean + AWGN, clipped to [0, 1]) or ``sr2x`` (2x2 box mean)
        noise_sigma: AWGN std in [0, 1] units
        seed: Dataset seed
        channels: Image channels
        split: ``train`` or ``val``

    Returns:
        float32 arrays ``[N, h, w, C]`` of inputs and ``[N, size, size, C]`` of targets
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    stream = SPLITS.index(split)
    clean = np.empty((n_images, image_size, image_size, channels))
    noisy = np.empty_like(clean)
    for index in range(n_images):
        rng = np.random.default_rng([seed, stream, index])
        clean[index] = synth_clean_image(image_size, channels, rng)
        if task == 'denoise' and noise_sigma > 0:
            noise = rng.normal(0.0, noise_sigma, size=clean[index].shape)
            noisy[index] = np.clip(clean[index] + noise, 0.0, 1.0)
        else:
            noisy[index] = clean[index]

    inputs = box_downsample(clean) if task == 'sr2x' else noisy
    logger.info(f"Synthesized {n_images} {task} {split} pairs at {image_size}px (seed {seed})")
    return inputs.astype(np.float32), clean.astype(np.float32)
