"""Concurrent dataset synthesis ahead of training."""

import asyncio
import logging
from functools import wraps
from typing import Any, Callable, Coroutine

import numpy as np

from harness.data import SPLITS, synth_dataset

# Configure logging
logger = logging.getLogger(__name__)

TIMEOUT_SECONDS = 120


def with_timeout(timeout: float = TIMEOUT_SECONDS) -> Callable:
    """
    Decorator bounding an async function's runtime.

    Args:
        timeout: Seconds before ``asyncio.TimeoutError`` is raised

    Returns:
        Decorated function
    """
    def decorator(func: Callable[..., Coroutine]) -> Callable:
        @wraps(func)
        async def wrapper(*args: Any, **kwargs: Any) -> Any:
            try:
                return await asyncio.wait_for(func(*args, **kwargs), timeout=timeout)
            except asyncio.TimeoutError:
                logger.error(f"{func.__name__} timed out after {timeout}s")
                raise
        return wrapper
    return decorator


async def synthesize_split(
    split: str,
    n_images: int,
    image_size: int,
    task: str,
    noise_sigma: float,
    seed: int,
    channels: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize one split in a worker thread."""
    if split not in SPLITS:
        raise ValueError(f"Invalid split: {split}")
    logger.debug(f"Synthesizing {split} split in a worker thread")
    return await asyncio.to_thread(
        synth_dataset, n_images, image_size, task, noise_sigma, seed, channels, split,
    )


async def synthesize_splits(
    counts: dict[str, int],
    image_size: int,
    task: str,
    noise_sigma: float = 0.0,
    seed: int = 0,
    channels: int = 1,
    timeout: float = TIMEOUT_SECONDS,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """
    Synthesize several splits concurrently.

    Each split seeds its own generators, so results do not depend on which
    worker finishes first.

    Args:
        counts: Images per split, e.g. ``{'train': 64, 'val': 16}``
        image_size: Clean image side
        task: ``denoise`` or ``sr2x``
        noise_sigma: AWGN std for denoise
        seed: Dataset seed
        channels: Image channels
        timeout: Seconds allowed for all splits together

    Returns:
        ``{split: (inputs, targets)}``

    Raises:
        asyncio.TimeoutError: If synthesis exceeds ``timeout``
    """
    logger.info(f"Synthesizing {len(counts)} splits concurrently")

    @with_timeout(timeout)
    async def _gather() -> list:
        tasks = [
            synthesize_split(split, n, image_size, task, noise_sigma, seed, channels)
            for split, n in counts.items()
        ]
        return await asyncio.gather(*tasks)

    results = await _gather()
    return dict(zip(counts, results))
