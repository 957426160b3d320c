"""FLOP and live-value instrumentation for engine operations."""

import logging
from collections import Counter
from contextlib import contextmanager
from typing import Iterator

# Configure logging
logger = logging.getLogger(__name__)

# Declared per-element costs of the counting contract
MAC_FLOPS = 2
SOFTMAX_FLOPS_PER_ELEMENT = 5     # max, subtract, exp, sum, divide
NORM_FLOPS_PER_ELEMENT = 7        # mean, centre, square, var-sum, scale, gain, bias
NORM_FLOPS_PER_POSITION = 1       # sqrt
GELU_FLOPS_PER_ELEMENT = 8

_ACTIVE: list["FlopCounter"] = []


class FlopCounter:
    """Accumulates FLOPs per category and the peak of live attention values."""

    def __init__(self) -> None:
        self.by_category: Counter = Counter()
        self.peak_live_values = 0

    def add(self, category: str, flops: int) -> None:
        self.by_category[category] += int(flops)

    def observe_live_values(self, values: int) -> None:
        self.peak_live_values = max(self.peak_live_values, int(values))

    @property
    def total(self) -> int:
        return sum(self.by_category.values())

    def as_dict(self) -> dict:
        return {
            'total': self.total,
            'by_category': dict(sorted(self.by_category.items())),
            'peak_live_values': self.peak_live_values,
        }


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """
    Count FLOPs of every forward operation executed inside the block.

    Yields:
        FlopCounter collecting the counts
    """
    counter = FlopCounter()
    _ACTIVE.append(counter)
    try:
        yield counter
    finally:
        _ACTIVE.remove(counter)
        logger.debug(f"Counted {counter.total} FLOPs: {dict(counter.by_category)}")


def record(category: str, flops: int) -> None:
    for counter in _ACTIVE:
        counter.add(category, flops)


def record_live_values(values: int) -> None:
    for counter in _ACTIVE:
        counter.observe_live_values(values)


def is_counting() -> bool:
    return bool(_ACTIVE)
