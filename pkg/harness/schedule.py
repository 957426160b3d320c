"""Learning-rate warmup with optional post-warmup halvings."""

from typing import Sequence


def warmup_lr(iteration: int, base_lr: float, warmup_iters: int, half_at: Sequence[int] = ()) -> float:
    """
    Learning rate at ``iteration`` (0-based).

    Linear ramp ``base_lr * (iteration + 1) / warmup_iters`` during warmup, then
    ``base_lr`` halved once for every milestone in ``half_at`` already reached.
    """
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if iteration < warmup_iters:
        return base_lr * (iteration + 1) / warmup_iters
    halvings = sum(1 for milestone in half_at if iteration >= milestone)
    return base_lr * 0.5 ** halvings
