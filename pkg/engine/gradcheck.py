"""Central finite-difference verification of reverse-mode gradients."""

import logging
from typing import Callable, Sequence, Union

import numpy as np

from engine.tensor import Tensor, backward, no_grad

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4


def finite_diff_check(
    f: Callable[..., Tensor],
    x: Union[Tensor, Sequence[Tensor]],
    h: float = DEFAULT_STEP,
    seed: int = 0,
) -> float:
    """
    Compare autodiff gradients of ``f`` against central differences.

    Non-scalar outputs are reduced with a fixed random projection so every output
    coordinate contributes. ``f`` is called with the inputs as positional arguments.

    Args:
        f: Deterministic tensor function
        x: Input tensor or sequence of tensors to differentiate against
        h: Finite-difference step
        seed: Seed of the output projection

    Returns:
        Max over coordinates of |analytic - numeric| / max(1, |analytic|)
    """
    inputs = [x] if isinstance(x, Tensor) else list(x)
    if any(t.dtype != np.float64 for t in inputs):
        logger.warning("finite_diff_check running outside 64-bit mode; tolerances will not hold")

    saved_flags = [t.requires_grad for t in inputs]
    for t in inputs:
        t.requires_grad = True

    try:
        out = f(*inputs)
        rng = np.random.default_rng(seed)
        projection = rng.standard_normal(out.shape).astype(out.dtype)
        loss = (out * Tensor(projection)).sum()
        grads = backward(loss)

        def _objective() -> float:
            with no_grad():
                return float(np.sum(f(*inputs).data * projection))

        worst = 0.0
        for t in inputs:
            analytic = grads.get(t, np.zeros_like(t.data))
            original = t.data
            for index in range(original.size):
                bumped = original.copy()
                bumped.flat[index] += h
                t.data = bumped
                plus = _objective()
                bumped.flat[index] = original.flat[index] - h
                minus = _objective()
                t.data = original
                numeric = (plus - minus) / (2.0 * h)
                a = float(np.asarray(analytic).flat[index])
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    finally:
        for t, flag in zip(inputs, saved_flags):
            t.requires_grad = flag
            t.grad = None

    logger.debug(f"finite_diff_check over {sum(t.size for t in inputs)} coordinates: max rel error {worst:.3e}")
    return worst
