"""Weight initialization schemes and fan-in statistics."""

import logging
import math
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from engine.tensor import Tensor
from fractal.attention import COSINE_SCALE_INIT

# Configure logging
logger = logging.getLogger(__name__)

INIT_SCHEMES = ('kaiming_fan_in', 'trunc_normal', 'zero_layernorm', 'residual_rescale', 'weight_rescale')
TRUNC_NORMAL_STD = 0.02
TRUNC_NORMAL_BOUND = 2.0
WEIGHT_RESCALE = 0.1
RESIDUAL_RESCALE = 0.01


# Custom Exceptions
class InitSchemeError(ValueError):
    """Raised for an unknown initialization scheme."""
    pass


def fan_in(shape: Sequence[int]) -> int:
    """c_in * k^2 for ``[k, k, c_in, c_out]`` kernels, c_in for ``[c_in, c_out]`` matrices."""
    if len(shape) == 4:
        return shape[0] * shape[1] * shape[2]
    return shape[0]


def fan_out(shape: Sequence[int]) -> int:
    if len(shape) == 4:
        return shape[0] * shape[1] * shape[3]
    return shape[-1]


def kaiming_std(shape: Sequence[int]) -> float:
    return math.sqrt(2.0 / fan_in(shape))


def _draw_weight(shape: tuple, scheme: str, rng: np.random.Generator) -> np.ndarray:
    if scheme == 'trunc_normal':
        return stats.truncnorm.rvs(
            -TRUNC_NORMAL_BOUND, TRUNC_NORMAL_BOUND,
            loc=0.0, scale=TRUNC_NORMAL_STD, size=shape, random_state=rng,
        )
    return rng.standard_normal(shape) * kaiming_std(shape)


def init_tensor(
    name: str,
    shape: tuple,
    scheme: str,
    rng: np.random.Generator,
    residual_branch: bool = False,
    dtype: Any = np.float32,
    zero: bool = False,
) -> np.ndarray:
    """
    Initial value of one parameter, chosen by its leaf name and rank.

    ``log_scale`` starts at log(10); ``*_gain`` at one (zero under
    ``zero_layernorm``); rank >= 2 tensors are weights; everything else is a
    zero bias. ``zero`` forces an all-zero tensor whatever the scheme.
    """
    if scheme not in INIT_SCHEMES:
        logger.error(f"Unknown init scheme: {scheme}")
        raise InitSchemeError(f"init_scheme must be one of {INIT_SCHEMES}, got {scheme!r}")
    if zero:
        value = np.zeros(shape)
    elif name == 'log_scale':
        value = np.full(shape, math.log(COSINE_SCALE_INIT))
    elif name.endswith('_gain'):
        value = np.zeros(shape) if scheme == 'zero_layernorm' else np.ones(shape)
    elif len(shape) >= 2:
        value = _draw_weight(shape, scheme, rng)
        if scheme == 'weight_rescale' and residual_branch:
            value = value * WEIGHT_RESCALE
    else:
        value = np.zeros(shape)
    return np.asarray(value, dtype=dtype)


def initialize(
    shapes: Any,
    scheme: str,
    seed: Any,
    dtype: Any = np.float32,
    is_residual: Optional[Callable[[str], bool]] = None,
    prefix: str = '',
    is_zero: Optional[Callable[[str], bool]] = None,
) -> Any:
    """
    Materialize a nested shape tree into a parameter tree of leaf Tensors.

    Leaves are visited in tree order with one generator, so a seed fixes every value.

    Args:
        shapes: Nested dicts/lists whose leaves are shape tuples
        scheme: One of ``INIT_SCHEMES``
        seed: RNG seed (int or sequence of ints)
        dtype: Parameter dtype
        is_residual: Predicate on dotted names marking residual-branch tensors
        prefix: Dotted name of ``shapes`` itself
        is_zero: Predicate on dotted names marking tensors that start at zero

    Returns:
        Tree of the same structure with ``Tensor(requires_grad=True)`` leaves
    """
    rng = np.random.default_rng(seed)
    residual = is_residual or (lambda name: False)
    zeroed = is_zero or (lambda name: False)

    def _walk(node: Any, path: str) -> Any:
        if isinstance(node, dict):
            return {key: _walk(child, f"{path}.{key}" if path else key) for key, child in node.items()}
        if isinstance(node, list):
            return [_walk(child, f"{path}.{i}" if path else str(i)) for i, child in enumerate(node)]
        leaf = path.rsplit('.', 1)[-1]
        data = init_tensor(leaf, tuple(node), scheme, rng, residual_branch=residual(path), dtype=dtype,
                           zero=zeroed(path))
        return Tensor(data, requires_grad=True)

    return _walk(shapes, prefix)


def init_stats(
    params: Union[dict, Sequence[dict]],
    is_zero: Optional[Callable[[str], bool]] = None,
) -> dict[str, dict[str, float]]:
    """
    Empirical mean/std of every weight tensor next to its Kaiming target.

    A sequence of trees (same config, different seeds) pools the samples of
    each named tensor across trees. Tensors matched by ``is_zero`` get a target of 0.

    Returns:
        ``{name: {'mean', 'std', 'f_in', 'f_out', 'target_std'}}`` for rank >= 2 tensors
    """
    from fractal.models import flatten_params

    trees = [params] if isinstance(params, dict) else list(params)
    zeroed = is_zero or (lambda name: False)
    pooled: dict[str, list] = {}
    for tree in trees:
        for name, tensor in flatten_params(tree).items():
            if tensor.ndim >= 2:
                pooled.setdefault(name, []).append(tensor.data.astype(np.float64).ravel())

    shapes = {name: tensor.shape for name, tensor in flatten_params(trees[0]).items()}
    report = {}
    for name, chunks in pooled.items():
        values = np.concatenate(chunks)
        shape = shapes[name]
        report[name] = {
            'mean': float(values.mean()),
            'std': float(values.std()),
            'f_in': fan_in(shape),
            'f_out': fan_out(shape),
            'target_std': 0.0 if zeroed(name) else kaiming_std(shape),
        }
    logger.debug(f"init_stats over {len(trees)} tree(s), {len(report)} weight tensors")
    return report
