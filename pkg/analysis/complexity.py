"""Analytic time/space complexity of attention methods and empirical FLOP counts."""

import json
import logging
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from engine import profiler
from engine.profiler import FlopCounter
from engine.tensor import Tensor, no_grad
from fractal.fifm import FifmConfig, fifm_att, layer_param_shapes
from fractal.init import initialize

# Configure logging
logger = logging.getLogger(__name__)

METHODS = ('global', 'window_p', 'window_8P', 'fractal')
LARGE_WINDOW_FACTOR = 8
TWO_LAYER_RF_FACTOR = 16


# Custom Exceptions
class UnknownMethodError(ValueError):
    """Raised for an attention method outside ``METHODS``."""
    pass


@dataclass(frozen=True)
class ComplexityDims:
    """Batch B, extents H x W, channels C, heads h, window p, group s and FFN ratio gamma."""

    batch: int
    height: int
    width: int
    channels: int
    heads: int
    window: int
    group: int
    gamma: float = 2.0

    @property
    def region(self) -> int:
        return self.window * self.group

    @property
    def pixels(self) -> int:
        return self.batch * self.height * self.width

    def validate(self) -> "ComplexityDims":
        values = (self.batch, self.height, self.width, self.channels, self.heads, self.window, self.group)
        if min(values) < 1 or self.gamma <= 0:
            raise ValueError(f"All complexity dims must be positive, got {self}")
        return self


@dataclass(frozen=True)
class ComplexityReport:
    """
    Time, space and receptive field of one attention method.

    FLOP fields follow the 2-FLOPs-per-MAC contract. ``time_flops`` is the sum of
    the projection, attention-map and FFN terms; ``omitted_flops`` is the small
    FFN term the simplified expression drops, reported on its own.
    """

    method: str
    dims: ComplexityDims
    projection_flops: int
    attention_map_flops: int
    ffn_flops: int
    omitted_flops: int
    time_flops: int
    space_values: int
    rf_bound: int
    rf_measured: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _exact(value: Fraction) -> int:
    if value.denominator != 1:
        logger.warning(f"Complexity term {value} is not integral; truncating")
    return int(value)


def analytic_complexity(method: str, dims: ComplexityDims) -> ComplexityReport:
    """
    Evaluate the closed-form complexity of an attention method, constants included.

    Args:
        method: ``global``, ``window_p``, ``window_8P`` or ``fractal``
        dims: Problem dimensions

    Returns:
        ComplexityReport with integer counts

    Raises:
        UnknownMethodError: If ``method`` is not recognised
    """
    if method not in METHODS:
        logger.error(f"Unknown attention method: {method}")
        raise UnknownMethodError(f"method must be one of {METHODS}, got {method!r}")
    dims.validate()

    b, c, h = dims.batch, dims.channels, dims.heads
    p, s, big = dims.window, dims.group, dims.region
    n = dims.pixels
    gamma = Fraction(dims.gamma).limit_denominator(1000)
    mac = profiler.MAC_FLOPS

    ffn = mac * 2 * gamma * n * c * c
    omitted = mac * 9 * gamma * n * c
    if method == 'fractal':
        projection = mac * 5 * n * c * c
        attention = mac * Fraction(3, 2) * n * (p * p + s * s) * c
        space = 3 * n * c + n * h * max(p * p, s * s)
        rf_bound = TWO_LAYER_RF_FACTOR * big
    else:
        projection = mac * 4 * n * c * c
        if method == 'global':
            hw = dims.height * dims.width
            attention = mac * 2 * b * hw * hw * c
            space = 4 * n * c + b * hw * hw * h
            rf_bound = max(dims.height, dims.width)
        elif method == 'window_p':
            attention = mac * 2 * n * p * p * c
            space = 4 * n * c + n * h * p * p
            rf_bound = 2 * p
        else:
            side = LARGE_WINDOW_FACTOR * big
            attention = mac * 2 * n * side * side * c
            space = 4 * n * c + n * h * side * side
            rf_bound = TWO_LAYER_RF_FACTOR * big

    report = ComplexityReport(
        method=method,
        dims=dims,
        projection_flops=_exact(Fraction(projection)),
        attention_map_flops=_exact(Fraction(attention)),
        ffn_flops=_exact(Fraction(ffn)),
        omitted_flops=_exact(Fraction(omitted)),
        time_flops=_exact(Fraction(projection + attention + ffn)),
        space_values=int(space),
        rf_bound=int(rf_bound),
    )
    logger.debug(f"{method} complexity: time {report.time_flops}, space {report.space_values}")
    return report


def flop_count_empirical(
    fn: Callable[..., Tensor],
    inputs: Union[Tensor, Sequence[Tensor]],
) -> FlopCounter:
    """
    Run ``fn`` once without recording a graph and count what its operations execute.

    Returns:
        FlopCounter with per-category FLOPs and the peak of live attention values
    """
    args = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    with no_grad(), profiler.count_flops() as counter:
        fn(*args)
    return counter


def fifm_att_layer(dims: ComplexityDims, attention_kind: str = 'dot', seed: int = 0) -> tuple:
    """
    A v3 FifmConfig and float64 parameters matching ``dims``.

    Returns:
        ``(cfg, params)``
    """
    cfg = FifmConfig(
        channels=dims.channels,
        window=dims.window,
        group=dims.group,
        heads=dims.heads,
        ffn_ratio=dims.gamma,
        attention_kind=attention_kind,
        variant='v3',
    ).validate()
    params = initialize(layer_param_shapes(cfg), 'kaiming_fan_in', seed, dtype=np.float64)
    return cfg, params


def measure_fifm_att(dims: ComplexityDims, seed: int = 0) -> FlopCounter:
    """Count one fifm_att call on random ``[B, H, W, C]`` input at ``dims``."""
    cfg, params = fifm_att_layer(dims, seed=seed)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((dims.batch, dims.height, dims.width, dims.channels)))
    counter = flop_count_empirical(lambda t: fifm_att(t, cfg, params), x)
    logger.info(
        f"fifm_att at {dims}: {counter.by_category['matmul']} matmul FLOPs, "
        f"peak {counter.peak_live_values} live values"
    )
    return counter
