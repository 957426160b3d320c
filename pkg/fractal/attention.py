"""Multi-head self-attention (dot-product and cosine) and closed-form gradients."""

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from engine import profiler
from engine.ops import l2_normalize, linear, matmul, softmax_last
from engine.tensor import Tensor

# Configure logging
logger = logging.getLogger(__name__)

ATTENTION_KINDS = ('dot', 'cosine')
COSINE_SCALE_INIT = 10.0
COSINE_SCALE_MAX = 100.0


# Custom Exceptions
class AttentionConfigError(ValueError):
    """Raised when attention dimensions or kind are inconsistent."""
    pass


class DomainError(ValueError):
    """Raised when a closed-form gradient is evaluated outside its domain."""
    pass


@dataclass(frozen=True)
class AttentionConfig:
    """Head layout of one attention block; ``qk_dim`` may be C/2 for the v3 layer."""

    heads: int
    model_dim: int
    qk_dim: int
    kind: str = 'dot'
    output_projection: bool = True
    cosine_scale_init: float = COSINE_SCALE_INIT

    @property
    def head_dim(self) -> int:
        return self.qk_dim // self.heads

    @property
    def value_head_dim(self) -> int:
        return self.model_dim // self.heads

    def validate(self) -> "AttentionConfig":
        if self.kind not in ATTENTION_KINDS:
            logger.error(f"Unknown attention kind: {self.kind}")
            raise AttentionConfigError(f"kind must be one of {ATTENTION_KINDS}, got {self.kind!r}")
        if self.heads < 1 or self.qk_dim % self.heads or self.head_dim < 1:
            logger.error(f"qk_dim={self.qk_dim} not divisible into {self.heads} heads")
            raise AttentionConfigError(f"qk_dim={self.qk_dim} must be a positive multiple of heads={self.heads}")
        if self.model_dim % self.heads:
            raise AttentionConfigError(f"model_dim={self.model_dim} must be a multiple of heads={self.heads}")
        if self.cosine_scale_init <= 0:
            raise AttentionConfigError(f"cosine_scale_init must be positive, got {self.cosine_scale_init}")
        return self


def attention_param_shapes(cfg: AttentionConfig) -> dict[str, tuple]:
    """Declared parameter shapes of one attention block, keyed by name."""
    c, qk = cfg.model_dim, cfg.qk_dim
    shapes = {
        'wq': (c, qk), 'bq': (qk,),
        'wk': (c, qk), 'bk': (qk,),
        'wv': (c, c), 'bv': (c,),
    }
    if cfg.output_projection:
        shapes.update({'wo': (c, c), 'bo': (c,)})
    if cfg.kind == 'cosine':
        shapes['log_scale'] = (cfg.heads,)
    return shapes


def _heads(t: Tensor, groups: int, tokens: int, heads: int) -> Tensor:
    return t.reshape(groups, tokens, heads, -1).permute(0, 2, 1, 3)


def _attend(x: Tensor, cfg: AttentionConfig, params: dict[str, Tensor]) -> tuple:
    if x.ndim != 3 or x.shape[2] != cfg.model_dim:
        logger.error(f"Attention input {x.shape} does not match model_dim={cfg.model_dim}")
        raise AttentionConfigError(f"Attention input {x.shape} does not match model_dim={cfg.model_dim}")
    groups, tokens, _ = x.shape
    h = cfg.heads

    q = _heads(linear(x, params['wq'], params.get('bq')), groups, tokens, h)
    k = _heads(linear(x, params['wk'], params.get('bk')), groups, tokens, h)
    v = _heads(linear(x, params['wv'], params.get('bv')), groups, tokens, h)

    if cfg.kind == 'cosine':
        scale = params['log_scale'].exp().clamp_max(COSINE_SCALE_MAX).reshape(1, h, 1, 1)
        logits = matmul(l2_normalize(q), l2_normalize(k).swap_last()) * scale
    else:
        logits = matmul(q, k.swap_last()) * (1.0 / math.sqrt(cfg.head_dim))
    weights = softmax_last(logits)
    profiler.record_live_values(x.size + q.size + k.size + v.size + weights.size)
    return weights, v


def attention_weights(x: Tensor, cfg: AttentionConfig, params: dict[str, Tensor]) -> Tensor:
    """Attention maps ``[G, heads, n, n]``; every row sums to one."""
    weights, _ = _attend(x, cfg, params)
    return weights


def mhsa(x: Tensor, cfg: AttentionConfig, params: dict[str, Tensor]) -> Tensor:
    """
    Multi-head self-attention inside each group of tokens.

    Args:
        x: Tokens ``[G, n, C]``; G groups attend independently
        cfg: Attention configuration
        params: Projection weights (``wq``, ``wk``, ``wv``, optional ``wo``) and biases

    Returns:
        Tensor ``[G, n, C]``

    Raises:
        AttentionConfigError: If the input width does not match the config
    """
    groups, tokens, channels = x.shape
    weights, v = _attend(x, cfg, params)
    out = matmul(weights, v).permute(0, 2, 1, 3).reshape(groups, tokens, channels)
    if cfg.output_projection:
        out = linear(out, params['wo'], params.get('bo'))
    return out


def grad_dot_closed_form(q: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``q . k``: with respect to q it is k, with respect to k it is q."""
    return np.array(k, dtype=np.float64), np.array(q, dtype=np.float64)


def grad_cos_closed_form(q: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Gradients of the cosine similarity of q and k.

    d/dq = (k_hat - cos * q_hat) / |q|, and symmetrically for k.

    Raises:
        DomainError: If either vector has zero norm
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    q_norm, k_norm = np.linalg.norm(q), np.linalg.norm(k)
    if q_norm == 0 or k_norm == 0:
        logger.error("Cosine gradient requested for a zero-norm vector")
        raise DomainError("Cosine similarity gradient is undefined for zero-norm inputs")
    q_hat, k_hat = q / q_norm, k / k_norm
    cos = float(q_hat @ k_hat)
    return (k_hat - cos * q_hat) / q_norm, (q_hat - cos * k_hat) / k_norm


def sample_gradient_norms(
    n_samples: int,
    norm_range: tuple[float, float],
    dim: int = 16,
    orthogonal: bool = False,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """
    Draw (q, k) pairs and evaluate both closed-form gradient norms with respect to q.

    Norms are drawn log-uniformly from ``norm_range``; directions are Gaussian,
    optionally with k projected orthogonal to q.

    Returns:
        Arrays ``q_norm``, ``k_norm``, ``dot`` and ``cosine``, one entry per sample
    """
    rng = np.random.default_rng(seed)
    low, high = norm_range
    records: dict[str, list] = {'q_norm': [], 'k_norm': [], 'dot': [], 'cosine': []}
    for _ in range(n_samples):
        q_dir = rng.standard_normal(dim)
        k_dir = rng.standard_normal(dim)
        q_dir /= np.linalg.norm(q_dir)
        if orthogonal:
            k_dir -= (k_dir @ q_dir) * q_dir
        k_dir /= np.linalg.norm(k_dir)
        if low == high:
            q_norm = k_norm = float(low)
        else:
            q_norm, k_norm = np.exp(rng.uniform(np.log(low), np.log(high), size=2))
        q, k = q_dir * q_norm, k_dir * k_norm
        records['q_norm'].append(q_norm)
        records['k_norm'].append(k_norm)
        records['dot'].append(np.linalg.norm(grad_dot_closed_form(q, k)[0]))
        records['cosine'].append(np.linalg.norm(grad_cos_closed_form(q, k)[0]))
    return {name: np.asarray(values, dtype=np.float64) for name, values in records.items()}


def _summarize(values: np.ndarray) -> dict[str, Any]:
    if values.size == 0:
        return {}
    return {
        'count': int(values.size),
        'max': float(values.max()),
        'mean': float(values.mean()),
        'p50': float(np.quantile(values, 0.5)),
        'p90': float(np.quantile(values, 0.9)),
        'p99': float(np.quantile(values, 0.99)),
    }


def gradient_magnitude_experiment(
    n_samples: int,
    norm_range: tuple[float, float],
    dim: int = 16,
    orthogonal: bool = False,
    seed: int = 0,
    samples: Optional[dict[str, np.ndarray]] = None,
) -> dict[str, dict[str, Any]]:
    """
    Summarize gradient magnitudes of dot-product versus cosine attention scores.

    Args:
        n_samples: Number of (q, k) pairs; zero gives empty summaries
        norm_range: (low, high) bounds for |q| and |k|
        dim: Vector dimension
        orthogonal: Force k perpendicular to q
        seed: RNG seed
        samples: Precomputed output of :func:`sample_gradient_norms`

    Returns:
        ``{'dot': summary, 'cosine': summary}`` with count, max, mean and quantiles
    """
    if samples is None:
        samples = sample_gradient_norms(n_samples, norm_range, dim=dim, orthogonal=orthogonal, seed=seed)
    summary = {kind: _summarize(samples[kind]) for kind in ATTENTION_KINDS}
    if summary['dot']:
        logger.info(
            f"Gradient norms over {n_samples} pairs: dot max {summary['dot']['max']:.4g}, "
            f"cosine max {summary['cosine']['max']:.4g}"
        )
    return summary
