"""AdamW: adaptive moments with decoupled weight decay."""

import logging
import math

import numpy as np

from engine.tensor import Tensor

# Configure logging
logger = logging.getLogger(__name__)


class AdamW:
    """
    AdamW over a flat ``{name: Tensor}`` map.

    Weight decay applies only to tensors of rank >= 2; biases, norm affines and
    attention scales are left undecayed.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        beta1: float = 0.9,
        beta2: float = 0.99,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: dict, lr: float) -> None:
        """Apply one update; ``grads`` maps Tensors to gradient arrays, tensors without one are left as they are."""
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, tensor in self.params.items():
            grad = grads.get(tensor)
            tensor.grad = None
            if grad is None:
                continue
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * grad
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            data = tensor.data
            if self.weight_decay and tensor.ndim >= 2:
                data = data * (1.0 - lr * self.weight_decay)
            tensor.data = (data - lr * update).astype(tensor.dtype)


def global_grad_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
