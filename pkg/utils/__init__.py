"""Utility module for concurrent data preparation."""

import engine  # noqa: F401  sets BLAS thread caps before numpy loads
from utils.async_prefetch import synthesize_splits, with_timeout

__all__ = [
    'synthesize_splits',
    'with_timeout',
]
