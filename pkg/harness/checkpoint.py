"""Binary checkpoint format for parameter trees.

Layout (all integers little-endian)::

    magic "FIR1" | version u32 | count u32
    per tensor, sorted by UTF-8 name bytes:
        name_len u32 | name | ndim u32 | dims u64 * ndim | dtype u8 (1=f32, 2=f64) | raw values
"""

import logging
import math
import struct
from pathlib import Path
from typing import Any

import numpy as np

from engine.tensor import Tensor
from fractal.models import ModelConfig, flatten_params, param_shapes, unflatten_params
from harness.config import ConfigError

# Configure logging
logger = logging.getLogger(__name__)

MAGIC = b'FIR1'
FORMAT_VERSION = 1
DTYPE_TAGS = {np.dtype('<f4'): 1, np.dtype('<f8'): 2}
TAG_DTYPES = {tag: dtype for dtype, tag in DTYPE_TAGS.items()}


# Custom Exceptions
class CheckpointFormatError(Exception):
    """Raised when checkpoint bytes are malformed; ``offset`` locates the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode_checkpoint(params: Any) -> bytes:
    """Serialize a parameter tree into the canonical byte layout."""
    flat = flatten_params(params)
    chunks = [MAGIC, struct.pack('<II', FORMAT_VERSION, len(flat))]
    for name in sorted(flat, key=lambda key: key.encode('utf-8')):
        data = flat[name].data
        dtype = data.dtype.newbyteorder('<')
        if dtype not in DTYPE_TAGS:
            raise ValueError(f"Unsupported checkpoint dtype {data.dtype} for '{name}'")
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<I', data.ndim))
        chunks.append(struct.pack(f'<{data.ndim}Q', *data.shape))
        chunks.append(struct.pack('<B', DTYPE_TAGS[dtype]))
        chunks.append(np.ascontiguousarray(data, dtype=dtype).tobytes())
    return b''.join(chunks)


class _Reader:
    def __init__(self, blob: bytes) -> None:
        self.blob = blob
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.blob):
            raise CheckpointFormatError(f"Truncated checkpoint while reading {what}", self.offset)
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(blob: bytes) -> dict[str, Tensor]:
    """
    Parse checkpoint bytes into a flat ``{name: Tensor}`` map.

    Nothing is returned until the whole blob has parsed.

    Raises:
        CheckpointFormatError: On bad magic, unknown version or dtype, truncation or trailing bytes
    """
    reader = _Reader(blob)
    if reader.take(len(MAGIC), 'magic') != MAGIC:
        raise CheckpointFormatError("Bad checkpoint magic", 0)
    version_offset = reader.offset
    version, count = reader.unpack('<II', 'header')
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version}", version_offset)

    flat: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = reader.unpack('<I', 'name length')
        name_offset = reader.offset
        try:
            name = reader.take(name_len, 'name').decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointFormatError("Tensor name is not UTF-8", name_offset) from e
        (ndim,) = reader.unpack('<I', 'ndim')
        shape = reader.unpack(f'<{ndim}Q', 'dims')
        tag_offset = reader.offset
        (tag,) = reader.unpack('<B', 'dtype tag')
        if tag not in TAG_DTYPES:
            raise CheckpointFormatError(f"Unknown dtype tag {tag}", tag_offset)
        dtype = TAG_DTYPES[tag]
        # Python ints: corrupt dims must not wrap around
        size = math.prod(shape) * dtype.itemsize
        values = np.frombuffer(reader.take(size, f"values of '{name}'"), dtype=dtype)
        flat[name] = Tensor(values.reshape(shape).astype(dtype.newbyteorder('='), copy=True), requires_grad=True)
    if reader.offset != len(blob):
        raise CheckpointFormatError("Trailing bytes after last tensor", reader.offset)
    return flat


def save_checkpoint(params: Any, path: str) -> Path:
    """Write ``params`` to ``path``, creating parent directories."""
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(params)
    file_path.write_bytes(blob)
    logger.info(f"Wrote checkpoint {file_path} ({len(blob)} bytes)")
    return file_path


def load_checkpoint(path: str) -> dict:
    """
    Read a checkpoint back into a nested parameter tree.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        CheckpointFormatError: If the file is malformed
    """
    file_path = Path(path)
    if not file_path.exists():
        logger.error(f"Checkpoint not found: {path}")
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        flat = decode_checkpoint(file_path.read_bytes())
    except CheckpointFormatError as e:
        logger.error(f"Rejected checkpoint {path}: {e}")
        raise
    logger.info(f"Loaded {len(flat)} tensors from {file_path}")
    return unflatten_params(flat)


def _flatten_shapes(node: Any, prefix: str = '') -> dict[str, tuple]:
    if not isinstance(node, (dict, list)):
        return {prefix: tuple(node)}
    flat: dict[str, tuple] = {}
    items = node.items() if isinstance(node, dict) else enumerate(node)
    for key, child in items:
        flat.update(_flatten_shapes(child, f"{prefix}.{key}" if prefix else str(key)))
    return flat


def check_checkpoint_matches(params: Any, cfg: ModelConfig) -> None:
    """
    Compare checkpoint tensor names and shapes with the tree ``cfg`` builds.

    Raises:
        ConfigError: If a tensor is missing, unexpected or differently shaped
    """
    expected = _flatten_shapes(param_shapes(cfg))
    loaded = {name: tuple(tensor.shape) for name, tensor in flatten_params(params).items()}
    problems = [f"missing {name}" for name in sorted(expected.keys() - loaded.keys())]
    problems += [f"unexpected {name}" for name in sorted(loaded.keys() - expected.keys())]
    problems += [
        f"{name} has shape {loaded[name]}, config builds {expected[name]}"
        for name in sorted(expected.keys() & loaded.keys()) if loaded[name] != expected[name]
    ]
    if problems:
        for problem in problems:
            logger.error(f"Checkpoint does not match config: {problem}")
        raise ConfigError(f"Checkpoint does not match the model config ({len(problems)} problems): {problems[0]}")
