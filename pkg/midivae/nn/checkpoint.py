"""
Checkpoint container.

Layout, every integer little-endian:

    b"MVAE" | uint32 version | uint32 tensor count
    per tensor: uint16 name length | name (UTF-8) | uint8 rank | rank x uint32 dims | float32 values
    uint32 metadata length | metadata (UTF-8 JSON, sorted keys)
"""
import json
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

import numpy as np

from ..config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from ..exceptions import CheckpointError, UnwritablePath


def dump_checkpoint(tensors: Mapping[str, np.ndarray], meta: Mapping) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack('<II', CHECKPOINT_VERSION, len(tensors))]
    for name, value in tensors.items():
        encoded = name.encode('utf-8')
        value = np.asarray(value)
        if len(encoded) > 0xFFFF or value.ndim > 0xFF:
            raise CheckpointError(f"Tensor '{name}' cannot be stored: name or rank too large.")
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', value.ndim))
        chunks.append(struct.pack(f'<{value.ndim}I', *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
    payload = json.dumps(meta, sort_keys=True, separators=(',', ':')).encode('utf-8')
    chunks.append(struct.pack('<I', len(payload)))
    chunks.append(payload)
    return b''.join(chunks)


def parse_checkpoint(data: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
    view = memoryview(data)
    pos = 0

    def take(size: int) -> memoryview:
        nonlocal pos
        if pos + size > len(view):
            raise CheckpointError(f"Checkpoint truncated at byte {pos}.")
        chunk = view[pos:pos + size]
        pos += size
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise CheckpointError("Not a checkpoint: bad magic.")
    version, count = struct.unpack('<II', take(8))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}; expected {CHECKPOINT_VERSION}.")

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = struct.unpack('<H', take(2))
        name = bytes(take(name_length)).decode('utf-8')
        (rank,) = struct.unpack('<B', take(1))
        shape = struct.unpack(f'<{rank}I', take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take(4 * size), dtype='<f4').astype(np.float32).reshape(shape)

    (meta_length,) = struct.unpack('<I', take(4))
    try:
        meta = json.loads(bytes(take(meta_length)).decode('utf-8'))
    except ValueError as exc:
        raise CheckpointError(f"Checkpoint metadata is not valid JSON: {exc}") from exc
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after checkpoint metadata.")
    return tensors, meta


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray], meta: Mapping) -> Path:
    path = Path(path)
    data = dump_checkpoint(tensors, meta)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise UnwritablePath(f"Cannot write checkpoint '{path}': {exc}") from exc
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint '{path}' does not exist.")
    return parse_checkpoint(path.read_bytes())
