"""Binary parameter checkpoints.

Layout (little-endian)::

    b"CLMB" | u16 version | 32-byte sha256 config digest
    | u32 metadata length | metadata JSON (utf-8)
    | u32 tensor count
    | per tensor: u16 name length | name | u8 rank | u32 extents... | f8 data

Optimizer moments are stored as extra tensors under the ``optim/`` prefix.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Mapping

import numpy as np

from climber.errors import CheckpointError

from .config import ModelConfig
from .params import Parameters

MAGIC = b"CLMB"
VERSION = 1
OPTIMIZER_PREFIX = "optim/"


@dataclass
class Checkpoint:
    config: ModelConfig
    params: Parameters
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)


def _write_tensor(handle: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    data = np.ascontiguousarray(array, dtype="<f8")
    handle.write(struct.pack("<H", len(encoded)))
    handle.write(encoded)
    handle.write(struct.pack("<B", data.ndim))
    handle.write(struct.pack(f"<{data.ndim}I", *data.shape))
    handle.write(data.tobytes())


def _read_exact(handle: BinaryIO, size: int) -> bytes:
    chunk = handle.read(size)
    if len(chunk) != size:
        raise CheckpointError("checkpoint is truncated")
    return chunk


def _read_tensor(handle: BinaryIO) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(handle, 2))
    name = _read_exact(handle, name_len).decode("utf-8")
    (rank,) = struct.unpack("<B", _read_exact(handle, 1))
    shape = struct.unpack(f"<{rank}I", _read_exact(handle, 4 * rank))
    count = int(np.prod(shape, dtype=np.int64))
    data = np.frombuffer(_read_exact(handle, 8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    return name, data


def save_checkpoint(
    path: str | Path,
    config: ModelConfig,
    params: Parameters,
    *,
    optimizer_state: Mapping[str, np.ndarray] | None = None,
    metadata: Mapping[str, Any] | None = None,
) -> Path:
    path = Path(path)
    params.check_shapes(config)
    meta = dict(metadata or {})
    meta["config"] = config.model_dump(mode="json")
    encoded_meta = json.dumps(meta, sort_keys=True).encode("utf-8")
    extra = dict(optimizer_state or {})

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<H", VERSION))
        handle.write(bytes.fromhex(config.digest()))
        handle.write(struct.pack("<I", len(encoded_meta)))
        handle.write(encoded_meta)
        handle.write(struct.pack("<I", len(params) + len(extra)))
        for name, tensor in params.items():
            _write_tensor(handle, name, tensor.data)
        for name, array in extra.items():
            _write_tensor(handle, OPTIMIZER_PREFIX + name, array)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path, config: ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint; refuses when ``config`` is given and its digest differs."""
    with Path(path).open("rb") as handle:
        if _read_exact(handle, 4) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
        (version,) = struct.unpack("<H", _read_exact(handle, 2))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        stored_digest = _read_exact(handle, 32).hex()
        (meta_len,) = struct.unpack("<I", _read_exact(handle, 4))
        metadata = json.loads(_read_exact(handle, meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(handle, 4))
        tensors = [_read_tensor(handle) for _ in range(count)]

    stored_config = ModelConfig.model_validate(metadata.pop("config"))
    if stored_config.digest() != stored_digest:
        raise CheckpointError("checkpoint header digest does not match its embedded config")
    if config is not None and config.digest() != stored_digest:
        raise CheckpointError("checkpoint was written for a different model config; refusing to load")

    arrays = {name: data for name, data in tensors if not name.startswith(OPTIMIZER_PREFIX)}
    optimizer_state = {
        name[len(OPTIMIZER_PREFIX) :]: data for name, data in tensors if name.startswith(OPTIMIZER_PREFIX)
    }
    params = Parameters.from_arrays(arrays)
    try:
        params.check_shapes(stored_config)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    return Checkpoint(config=stored_config, params=params, optimizer_state=optimizer_state, metadata=metadata)
