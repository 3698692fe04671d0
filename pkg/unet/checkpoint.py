"""Binary checkpoint format for trained networks.

Layout (little-endian)::

    magic       4s   b"CSNP"
    config_len  u32
    config      config_len bytes of UTF-8 JSON (NetConfig fields)
    count       u32
    directory   count x [u16 name_len, name, u8 rank, rank x u32 dims, u64 offset]
    payload     float32 tensors; offsets are relative to the payload start
"""

import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .config import NetConfig
from .model import NetParams, param_shapes

logger = logging.getLogger(__name__)

MAGIC = b"CSNP"
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_U8 = struct.Struct("<B")


class CheckpointFormatError(ValueError):
    """File is not a well-formed checkpoint."""


class ArchitectureMismatchError(ValueError):
    """Checkpoint was trained with a different NetConfig than the caller expects."""


def save_checkpoint(params: NetParams, cfg: NetConfig, path: Union[str, Path]) -> None:
    config_bytes = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    header = [MAGIC, _U32.pack(len(config_bytes)), config_bytes, _U32.pack(len(params.tensors))]
    payload = []
    offset = 0
    for name, value in params.tensors.items():
        name_bytes = name.encode("utf-8")
        header.append(_U16.pack(len(name_bytes)) + name_bytes + _U8.pack(value.ndim))
        header.extend(_U32.pack(d) for d in value.shape)
        header.append(_U64.pack(offset))
        data = np.ascontiguousarray(value, dtype="<f4").tobytes()
        payload.append(data)
        offset += len(data)
    Path(path).write_bytes(b"".join(header + payload))
    logger.info("Saved checkpoint with %d tensors to %s", len(params.tensors), path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: struct.Struct):
        if self.pos + fmt.size > len(self.data):
            raise CheckpointFormatError("checkpoint header is truncated")
        (value,) = fmt.unpack_from(self.data, self.pos)
        self.pos += fmt.size
        return value

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("checkpoint header is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def load_checkpoint(path: Union[str, Path],
                    expected: Optional[NetConfig] = None) -> Tuple[NetParams, NetConfig]:
    """Read a checkpoint; with ``expected`` set, refuse any other architecture."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    reader = _Reader(data)
    reader.pos = 4
    try:
        cfg = NetConfig(**json.loads(reader.raw(reader.take(_U32)).decode("utf-8")))
    except (TypeError, ValueError) as e:
        raise CheckpointFormatError(f"unreadable network config: {e}") from e
    if expected is not None and cfg != expected:
        raise ArchitectureMismatchError(f"checkpoint holds {cfg}, expected {expected}")

    entries = []
    for _ in range(reader.take(_U32)):
        name = reader.raw(reader.take(_U16)).decode("utf-8")
        shape = tuple(reader.take(_U32) for _ in range(reader.take(_U8)))
        entries.append((name, shape, reader.take(_U64)))

    wanted = param_shapes(cfg)
    if [(name, shape) for name, shape, _ in entries] != list(wanted.items()):
        raise CheckpointFormatError("shape table mismatch between directory and network config")

    base = reader.pos
    tensors = OrderedDict()
    for name, shape, offset in entries:
        count = int(np.prod(shape))
        start = base + offset
        if start + 4 * count > len(data):
            raise CheckpointFormatError(f"payload of {name} is truncated")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=count, offset=start).reshape(shape).astype(np.float32)
    logger.debug("Loaded checkpoint %s (depth %d, base %d)", path, cfg.depth, cfg.base_filters)
    return NetParams(cfg, tensors), cfg
