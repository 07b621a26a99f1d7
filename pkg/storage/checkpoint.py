"""
Binary checkpoint codec.

Layout (little-endian): magic "DCE1", u32 version, u32 entry count, then per entry
u16 name length, UTF-8 name, u8 dtype code, u8 ndim, ndim x u32 dims, raw values.
Dtype codes: 0 float32, 1 float64, 2 raw bytes (used for the JSON model config).
"""
import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from config.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from utils.errors import CheckpointError
from utils.logger import log_checkpoint_event, setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

CONFIG_ENTRY = "config"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: "<f4", 1: "<f8", 2: "u1"}


def _encode_entry(name: str, code: int, array: np.ndarray) -> bytes:
    encoded_name = name.encode("utf-8")
    header = struct.pack("<H", len(encoded_name)) + encoded_name
    header += struct.pack("<BB", code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=_CODE_DTYPES[code]).tobytes()


def write_checkpoint(path: PathLike, entries: Dict[str, np.ndarray], config: Optional[Dict[str, Any]] = None) -> None:
    """
    Write named arrays (and optionally a JSON config) to a checkpoint file

    Args:
        path: Destination file
        entries: Ordered name -> float32/float64 array mapping
        config: JSON-serialisable model configuration
    """
    chunks = []
    if config is not None:
        payload = json.dumps(config, sort_keys=True).encode("utf-8")
        chunks.append(_encode_entry(CONFIG_ENTRY, 2, np.frombuffer(payload, dtype=np.uint8)))
    for name, array in entries.items():
        code = _DTYPE_CODES.get(np.dtype(array.dtype))
        if code is None:
            raise CheckpointError(f"entry {name} has unsupported dtype {array.dtype}")
        chunks.append(_encode_entry(name, code, array))

    header = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(chunks))
    try:
        Path(path).write_bytes(header + b"".join(chunks))
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} ({len(entries)} entries)")
    log_checkpoint_event("saved", str(path), len(entries))


class _Reader:
    """Bounds-checked cursor over the checkpoint bytes"""

    def __init__(self, raw: bytes, path: PathLike):
        self.raw = raw
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.raw):
            raise CheckpointError(f"checkpoint {self.path} is truncated at byte {self.offset}")
        chunk = self.raw[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: PathLike) -> Tuple["OrderedDict[str, np.ndarray]", Optional[Dict[str, Any]]]:
    """
    Read a checkpoint file

    Returns:
        (entries, config) where config is None when the file carries none
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    reader = _Reader(raw, path)
    magic = reader.take(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"checkpoint {path} has bad magic {magic!r}")
    version, count = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint {path} has version {version}, expected {CHECKPOINT_VERSION}")

    entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
    config = None
    for _ in range(count):
        (name_length,) = reader.unpack("<H")
        try:
            name = reader.take(name_length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"checkpoint {path} has an undecodable entry name") from e
        code, ndim = reader.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"checkpoint {path} entry {name} has unknown dtype code {code}")
        dims = reader.unpack(f"<{ndim}I")
        dtype = np.dtype(_CODE_DTYPES[code])
        values = np.frombuffer(reader.take(int(np.prod(dims)) * dtype.itemsize), dtype=dtype).reshape(dims)
        if code == 2:
            if name != CONFIG_ENTRY:
                raise CheckpointError(f"checkpoint {path} has unexpected byte entry {name}")
            config = json.loads(values.tobytes().decode("utf-8"))
            continue
        if name in entries:
            raise CheckpointError(f"checkpoint {path} repeats entry {name}")
        entries[name] = np.array(values, dtype=np.float32 if code == 0 else np.float64)

    if reader.offset != len(raw):
        raise CheckpointError(f"checkpoint {path} has {len(raw) - reader.offset} trailing bytes")
    logger.info(f"Loaded checkpoint {path} ({len(entries)} entries)")
    log_checkpoint_event("loaded", str(path), len(entries))
    return entries, config
