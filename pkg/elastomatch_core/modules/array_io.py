"""
Binary container for named float64 arrays.

Layout (little-endian):
    magic      8 bytes   b"E2D3BIN1"
    count      uint32    number of arrays
    per array:
        name_len   uint16
        name       UTF-8 bytes
        ndim       uint8
        dims       uint64 * ndim
        payload    float64 * prod(dims), row-major
"""
import struct
from pathlib import Path
from typing import Dict

import numpy as np

from .errors import CacheCorrupted

MAGIC = b"E2D3BIN1"


def write_container(file_path: str, arrays: Dict[str, np.ndarray]):
    """
    Write named arrays to a container file.

    Args:
        file_path: Destination path
        arrays: Mapping of array name to array (cast to float64)
    """
    chunks = [MAGIC, struct.pack('<I', len(arrays))]
    for name, array in arrays.items():
        data = np.ascontiguousarray(array, dtype='<f8')
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', data.ndim))
        chunks.append(struct.pack(f'<{data.ndim}Q', *data.shape))
        chunks.append(data.tobytes(order='C'))
    Path(file_path).write_bytes(b''.join(chunks))


def read_container(file_path: str) -> Dict[str, np.ndarray]:
    """
    Read a container file.

    Raises:
        CacheCorrupted: If the file is truncated or malformed
    """
    blob = Path(file_path).read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise CacheCorrupted(f"{file_path}: bad magic bytes")

    offset = len(MAGIC)

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise CacheCorrupted(f"{file_path}: truncated container")
        piece = blob[offset:offset + size]
        offset += size
        return piece

    try:
        (count,) = struct.unpack('<I', take(4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack('<H', take(2))
            name = take(name_len).decode('utf-8')
            (ndim,) = struct.unpack('<B', take(1))
            dims = struct.unpack(f'<{ndim}Q', take(8 * ndim))
            size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            payload = take(8 * size)
            arrays[name] = np.frombuffer(payload, dtype='<f8').reshape(dims).astype(np.float64)
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise CacheCorrupted(f"{file_path}: {e}") from e

    if offset != len(blob):
        raise CacheCorrupted(f"{file_path}: trailing bytes after {count} arrays")
    return arrays
