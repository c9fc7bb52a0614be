"""Binary tensor container.

Layout (little-endian)::

    b"SPFL" | version:u32 | count:u32 |
    per tensor: name_len:u32 | name:utf-8 | dtype:u8 | rank:u32 | extents:u64*rank | raw values

Round trips are bit-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPFL"
VERSION = 1
_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("<i8"): 3}
_DTYPES = {v: k for k, v in _TAGS.items()}


class ContainerError(ValueError):
    pass


def dumps(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(getattr(arr, "data", arr) if not isinstance(arr, np.ndarray) else arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _TAGS:
            raise ContainerError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BI", _TAGS[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise ContainerError("bad magic")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off : off + n].decode("utf-8")
        off += n
        tag, rank = struct.unpack_from("<BI", buf, off)
        off += 5
        shape = struct.unpack_from(f"<{rank}Q", buf, off)
        off += 8 * rank
        dt = _DTYPES.get(tag)
        if dt is None:
            raise ContainerError(f"unknown dtype tag {tag} for {name!r}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if off + nbytes > len(buf):
            raise ContainerError(f"truncated data for {name!r}")
        out[name] = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(buf):
        raise ContainerError("trailing bytes after last tensor")
    return out


def save(path, tensors: dict) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict:
    return loads(Path(path).read_bytes())
