"""The DVEC binary container.

Layout (all integers little-endian)::

    b"DVEC"              magic
    u32                  version (1)
    u32                  stream tag (embedding / feature / model)
    u32                  number of item dimensions k
    u32 * k              item shape
    u64                  item count n
    f64 * n * prod(shape)  payload, IEEE-754 little-endian
    bytes                metadata block: UTF-8 JSON lines, the first line is
                         a header object, one further line per row
    u64                  byte offset of the metadata block

The trailing offset must equal the end of the payload; a file truncated
anywhere fails that check.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ContainerError

MAGIC = b"DVEC"
VERSION = 1
_F64 = np.dtype("<f8")
_UMASK = os.umask(0)
os.umask(_UMASK)


class StreamTag(IntEnum):
    EMBEDDING = 1
    FEATURE = 2
    MODEL = 3


@dataclass
class Container:
    tag: StreamTag
    data: np.ndarray
    header: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)


def dumps_json(obj) -> str:
    # one canonical encoding so identical inputs give identical bytes
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(tag, data, header=None, rows=()) -> bytes:
    data = np.ascontiguousarray(data, dtype=_F64)
    if data.ndim < 1:
        raise ValueError("container payload needs at least one axis (the item axis)")
    count, shape = data.shape[0], data.shape[1:]
    parts = [
        MAGIC,
        struct.pack("<III", VERSION, int(StreamTag(tag)), len(shape)),
        struct.pack(f"<{len(shape)}I", *shape),
        struct.pack("<Q", count),
        data.tobytes(order="C"),
    ]
    offset = sum(len(p) for p in parts)
    lines = [dumps_json(header or {})] + [dumps_json(r) for r in rows]
    parts.append(("\n".join(lines) + "\n").encode("utf-8"))
    parts.append(struct.pack("<Q", offset))
    return b"".join(parts)


def decode(blob: bytes) -> Container:
    if len(blob) < 24 or blob[:4] != MAGIC:
        raise ContainerError("unsupported container: bad magic")
    version, tag, ndim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container: version {version}")
    try:
        tag = StreamTag(tag)
    except ValueError:
        raise ContainerError(f"unsupported container: stream tag {tag}") from None
    pos = 16
    if ndim > 8 or len(blob) < pos + 4 * ndim + 8:
        raise ContainerError("corrupt payload: header truncated")
    shape = struct.unpack_from(f"<{ndim}I", blob, pos)
    pos += 4 * ndim
    (count,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    n_values = count * int(np.prod(shape, dtype=np.int64))
    end = pos + 8 * n_values
    if end + 8 > len(blob):
        raise ContainerError("corrupt payload: file shorter than declared payload")
    (offset,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    if offset != end:
        raise ContainerError("corrupt payload: metadata offset mismatch")
    data = np.frombuffer(blob, dtype=_F64, count=n_values, offset=pos)
    data = data.reshape((count,) + tuple(shape)).astype(np.float64)
    try:
        text = blob[end:-8].decode("utf-8")
        lines = [json.loads(line) for line in text.splitlines() if line]
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt payload: metadata block unreadable ({exc})") from None
    if not lines:
        raise ContainerError("corrupt payload: missing metadata header")
    return Container(tag=tag, data=data, header=lines[0], rows=lines[1:])


def write_container(path, tag, data, header=None, rows=()) -> None:
    atomic_write_bytes(path, encode(tag, data, header, rows))


def read_container(path) -> Container:
    with open(path, "rb") as fh:
        return decode(fh.read())
