# -*- coding: utf-8 -*-
# Tensor blob codec
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Binary layout of one tensor:

- 8 bytes magic `MKCTENS1`
- 4 bytes little-endian unsigned length of the header
- the header, UTF-8 JSON `{"dtype": "f64", "name": ..., "shape": [...]}`
- the values, little-endian float64, row-major

A tensor store is a plain concatenation of blobs; readers seek to an offset.
"""
import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, List, Tuple, Union

import numpy as np

from .exception import BlobFormatError
from .sortabledict import SortableDict

MAGIC = b"MKCTENS1"
_LENGTH = struct.Struct("<I")


def dump_tensor(stream: BinaryIO, name: str, array: np.ndarray) -> int:
    """
    Write one blob.
    Args:
        stream: Binary output
        name: Name saved in the header
        array: Values, converted to float64
    Returns:
        The number of bytes written
    """
    values = np.array(array, dtype="<f8", order="C")
    header = json.dumps({"name": name, "shape": list(values.shape), "dtype": "f64"},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = values.tobytes()
    stream.write(MAGIC)
    stream.write(_LENGTH.pack(len(header)))
    stream.write(header)
    stream.write(payload)
    return len(MAGIC) + _LENGTH.size + len(header) + len(payload)


def _read_exactly(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise BlobFormatError("truncated blob: expected %d bytes of %s, got %d" % (size, what, len(data)))
    return data


def parse_tensor(stream: BinaryIO) -> Tuple[str, np.ndarray]:
    """
    Read one blob at the current position.
    Returns:
        (name, array)
    """
    magic = _read_exactly(stream, len(MAGIC), "magic")
    if magic != MAGIC:
        raise BlobFormatError("bad magic %r" % magic)
    (length,) = _LENGTH.unpack(_read_exactly(stream, _LENGTH.size, "header length"))
    try:
        header = json.loads(_read_exactly(stream, length, "header").decode("utf-8"))
        name, shape, dtype = header["name"], tuple(int(n) for n in header["shape"]), header["dtype"]
    except (ValueError, KeyError, TypeError) as ex:
        raise BlobFormatError("bad blob header: %s" % ex) from ex
    if dtype != "f64":
        raise BlobFormatError("unsupported dtype %r" % dtype)
    count = int(np.prod(shape)) if shape else 1
    payload = _read_exactly(stream, 8 * count, "values")
    return name, np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def dumps_tensor(name: str, array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    dump_tensor(buffer, name, array)
    return buffer.getvalue()


def loads_tensor(data: bytes) -> Tuple[str, np.ndarray]:
    return parse_tensor(io.BytesIO(data))


def write_store(path: Union[str, Path], items: Iterable[Tuple[str, np.ndarray]]) -> List[int]:
    """
    Write a tensor store.
    Returns:
        The offset of every blob
    """
    offsets = []
    position = 0
    with open(path, "wb") as stream:
        for name, array in items:
            offsets.append(position)
            position += dump_tensor(stream, name, array)
    return offsets


def read_at(path: Union[str, Path], offsets: Iterable[int]) -> SortableDict:
    """
    Read the blobs starting at `offsets`.
    Returns:
        name -> array, in the order of `offsets`
    """
    result = SortableDict()
    with open(path, "rb") as stream:
        for offset in offsets:
            stream.seek(offset)
            name, array = parse_tensor(stream)
            if name in result:
                raise BlobFormatError("duplicate blob %r at offset %d" % (name, offset))
            result[name] = array
    return result
