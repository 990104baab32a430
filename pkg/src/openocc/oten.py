"""Binary tensor container used for all on-disk arrays.

Layout (little-endian throughout):

    bytes 0..3   magic  b"OTEN"
    byte  4      format version, currently 1
    byte  5      element type: 1=float32 2=float64 3=uint16 4=uint8
    byte  6      number of dimensions
    byte  7      reserved, must be zero
    next  8*ndim dimension sizes as u64
    rest         payload, C row-major order

Round-trips are bit-exact, including NaN payloads.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"OTEN"
VERSION = 1

_CODE_TO_DTYPE = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<u2"),
    4: np.dtype("<u1"),
}
_DTYPE_TO_CODE = {
    np.dtype(np.float32): 1,
    np.dtype(np.float64): 2,
    np.dtype(np.uint16): 3,
    np.dtype(np.uint8): 4,
}


def tensor_bytes(array: np.ndarray) -> bytes:
    """Serialize an array. Only the four supported dtypes are accepted."""
    arr = np.asarray(array)
    code = _DTYPE_TO_CODE.get(arr.dtype)
    if code is None:
        raise ValidationError(
            f"unsupported tensor dtype {arr.dtype}; "
            "use float32, float64, uint16 or uint8"
        )
    ndim = arr.ndim
    if ndim > 255:
        raise ValidationError(f"too many dimensions: {ndim}")
    header = MAGIC + struct.pack("<BBBB", VERSION, code, ndim, 0)
    dims = struct.pack(f"<{ndim}Q", *arr.shape) if ndim else b""
    payload = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"),
                                                copy=False).tobytes()
    return header + dims + payload


def parse_tensor(data: bytes) -> np.ndarray:
    """Inverse of tensor_bytes; raises ValidationError on any malformation."""
    if len(data) < 8:
        raise ValidationError("tensor header truncated")
    if data[:4] != MAGIC:
        raise ValidationError(f"bad magic {data[:4]!r}")
    version, code, ndim, pad = struct.unpack("<BBBB", data[4:8])
    if version != VERSION:
        raise ValidationError(f"unsupported tensor version {version}")
    if pad != 0:
        raise ValidationError("reserved header byte must be zero")
    dtype = _CODE_TO_DTYPE.get(code)
    if dtype is None:
        raise ValidationError(f"unknown element type code {code}")
    offset = 8 + 8 * ndim
    if len(data) < offset:
        raise ValidationError("dimension block truncated")
    shape = struct.unpack(f"<{ndim}Q", data[8:offset]) if ndim else ()
    count = 1
    for d in shape:
        count *= d
    expected = offset + count * dtype.itemsize
    if len(data) != expected:
        raise ValidationError(
            f"payload size mismatch: header implies {expected} bytes, got {len(data)}"
        )
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return flat.reshape(shape).astype(dtype.newbyteorder("="), copy=True)


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_bytes(array))


def read_tensor(path: str | Path) -> np.ndarray:
    return parse_tensor(Path(path).read_bytes())


def write_tensor_stream(fp: io.BufferedIOBase, array: np.ndarray) -> None:
    fp.write(tensor_bytes(array))


def read_tensor_stream(fp: io.BufferedIOBase) -> np.ndarray:
    """Read exactly one tensor, leaving the cursor at the next one."""
    head = fp.read(8)
    if len(head) < 8:
        raise ValidationError("tensor header truncated")
    ndim = head[6]
    dims = fp.read(8 * ndim)
    if len(dims) < 8 * ndim:
        raise ValidationError("dimension block truncated")
    dtype = _CODE_TO_DTYPE.get(head[5])
    if dtype is None:
        raise ValidationError(f"unknown element type code {head[5]}")
    count = 1
    for d in struct.unpack(f"<{ndim}Q", dims) if ndim else ():
        count *= d
    payload = fp.read(count * dtype.itemsize)
    return parse_tensor(head + dims + payload)
