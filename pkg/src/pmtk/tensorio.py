"""Bit-exact binary tensor files.

Layout (little-endian throughout):

    bytes 0-3   magic "PMTK"
    byte  4     format version, currently 0x01
    byte  5     rank, 1..4
    next 4*rank unsigned 32-bit dims
    rest        product(dims) float32 values, row-major

Total length must equal ``6 + 4*rank + 4*product(dims)`` exactly. Writes are
atomic (temp file in the target directory, then rename).
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"PMTK"
VERSION = 1
MAX_RANK = 4
_HEADER_FIXED = 6


def write_tensor(array, path):
    """Write a float32 tensor of rank 1..4 to ``path`` atomically."""
    arr = np.asarray(array)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise TensorFormatError(
            f"tensor rank must be in [1, {MAX_RANK}], got {arr.ndim}"
        )
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if any(d == 0 for d in arr.shape):
        raise TensorFormatError(f"zero-length dimension in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("refusing to write non-finite values")

    path = Path(path)
    blob = (
        MAGIC
        + bytes([VERSION, arr.ndim])
        + b"".join(struct.pack("<I", d) for d in arr.shape)
        + arr.tobytes()
    )
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    except OSError as exc:
        raise TensorFormatError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        os.unlink(tmp)
        raise TensorFormatError(f"cannot write {path}: {exc}") from exc


def read_tensor(path):
    """Read a tensor written by :func:`write_tensor`, validating the format."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise TensorFormatError(f"cannot read {path}: {exc}") from exc

    if len(data) < _HEADER_FIXED:
        raise TensorFormatError(
            f"{path}: length mismatch: expected at least {_HEADER_FIXED} header "
            f"bytes, got {len(data)}"
        )
    if data[:4] != MAGIC:
        raise TensorFormatError(f"{path}: not a tensor file (bad magic {data[:4]!r})")
    version, rank = data[4], data[5]
    if version != VERSION:
        raise TensorFormatError(
            f"{path}: unsupported format version {version}, expected {VERSION}"
        )
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"{path}: rank must be in [1, {MAX_RANK}], got {rank}")

    dims_end = _HEADER_FIXED + 4 * rank
    if len(data) < dims_end:
        raise TensorFormatError(
            f"{path}: length mismatch: expected {dims_end} bytes for the header, "
            f"got {len(data)}"
        )
    dims = struct.unpack(f"<{rank}I", data[_HEADER_FIXED:dims_end])
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"{path}: zero-length dimension in {dims}")

    count = 1
    for d in dims:
        count *= d
    expected = dims_end + 4 * count
    if len(data) != expected:
        raise TensorFormatError(
            f"{path}: length mismatch: expected {expected} bytes, got {len(data)}"
        )

    arr = np.frombuffer(data, dtype="<f4", count=count, offset=dims_end)
    finite = np.isfinite(arr)
    if not finite.all():
        bad = int(np.argmax(~finite))
        raise TensorFormatError(
            f"{path}: non-finite value at payload element {bad} "
            f"(byte offset {dims_end + 4 * bad})"
        )
    return arr.reshape(dims).copy()
