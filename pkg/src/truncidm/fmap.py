"""Reader/writer for the ``.fmap`` binary tensor format.

Layout (all integers little-endian)::

    b"FMAP"  u32 version=1  u8 dtype  u32 ndim  ndim*u32 extents  payload

dtype codes: 0 = float32, 1 = uint8, 2 = float64.  Code 2 is an extension
used for model parameters, which must round-trip bit-exactly.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, FormatError, TruncatedError, VersionError

MAGIC = b"FMAP"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<f8")}
CODES = {np.dtype("float32"): 0, np.dtype("uint8"): 1, np.dtype("float64"): 2}

_HEAD = struct.Struct("<4sIBI")


def header_size(ndim):
    return _HEAD.size + 4 * ndim


def encode_fmap(array, dtype=None):
    arr = np.asarray(array)
    if dtype is not None:
        arr = arr.astype(dtype)
    code = CODES.get(arr.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {arr.dtype} (fmap stores float32, uint8, float64)")
    arr = np.asarray(arr, dtype=DTYPES[code], order="C")
    head = _HEAD.pack(MAGIC, VERSION, code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def decode_fmap(buf, source="<bytes>"):
    if len(buf) < _HEAD.size:
        raise TruncatedError(f"{source}: header truncated ({len(buf)} bytes)")
    magic, version, code, ndim = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"{source}: unsupported fmap version {version}")
    if code not in DTYPES:
        raise FormatError(f"{source}: unknown dtype code {code}")
    off = _HEAD.size
    if len(buf) < off + 4 * ndim:
        raise TruncatedError(f"{source}: extent table truncated")
    shape = struct.unpack_from(f"<{ndim}I", buf, off)
    off += 4 * ndim
    dt = DTYPES[code]
    need = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    have = len(buf) - off
    if have < need:
        raise TruncatedError(f"{source}: payload truncated ({have} of {need} bytes)")
    if have > need:
        raise FormatError(f"{source}: {have - need} trailing bytes after payload")
    return np.frombuffer(buf, dtype=dt, count=need // dt.itemsize, offset=off).reshape(shape).copy()


def save_fmap(array, path, dtype=None):
    Path(path).write_bytes(encode_fmap(array, dtype))


def load_fmap(path):
    path = Path(path)
    return decode_fmap(path.read_bytes(), source=str(path))
