"""Binary weight checkpoints.

Layout (all integers little-endian):

    magic   4 bytes  b"HNSW"
    version u16      currently 1
    then per parameter, in save order:
      name_len u16
      name     UTF-8 bytes
      rank     u8
      dims     rank * u32
      payload  prod(dims) float64, row-major

No padding, no alignment, no trailing data. Identical parameter dicts
serialize to identical bytes, which is what the reproducibility checks
diff against.
"""

import struct

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"HNSW"
VERSION = 1


def save_checkpoint(path, params):
    """Write `params` (an ordered mapping name -> array or Tensor)."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise FormatError(f"parameter name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise FormatError(f"parameter rank too large: {name!r}")
        blob += struct.pack("<H", len(name_b))
        blob += name_b
        blob += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<I", d)
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(blob)


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n):
        if self.off + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u8(self):
        return self.take(1)[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    @property
    def remaining(self):
        return len(self.buf) - self.off


def load_checkpoint(path):
    """Read a checkpoint back as an ordered dict name -> float64 ndarray."""
    with open(path, "rb") as f:
        buf = f.read()
    r = _Reader(buf, path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u16()
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    params = {}
    while r.remaining:
        name = r.take(r.u16()).decode("utf-8")
        if name in params:
            raise FormatError(f"{path}: duplicate parameter {name!r}")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        payload = r.take(count * 8)
        params[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    return params
