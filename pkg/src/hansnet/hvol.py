"""Volume container for images and label maps.

Layout (integers and floats little-endian):

    magic   4 bytes  b"HVOL"
    version u16      currently 1
    dtype   u8       0 = float32 image, 1 = uint8 labels
    dims    3 * u32  depth, height, width
    spacing 3 * f32  voxel size in mm, same axis order as dims
    payload dims-many values, C order (slice-major in depth)

Images carry windowed intensities; label volumes use 0 background,
1 organ, 2 lesion.
"""

import struct

import numpy as np

from .errors import DimensionError, FormatError

MAGIC = b"HVOL"
VERSION = 1

DTYPE_IMAGE = 0
DTYPE_LABELS = 1

_DTYPES = {DTYPE_IMAGE: np.dtype("<f4"), DTYPE_LABELS: np.dtype("u1")}


def save_hvol(path, volume, spacing):
    """Write a [D, H, W] volume. float32 saves as an image, uint8 as labels."""
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise DimensionError(f"hvol: volume must be [D, H, W], got shape {vol.shape}")
    if vol.dtype == np.float32:
        code = DTYPE_IMAGE
    elif vol.dtype == np.uint8:
        code = DTYPE_LABELS
    else:
        raise DimensionError(
            f"hvol: dtype must be float32 or uint8, got {vol.dtype}"
        )
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise DimensionError(f"hvol: spacing must be 3 positive floats, got {spacing}")

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += struct.pack("<B", code)
    blob += struct.pack("<III", *vol.shape)
    blob += struct.pack("<fff", *spacing)
    blob += np.ascontiguousarray(vol, dtype=_DTYPES[code]).tobytes()
    with open(path, "wb") as f:
        f.write(blob)


def load_hvol(path):
    """Read a volume back as (array, spacing); dtype follows the file."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"{path}: not a volume file (bad magic)")
    if len(buf) < 31:
        raise FormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported volume version {version}")
    code = buf[6]
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    d, h, w = struct.unpack_from("<III", buf, 7)
    spacing = struct.unpack_from("<fff", buf, 19)
    dt = _DTYPES[code]
    need = 31 + d * h * w * dt.itemsize
    if len(buf) != need:
        raise FormatError(f"{path}: payload size mismatch ({len(buf)} vs {need} bytes)")
    vol = np.frombuffer(buf, dtype=dt, count=d * h * w, offset=31).reshape(d, h, w)
    return vol.copy(), tuple(float(s) for s in spacing)
