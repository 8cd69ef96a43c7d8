"""Minimal OCTV container access.

Just enough of the despeckling toolkit's volume format to read
training pairs and write inference results: scalar float32 payloads,
z fastest. Complex tomograms are out of scope here; convert upstream
with the octdespeckle CLI.
"""
import struct

import numpy as np

from .exceptions import FormatError

MAGIC = b"OCTV"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4sHBB3Q3d")
_COMPLEX_FLAG = 0x80

LINEAR = 0
LOG_DB = 1
UNIT = 2
SIGNED = 3
DOMAIN_NAMES = {LINEAR: "linear", LOG_DB: "log_db", UNIT: "unit",
                SIGNED: "signed"}


def read_volume(path):
    """Read a scalar volume; returns (data (nz, nx, ny), domain, pitch)."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_STRUCT.size)
        if len(raw) < HEADER_STRUCT.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, domain, ch_byte, nz, nx, ny, *pitch = \
            HEADER_STRUCT.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported container version {version}")
        if domain not in DOMAIN_NAMES:
            raise FormatError(f"{path}: unknown domain code {domain}")
        if ch_byte & _COMPLEX_FLAG or (ch_byte & ~_COMPLEX_FLAG) != 1:
            raise FormatError(f"{path}: only scalar volumes are supported here")
        count = nz * nx * ny
        if count == 0:
            raise FormatError(f"{path}: zero-sized volume")
        payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise FormatError(f"{path}: payload holds {len(payload) // 4} of "
                          f"{count} voxels")
    data = np.frombuffer(payload, dtype="<f4").reshape((nz, nx, ny),
                                                       order="F")
    return np.ascontiguousarray(data), domain, tuple(pitch)


def write_volume(path, data, domain=SIGNED, pitch=(1.0, 1.0, 1.0)):
    """Write a scalar float32 volume, z fastest."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 3:
        raise FormatError(f"expected a 3-D array, got shape {data.shape}")
    if domain not in DOMAIN_NAMES:
        raise FormatError(f"unknown domain code {domain}")
    header = HEADER_STRUCT.pack(MAGIC, VERSION, domain, 1, *data.shape,
                                *(float(p) for p in pitch))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data.ravel(order="F"),
                                      dtype="<f4").tobytes())
