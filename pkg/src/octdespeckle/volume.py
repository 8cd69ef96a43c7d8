"""Volume data model and the OCTV on-disk container.

Axes are (z, x, y): depth along an A-line, fast scan axis, slow scan
axis.  A B-scan is the (z, x) plane at one y.  On disk the sample order
is z fastest, then x, then y, which is Fortran order for arrays shaped
(nz, nx, ny).

OCTV layout, little-endian:

    offset  size  field
    0       4     magic b"OCTV"
    4       2     version, u16, currently 1
    6       1     domain, u8 (0 linear, 1 log dB, 2 unit, 3 signed)
    7       1     channels, u8; bit 0x80 marks a complex payload
    8       24    nz, nx, ny as u64
    32      24    dz, dx, dy in micrometers as f64
    56            payload: float32 samples, or complex64 (interleaved
                  re/im) one channel block after another

The header is exactly 56 bytes.  A real scalar volume of one voxel
therefore occupies 60 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .exceptions import ArgumentError, DataError, FormatError

MAGIC = b"OCTV"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4sHBB3Q3d")
HEADER_SIZE = HEADER_STRUCT.size  # 56
_COMPLEX_FLAG = 0x80


class Domain(IntEnum):
    """Value domain of a scalar volume."""

    LINEAR = 0
    LOG_DB = 1
    UNIT = 2
    SIGNED = 3


@dataclass(frozen=True)
class ContrastWindow:
    """Display/normalization window in dB, lower bound strictly below upper."""

    lower_db: float
    upper_db: float

    def __post_init__(self):
        low = float(self.lower_db)
        high = float(self.upper_db)
        if not (np.isfinite(low) and np.isfinite(high)):
            raise ArgumentError("contrast window bounds must be finite")
        if not low < high:
            raise ArgumentError(
                f"contrast window requires lower_db < upper_db, got [{low}, {high}]"
            )
        object.__setattr__(self, "lower_db", low)
        object.__setattr__(self, "upper_db", high)

    @property
    def span_db(self) -> float:
        return self.upper_db - self.lower_db


def _check_pitch(pitch) -> tuple[float, float, float]:
    if len(pitch) != 3:
        raise ArgumentError("pitch must hold (dz, dx, dy) in micrometers")
    out = tuple(float(p) for p in pitch)
    if not all(np.isfinite(p) and p > 0 for p in out):
        raise ArgumentError(f"pitch entries must be finite and positive, got {out}")
    return out


_DOMAIN_BOUNDS = {
    Domain.LINEAR: (0.0, None),
    Domain.LOG_DB: (None, None),
    Domain.UNIT: (0.0, 1.0),
    Domain.SIGNED: (-1.0, 1.0),
}


def _check_domain_values(data: np.ndarray, domain: Domain) -> None:
    if not np.isfinite(data).all():
        raise DataError("volume holds NaN or infinite samples")
    low, high = _DOMAIN_BOUNDS[domain]
    if low is not None and data.size and float(data.min()) < low:
        raise DataError(f"{domain.name} volume holds samples below {low}")
    if high is not None and data.size and float(data.max()) > high:
        raise DataError(f"{domain.name} volume holds samples above {high}")


@dataclass(frozen=True)
class Volume:
    """Immutable scalar volume: float32 data shaped (nz, nx, ny)."""

    data: np.ndarray
    pitch: tuple[float, float, float]
    domain: Domain

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ArgumentError(f"volume data must be 3-D (nz, nx, ny), got {arr.ndim}-D")
        if min(arr.shape) < 1:
            raise ArgumentError(f"volume dimensions must be positive, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        domain = Domain(self.domain)
        _check_domain_values(arr, domain)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "pitch", _check_pitch(self.pitch))
        object.__setattr__(self, "domain", domain)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, domain: Domain | None = None) -> "Volume":
        """New volume reusing this one's pitch."""
        return Volume(data, self.pitch, self.domain if domain is None else domain)


@dataclass(frozen=True)
class ComplexTomogram:
    """Immutable complex field: complex64 data shaped (channels, nz, nx, ny)."""

    data: np.ndarray
    pitch: tuple[float, float, float]

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise ArgumentError(
                f"tomogram data must be 4-D (channels, nz, nx, ny), got {arr.ndim}-D"
            )
        if min(arr.shape) < 1:
            raise ArgumentError(f"tomogram dimensions must be positive, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.complex64)
        if not np.isfinite(arr).all():
            raise DataError("tomogram holds NaN or infinite samples")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "pitch", _check_pitch(self.pitch))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


def _pack_header(domain: Domain, channels: int, complex_payload: bool,
                 dims: tuple[int, int, int], pitch: tuple[float, float, float]) -> bytes:
    ch_byte = channels | (_COMPLEX_FLAG if complex_payload else 0)
    return HEADER_STRUCT.pack(MAGIC, VERSION, int(domain), ch_byte, *dims, *pitch)


def write_volume(volume: Volume, path) -> None:
    """Write a scalar volume to an OCTV file."""
    payload = np.ascontiguousarray(volume.data.ravel(order="F"), dtype="<f4")
    header = _pack_header(volume.domain, 1, False, volume.dims, volume.pitch)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def write_tomogram(tomogram: ComplexTomogram, path) -> None:
    """Write a complex tomogram to an OCTV file, one channel block at a time."""
    if tomogram.channels > 0x7F:
        raise ArgumentError("OCTV stores at most 127 channels")
    header = _pack_header(Domain.LINEAR, tomogram.channels, True,
                          tomogram.dims, tomogram.pitch)
    with open(path, "wb") as fh:
        fh.write(header)
        for ch in range(tomogram.channels):
            block = np.ascontiguousarray(tomogram.data[ch].ravel(order="F"), dtype="<c8")
            fh.write(block.tobytes())


def _read_header(raw: bytes, path) -> tuple[Domain, int, bool, tuple[int, int, int],
                                            tuple[float, float, float]]:
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, version, domain_byte, ch_byte, nz, nx, ny, dz, dx, dy = \
        HEADER_STRUCT.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    try:
        domain = Domain(domain_byte)
    except ValueError:
        raise FormatError(f"{path}: unknown domain code {domain_byte}") from None
    complex_payload = bool(ch_byte & _COMPLEX_FLAG)
    channels = ch_byte & ~_COMPLEX_FLAG
    if channels < 1:
        raise FormatError(f"{path}: channel count must be at least 1")
    if min(nz, nx, ny) < 1:
        raise FormatError(f"{path}: zero-sized dimension in header ({nz}, {nx}, {ny})")
    pitch = (dz, dx, dy)
    if not all(np.isfinite(p) and p > 0 for p in pitch):
        raise FormatError(f"{path}: pitch entries must be finite and positive")
    return domain, channels, complex_payload, (nz, nx, ny), pitch


def read_octv(path) -> Volume | ComplexTomogram:
    """Read an OCTV file, returning a Volume or a ComplexTomogram."""
    raw = Path(path).read_bytes()
    domain, channels, complex_payload, dims, pitch = _read_header(raw, path)
    nz, nx, ny = dims
    sample = 8 if complex_payload else 4
    expected = HEADER_SIZE + channels * nz * nx * ny * sample
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated payload, {len(raw)} of {expected} bytes")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    body = raw[HEADER_SIZE:]
    if complex_payload:
        flat = np.frombuffer(body, dtype="<c8")
        data = np.empty((channels, nz, nx, ny), dtype=np.complex64)
        block = nz * nx * ny
        for ch in range(channels):
            data[ch] = flat[ch * block:(ch + 1) * block].reshape(dims, order="F")
        return ComplexTomogram(data, pitch)
    if channels != 1:
        raise FormatError(f"{path}: real payloads are single-channel, got {channels}")
    data = np.frombuffer(body, dtype="<f4").reshape(dims, order="F")
    return Volume(data.astype(np.float32), pitch, domain)


def read_volume(path) -> Volume:
    """Read an OCTV file that must hold a real scalar volume."""
    out = read_octv(path)
    if not isinstance(out, Volume):
        raise FormatError(f"{path}: holds a complex tomogram, not a scalar volume")
    return out


def read_tomogram(path) -> ComplexTomogram:
    """Read an OCTV file that must hold a complex tomogram."""
    out = read_octv(path)
    if not isinstance(out, ComplexTomogram):
        raise FormatError(f"{path}: holds a scalar volume, not a complex tomogram")
    return out


# Domain conversion steps along the chain LINEAR - LOG_DB - UNIT - SIGNED.

_CHAIN = [Domain.LINEAR, Domain.LOG_DB, Domain.UNIT, Domain.SIGNED]


def _linear_to_db(x: np.ndarray, floor) -> np.ndarray:
    if floor is None:
        if x.size and float(x.min()) <= 0.0:
            raise DataError(
                "linear volume holds non-positive samples and no floor was given"
            )
        return 10.0 * np.log10(x)
    floor = float(floor)
    if not (np.isfinite(floor) and floor > 0):
        raise ArgumentError(f"floor must be positive and finite, got {floor}")
    return 10.0 * np.log10(np.maximum(x, floor))


def convert_domain(volume: Volume, target: Domain, *,
                   window: ContrastWindow | None = None,
                   floor: float | None = 1e-12) -> Volume:
    """Convert a volume between value domains.

    Conversions compose along the chain linear <-> log dB <-> unit <->
    signed.  The log/unit step needs a ContrastWindow.  Going linear to
    log, non-positive samples are raised to `floor` first; pass
    floor=None to make them an error instead.  Unit and signed outputs
    are clipped to their bounds to absorb rounding.
    """
    target = Domain(target)
    if target == volume.domain:
        return volume
    src = _CHAIN.index(volume.domain)
    dst = _CHAIN.index(target)
    step = 1 if dst > src else -1
    x = volume.data.astype(np.float64)
    pos = src
    while pos != dst:
        nxt = pos + step
        pair = (_CHAIN[pos], _CHAIN[nxt])
        if pair == (Domain.LINEAR, Domain.LOG_DB):
            x = _linear_to_db(x, floor)
        elif pair == (Domain.LOG_DB, Domain.LINEAR):
            x = 10.0 ** (x / 10.0)
        elif pair == (Domain.LOG_DB, Domain.UNIT):
            if window is None:
                raise ArgumentError("log dB <-> unit conversion needs a ContrastWindow")
            x = np.clip((x - window.lower_db) / window.span_db, 0.0, 1.0)
        elif pair == (Domain.UNIT, Domain.LOG_DB):
            if window is None:
                raise ArgumentError("log dB <-> unit conversion needs a ContrastWindow")
            x = window.lower_db + x * window.span_db
        elif pair == (Domain.UNIT, Domain.SIGNED):
            x = np.clip(2.0 * x - 1.0, -1.0, 1.0)
        elif pair == (Domain.SIGNED, Domain.UNIT):
            x = np.clip((x + 1.0) / 2.0, 0.0, 1.0)
        pos = nxt
    out = x.astype(np.float32)
    if target == Domain.UNIT:
        np.clip(out, 0.0, 1.0, out=out)
    elif target == Domain.SIGNED:
        np.clip(out, -1.0, 1.0, out=out)
    return Volume(out, volume.pitch, target)
