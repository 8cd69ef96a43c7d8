"""Volumetric non-local-means despeckling with SNR-adaptive strength.

The engine filters unit-normalized log intensity.  Each voxel becomes
a weighted average of the voxels in its 3D search window, weights
falling off exponentially with the Gaussian-weighted squared patch
distance, and the filtering parameter h growing from h0 at high SNR
to h0 + h1 at the noise floor.  The slow-axis search radius default
of 8 gives the 2x8+1 B-scan window; in-plane search mirrors it and
the similarity patch defaults to 3x3x3.

All distances, weights, and averages act on the unit-domain values;
the ContrastWindow that produced them is only needed to recover dB
for the SNR-adaptive h, so it is optional when h1 is zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import numba

from . import _nlm_kernel
from .exceptions import ArgumentError
from .volume import ContrastWindow, Domain, Volume


@dataclass(frozen=True)
class TNodeParams:
    """Filtering parameters on unit-normalized log intensity."""

    h0: float = 0.08
    h1: float = 0.04
    search_radii: tuple[int, int, int] = (8, 8, 8)
    patch_radii: tuple[int, int, int] = (1, 1, 1)
    noise_floor_db: float = 0.0
    snr_scale_db: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.h0) and self.h0 > 0):
            raise ArgumentError(f"h0 must be positive, got {self.h0}")
        if not (np.isfinite(self.h1) and self.h1 >= 0):
            raise ArgumentError(f"h1 must be non-negative, got {self.h1}")
        if not np.isfinite(self.noise_floor_db):
            raise ArgumentError("noise_floor_db must be finite")
        if not (np.isfinite(self.snr_scale_db) and self.snr_scale_db > 0):
            raise ArgumentError(f"snr_scale_db must be positive, got {self.snr_scale_db}")
        for name in ("search_radii", "patch_radii"):
            radii = tuple(int(r) for r in getattr(self, name))
            if len(radii) != 3 or any(r < 0 for r in radii):
                raise ArgumentError(f"{name} must be three non-negative integers")
            object.__setattr__(self, name, radii)
        if any(p > s for p, s in zip(self.patch_radii, self.search_radii)):
            raise ArgumentError(
                f"patch_radii {self.patch_radii} must not exceed "
                f"search_radii {self.search_radii} on any axis")


def gaussian_patch_taps(radius: int, dtype=np.float64) -> np.ndarray:
    """Patch similarity taps: Gaussian with sigma = radius/2, sum 1."""
    if radius == 0:
        return np.ones(1, dtype=dtype)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    sigma = radius / 2.0
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    return (taps / taps.sum()).astype(dtype)


def adaptive_h(intensity_db, params: TNodeParams):
    """Filtering strength h0 + h1 exp(-max(0, dB - floor)/scale)."""
    db = np.asarray(intensity_db, dtype=np.float64)
    excess = np.maximum(db - params.noise_floor_db, 0.0)
    h = params.h0 + params.h1 * np.exp(-excess / params.snr_scale_db)
    return float(h) if np.isscalar(intensity_db) else h


def patch_distance(volume: Volume, p, q, patch_radii=(1, 1, 1)) -> float:
    """Gaussian-weighted mean squared difference of two patches.

    Patches reaching outside the volume read mirrored samples, so any
    in-bounds p and q are valid.
    """
    if volume.domain != Domain.UNIT:
        raise ArgumentError("patch_distance works on UNIT volumes")
    radii = tuple(int(r) for r in patch_radii)
    if len(radii) != 3 or any(r < 0 for r in radii):
        raise ArgumentError("patch_radii must be three non-negative integers")
    dims = volume.dims
    for name, idx in (("p", p), ("q", q)):
        if len(idx) != 3 or any(not 0 <= int(i) < n for i, n in zip(idx, dims)):
            raise ArgumentError(f"{name}={tuple(idx)} is outside the volume {dims}")
    padded = np.pad(volume.data.astype(np.float64), [(r, r) for r in radii],
                    mode="symmetric") if max(radii) else volume.data.astype(np.float64)
    kernel = (gaussian_patch_taps(radii[0])[:, None, None]
              * gaussian_patch_taps(radii[1])[None, :, None]
              * gaussian_patch_taps(radii[2])[None, None, :])

    def grab(idx):
        sl = tuple(slice(int(i), int(i) + 2 * r + 1) for i, r in zip(idx, radii))
        return padded[sl]

    d2 = float(np.sum(kernel * (grab(p) - grab(q)) ** 2))
    return d2 / float(kernel.sum())


def _effective_threads(threads: int | None) -> int:
    limit = numba.config.NUMBA_NUM_THREADS
    if threads is None:
        return limit
    threads = int(threads)
    if threads < 1:
        raise ArgumentError(f"threads must be at least 1, got {threads}")
    return min(threads, limit)


def _prepare(volume: Volume, params: TNodeParams, window: ContrastWindow | None):
    if volume.domain != Domain.UNIT:
        raise ArgumentError("despeckle expects a UNIT (log-normalized) volume")
    sizes = tuple(2 * p + 1 for p in params.patch_radii)
    if any(n < s for n, s in zip(volume.dims, sizes)):
        raise ArgumentError(
            f"volume dims {volume.dims} are smaller than the patch {sizes}")
    if window is None and params.h1 > 0:
        raise ArgumentError(
            "a ContrastWindow is needed to recover dB for SNR-adaptive h; "
            "pass one or set h1 = 0")
    vu = np.ascontiguousarray(volume.data.transpose(2, 1, 0), dtype=np.float32)
    if params.h1 > 0:
        db = np.float32(window.lower_db) + vu * np.float32(window.span_db)
        h = adaptive_h(db, params).astype(np.float32)
    else:
        h = np.full(vu.shape, params.h0, dtype=np.float32)
    invh2 = np.float32(1.0) / (h * h)
    rz, rx, ry = params.search_radii
    pz, px, py = params.patch_radii
    padded = np.pad(vu, ((ry + py,) * 2, (rx + px,) * 2, (rz + pz,) * 2),
                    mode="symmetric")
    taps = tuple(gaussian_patch_taps(r, np.float32) for r in (pz, px, py))
    return padded, invh2, taps


def _run(volume, params, window, threads, y_lo, y_hi):
    padded, invh2, (gz, gx, gy) = _prepare(volume, params, window)
    rz, rx, ry = params.search_radii
    pz, px, py = params.patch_radii
    nz, nx, _ = volume.dims
    out = np.empty((y_hi - y_lo, nx, nz), np.float32)
    eff = _effective_threads(threads)
    previous = numba.get_num_threads()
    numba.set_num_threads(eff)
    try:
        _nlm_kernel.nlm_tiles(padded, invh2, gz, gx, gy,
                              rz, rx, ry, pz, px, py, y_lo, y_hi, out)
    finally:
        numba.set_num_threads(previous)
    return out


def despeckle(volume: Volume, params: TNodeParams | None = None,
              window: ContrastWindow | None = None,
              threads: int | None = None) -> Volume:
    """Despeckle a UNIT volume; output is deterministic for any thread count."""
    if params is None:
        params = TNodeParams()
    ny = volume.dims[2]
    out = _run(volume, params, window, threads, 0, ny)
    data = np.ascontiguousarray(out.transpose(2, 1, 0))
    np.clip(data, 0.0, 1.0, out=data)
    return Volume(data, volume.pitch, Domain.UNIT)


def despeckle_partial(volume: Volume, center_y: int,
                      params: TNodeParams | None = None,
                      window: ContrastWindow | None = None,
                      threads: int | None = None) -> np.ndarray:
    """Despeckled B-scan at center_y, bitwise equal to that slice of despeckle.

    Only the tile holding center_y is computed, so a single B-scan
    costs a fraction of the full volume.
    """
    if params is None:
        params = TNodeParams()
    center_y = int(center_y)
    if not 0 <= center_y < volume.dims[2]:
        raise ArgumentError(
            f"center_y {center_y} outside [0, {volume.dims[2]})")
    out = _run(volume, params, window, threads, center_y, center_y + 1)
    bscan = np.ascontiguousarray(out[0].T)
    np.clip(bscan, 0.0, 1.0, out=bscan)
    return bscan


def warmup(threads: int | None = None) -> float:
    """Compile (or load from cache) the kernel on a toy volume.

    Returns the elapsed seconds; call once before timing anything.
    """
    start = time.perf_counter()
    tiny = Volume(np.linspace(0, 1, 3 * 3 * 3, dtype=np.float32).reshape(3, 3, 3),
                  (1.0, 1.0, 1.0), Domain.UNIT)
    despeckle(tiny, TNodeParams(search_radii=(1, 1, 1), patch_radii=(1, 1, 1)),
              ContrastWindow(-60.0, 0.0), threads=threads)
    return time.perf_counter() - start
