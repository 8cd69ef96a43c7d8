"""Tiled numba kernel behind the non-local means engine.

Arrays arrive ordered (y, x, z) with z contiguous, mirror-padded by
search+patch per axis.  Work is split into fixed-width tiles along y
and distances are built one search offset at a time: squared
differences over a patch-extended tile, then a separable pass per
axis with the Gaussian patch taps.  Every output voxel is accumulated
in a fixed offset order with per-voxel float64 sums, and the tile
width is a constant, so results are bit-identical for any thread
count and for any [y_lo, y_hi) slice of the same volume.

exp(-x) is evaluated with a Cephes-style degree-5 polynomial after
range reduction; the 2^n scale is assembled from exponent bits in an
int32 row buffer so the loop stays branch-free and vectorizable.
Arguments are clamped to 87, keeping results inside normal float32
range; relative error is about 1e-7, far below the engine tolerance.
"""

import numpy as np
from numba import njit, prange

TILE_Y = 4

_LOG2E = np.float32(1.4426950408889634)
_LN2_HI = np.float32(0.693359375)
_LN2_LO = np.float32(-2.12194440e-4)
_HALF = np.float32(0.5)
_ONE = np.float32(1.0)
_ARG_MAX = np.float32(87.0)
_C0 = np.float32(1.9875691500e-4)
_C1 = np.float32(1.3981999507e-3)
_C2 = np.float32(8.3334519073e-3)
_C3 = np.float32(4.1665795894e-2)
_C4 = np.float32(1.6666665459e-1)
_C5 = np.float32(5.0000001201e-1)


@njit(cache=True, parallel=True, fastmath=True)
def nlm_tiles(vu, invh2, gz, gx, gy, rz, rx, ry, pz, px, py, y_lo, y_hi, out):
    """Weighted patch averaging of `vu` into `out` for y in [y_lo, y_hi).

    vu: padded volume (ny + 2Py, nx + 2Px, nz + 2Pz) float32, P = r + p.
    invh2: (ny, nx, nz) float32, per-voxel 1/h^2.
    gz/gx/gy: patch taps (2p+1,) float32, each normalized to sum 1.
    out: (y_hi - y_lo, nx, nz) float32.
    """
    pad_z = rz + pz
    pad_x = rx + px
    pad_y = ry + py
    nz = vu.shape[2] - 2 * pad_z
    nx = vu.shape[1] - 2 * pad_x
    taps_z = 2 * pz + 1
    taps_x = 2 * px + 1
    taps_y = 2 * py + 1
    n_tiles = (y_hi - y_lo + TILE_Y - 1) // TILE_Y
    for tile in prange(n_tiles):
        ty0 = y_lo + tile * TILE_Y
        ey = min(TILE_Y, y_hi - ty0)
        rows = ey + 2 * py
        diff = np.empty((rows, nx + 2 * px, nz + 2 * pz), np.float32)
        conv_z = np.empty((rows, nx + 2 * px, nz), np.float32)
        conv_x = np.empty((rows, nx, nz), np.float32)
        d2 = np.empty(nz, np.float32)
        erow = np.empty(nz, np.float32)
        ibuf = np.empty(nz, np.int32)
        fbuf = ibuf.view(np.float32)
        num = np.zeros((ey, nx, nz), np.float64)
        den = np.zeros((ey, nx, nz), np.float64)
        wmx = np.zeros((ey, nx, nz), np.float64)
        for dy in range(-ry, ry + 1):
            for dx in range(-rx, rx + 1):
                for dz in range(-rz, rz + 1):
                    if dy == 0 and dx == 0 and dz == 0:
                        continue
                    # Squared differences on the patch-extended tile.
                    # Row i sits at padded y = ty0 + ry + i, i.e. the
                    # tile start minus the patch margin.
                    for i in range(rows):
                        ya = ty0 + ry + i
                        yb = ya + dy
                        for j in range(nx + 2 * px):
                            xa = j + rx
                            xb = xa + dx
                            for k in range(nz + 2 * pz):
                                d = vu[ya, xa, k + rz] - vu[yb, xb, k + rz + dz]
                                diff[i, j, k] = d * d
                    for i in range(rows):
                        for j in range(nx + 2 * px):
                            g0 = gz[0]
                            for k in range(nz):
                                conv_z[i, j, k] = g0 * diff[i, j, k]
                            for t in range(1, taps_z):
                                g = gz[t]
                                for k in range(nz):
                                    conv_z[i, j, k] += g * diff[i, j, k + t]
                    for i in range(rows):
                        for j in range(nx):
                            g0 = gx[0]
                            for k in range(nz):
                                conv_x[i, j, k] = g0 * conv_z[i, j, k]
                            for t in range(1, taps_x):
                                g = gx[t]
                                for k in range(nz):
                                    conv_x[i, j, k] += g * conv_z[i, j + t, k]
                    for i in range(ey):
                        yu = ty0 + i
                        yb = yu + pad_y + dy
                        for j in range(nx):
                            xb = j + pad_x + dx
                            g0 = gy[0]
                            for k in range(nz):
                                d2[k] = g0 * conv_x[i, j, k]
                            for t in range(1, taps_y):
                                g = gy[t]
                                for k in range(nz):
                                    d2[k] += g * conv_x[i + t, j, k]
                            for k in range(nz):
                                arg = d2[k] * invh2[yu, j, k]
                                if arg > _ARG_MAX:
                                    arg = _ARG_MAX
                                yv = -arg
                                nf = np.float32(np.floor(yv * _LOG2E + _HALF))
                                r = (yv - nf * _LN2_HI) - nf * _LN2_LO
                                zp = _C0
                                zp = zp * r + _C1
                                zp = zp * r + _C2
                                zp = zp * r + _C3
                                zp = zp * r + _C4
                                zp = zp * r + _C5
                                erow[k] = zp * r * r + r + _ONE
                                ibuf[k] = (np.int32(nf) + np.int32(127)) << 23
                            for k in range(nz):
                                w = np.float64(erow[k] * fbuf[k])
                                nb = np.float64(vu[yb, xb, k + pad_z + dz])
                                num[i, j, k] += w * nb
                                den[i, j, k] += w
                                if w > wmx[i, j, k]:
                                    wmx[i, j, k] = w
        for i in range(ey):
            for j in range(nx):
                for k in range(nz):
                    center = np.float64(vu[ty0 + pad_y + i, j + pad_x, k + pad_z])
                    total = den[i, j, k]
                    if total > 0.0:
                        out[ty0 - y_lo + i, j, k] = np.float32(
                            (num[i, j, k] + wmx[i, j, k] * center)
                            / (total + wmx[i, j, k]))
                    else:
                        out[ty0 - y_lo + i, j, k] = vu[ty0 + pad_y + i, j + pad_x,
                                                       k + pad_z]
    return out
