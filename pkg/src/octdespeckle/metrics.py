"""Image quality metrics on volumes.

PSNR follows the 16-bit full-scale convention (peak 65535).  CNR and
speckle contrast work on rectangular ROIs with population statistics.
SSIM is the volumetric form with an 11x11x11 Gaussian window of sigma
1.5; with the usual C3 = C2/2 and unit exponents the three-component
product collapses to the familiar two-term expression, which is what
is computed.  MS-SSIM uses the standard five-scale weights, dyadic
mean-pool downsampling, and luminance from the coarsest scale only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.ndimage import correlate1d

from .exceptions import ArgumentError, DegenerateInputError
from .volume import Domain, Volume

PSNR_PEAK = 65535.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class Roi:
    """Axis-aligned box: origin (z, x, y) and size (nz, nx, ny) in voxels."""

    origin: tuple[int, int, int]
    size: tuple[int, int, int]

    def __post_init__(self):
        if len(self.origin) != 3 or len(self.size) != 3:
            raise ArgumentError("ROI needs a 3-D origin and size")
        origin = tuple(int(v) for v in self.origin)
        size = tuple(int(v) for v in self.size)
        if any(v < 0 for v in origin) or any(v < 1 for v in size):
            raise ArgumentError(f"ROI origin must be non-negative and size positive, "
                                f"got {origin}, {size}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "size", size)

    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(o, o + s) for o, s in zip(self.origin, self.size))

    def check_inside(self, dims: tuple[int, int, int]) -> None:
        for axis, (o, s, n) in enumerate(zip(self.origin, self.size, dims)):
            if o + s > n:
                raise ArgumentError(
                    f"ROI exceeds volume along axis {axis}: {o}+{s} > {n}")

    def overlaps(self, other: "Roi") -> bool:
        return all(o1 < o2 + s2 and o2 < o1 + s1
                   for o1, s1, o2, s2 in zip(self.origin, self.size,
                                             other.origin, other.size))


def _as_array(v, expected_domain: Domain | None = None, what: str = "input"):
    if isinstance(v, Volume):
        if expected_domain is not None and v.domain != expected_domain:
            raise ArgumentError(
                f"{what} must be in the {expected_domain.name} domain, got {v.domain.name}")
        return v.data
    return np.asarray(v)


def psnr(ref, test) -> float:
    """Peak signal-to-noise ratio in dB against a 65535 full scale.

    Inputs are arrays or volumes of matching shape with samples inside
    [0, 65535].  Identical inputs give +inf.
    """
    a = np.asarray(_as_array(ref), dtype=np.float64)
    b = np.asarray(_as_array(test), dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    for name, arr in (("ref", a), ("test", b)):
        if arr.size == 0:
            raise ArgumentError(f"{name} is empty")
        if not np.isfinite(arr).all():
            raise ArgumentError(f"{name} holds NaN or infinite samples")
        if float(arr.min()) < 0.0 or float(arr.max()) > PSNR_PEAK:
            raise ArgumentError(f"{name} samples must lie in [0, {PSNR_PEAK:.0f}]")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(PSNR_PEAK * PSNR_PEAK / mse)


def cnr(volume, roi_a: Roi, roi_b: Roi) -> float:
    """Contrast-to-noise ratio (|mu_b| - |mu_a|) / sqrt(var_a + var_b).

    Contrast of the second ROI over the first on log-scaled data,
    population variances.  The two ROIs must lie inside the volume and
    must not overlap.
    """
    data = np.asarray(_as_array(volume, Domain.LOG_DB, "cnr volume"), dtype=np.float64)
    if data.ndim != 3:
        raise ArgumentError("cnr expects a 3-D volume")
    roi_a.check_inside(data.shape)
    roi_b.check_inside(data.shape)
    if roi_a.overlaps(roi_b):
        raise ArgumentError("cnr ROIs overlap")
    a = data[roi_a.slices()]
    b = data[roi_b.slices()]
    var_a = float(a.var())
    var_b = float(b.var())
    if var_a == 0.0 and var_b == 0.0:
        raise DegenerateInputError("both ROIs are constant, CNR is undefined")
    return (abs(float(b.mean())) - abs(float(a.mean()))) / float(np.sqrt(var_a + var_b))


def speckle_contrast(volume, roi: Roi | None = None) -> float:
    """Standard deviation over mean of linear intensity, population form."""
    data = np.asarray(_as_array(volume, Domain.LINEAR, "speckle_contrast volume"),
                      dtype=np.float64)
    if roi is not None:
        if data.ndim != 3:
            raise ArgumentError("an ROI needs a 3-D volume")
        roi.check_inside(data.shape)
        data = data[roi.slices()]
    mean = float(data.mean())
    if mean <= 0.0:
        raise DegenerateInputError("mean intensity is not positive, contrast is undefined")
    return float(data.std()) / mean


def _ssim_taps() -> np.ndarray:
    radius = _SSIM_WINDOW // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (offsets / _SSIM_SIGMA) ** 2)
    return taps / taps.sum()


def _windowed_mean(arr: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = arr
    for axis in range(arr.ndim):
        out = correlate1d(out, taps, axis=axis, mode="reflect")
    return out


def _resolve_data_range(ref, data_range) -> float:
    if data_range is not None:
        data_range = float(data_range)
        if not (np.isfinite(data_range) and data_range > 0):
            raise ArgumentError(f"data_range must be positive, got {data_range}")
        return data_range
    if isinstance(ref, Volume):
        if ref.domain == Domain.UNIT:
            return 1.0
        if ref.domain == Domain.SIGNED:
            return 2.0
        arr = ref.data
    else:
        arr = np.asarray(ref)
    spread = float(arr.max()) - float(arr.min())
    if spread <= 0:
        raise ArgumentError("cannot infer data_range from a constant reference; pass one")
    return spread


def _check_pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(ref, Volume) and isinstance(test, Volume) and ref.domain != test.domain:
        raise ArgumentError(f"domain mismatch {ref.domain.name} vs {test.domain.name}")
    a = np.asarray(_as_array(ref), dtype=np.float64)
    b = np.asarray(_as_array(test), dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3:
        raise ArgumentError("ssim metrics expect 3-D volumes")
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _ssim_maps(a: np.ndarray, b: np.ndarray, data_range: float
               ) -> tuple[np.ndarray, np.ndarray]:
    """Luminance and contrast-structure maps of the two-term SSIM."""
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    taps = _ssim_taps()
    mu_a = _windowed_mean(a, taps)
    mu_b = _windowed_mean(b, taps)
    var_a = _windowed_mean(a * a, taps) - mu_a * mu_a
    var_b = _windowed_mean(b * b, taps) - mu_b * mu_b
    cov = _windowed_mean(a * b, taps) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def ssim3d(ref, test, data_range: float | None = None) -> tuple[float, np.ndarray]:
    """Volumetric SSIM: mean score and the per-voxel local map."""
    a, b = _check_pair(ref, test)
    rng = _resolve_data_range(ref, data_range)
    lum, cs = _ssim_maps(a, b, rng)
    local = lum * cs
    return float(local.mean()), local


def _downsample2(arr: np.ndarray) -> np.ndarray:
    trimmed = arr[:arr.shape[0] & ~1, :arr.shape[1] & ~1, :arr.shape[2] & ~1]
    nz, nx, ny = trimmed.shape
    return trimmed.reshape(nz // 2, 2, nx // 2, 2, ny // 2, 2).mean(axis=(1, 3, 5))


def msssim3d(ref, test, scales: int = 5, data_range: float | None = None) -> float:
    """Multi-scale volumetric SSIM.

    Contrast-structure means are collected per scale with 2x2x2 mean
    pooling in between; luminance enters at the coarsest scale only.
    Scales count down automatically (with a warning) when a dimension
    is too small for the 11-tap window after halving, and the standard
    weights are renormalized over the scales that remain.
    """
    scales = int(scales)
    if not 1 <= scales <= len(MSSSIM_WEIGHTS):
        raise ArgumentError(f"scales must be in [1, {len(MSSSIM_WEIGHTS)}], got {scales}")
    a, b = _check_pair(ref, test)
    rng = _resolve_data_range(ref, data_range)
    usable = 1
    for s in range(2, scales + 1):
        if min(a.shape) // (2 ** (s - 1)) >= _SSIM_WINDOW:
            usable = s
    if usable < scales:
        warnings.warn(
            f"volume of dims {a.shape} supports {usable} of {scales} requested "
            "scales; reducing", RuntimeWarning, stacklevel=2)
        scales = usable
    weights = np.asarray(MSSSIM_WEIGHTS[:scales], dtype=np.float64)
    weights = weights / weights.sum()
    score = 1.0
    for level in range(scales):
        lum, cs = _ssim_maps(a, b, rng)
        if level == scales - 1:
            lum_mean = max(float(lum.mean()), 0.0)
            cs_mean = max(float(cs.mean()), 0.0)
            score *= (lum_mean * cs_mean) ** weights[level]
        else:
            score *= max(float(cs.mean()), 0.0) ** weights[level]
            a = _downsample2(a)
            b = _downsample2(b)
    return float(score)


def ssim_ttest(map_a, map_b) -> tuple[float, float]:
    """Two-sample t-test (equal variance) between two SSIM local maps."""
    a = np.asarray(map_a, dtype=np.float64).ravel()
    b = np.asarray(map_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ArgumentError("t-test needs at least two samples per map")
    result = stats.ttest_ind(a, b, equal_var=True)
    return float(result.statistic), float(result.pvalue)
