"""Synthetic speckle phantoms with known incoherent ground truth.

A phantom starts from an incoherent reflectivity map R.  A speckle
realization draws one circular complex Gaussian scatterer per voxel
with variance R, then convolves the field with an L2-normalized
Gaussian point spread function, so the expected intensity is R blurred
by the squared PSF.  With a zero-width PSF the intensity is exactly
exponentially distributed with mean R and unit speckle contrast.

Randomness is counter-based: B-scan y of a realization is generated
from a Philox stream keyed by (seed, y), so volumes are reproducible
sample for sample no matter how generation is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .exceptions import ArgumentError
from .volume import ComplexTomogram, ContrastWindow, Domain, Volume

PRESETS = ("uniform", "layers", "vessel", "step")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and optics of a synthetic phantom.

    Lengths are voxels.  Layer edges are fractional depths splitting
    the z axis into len(layer_levels) slabs.  The vessel is a cylinder
    along y; radius 0 degenerates to the uniform background.  The step
    splits the x axis at step_position.
    """

    preset: str = "uniform"
    dims: tuple[int, int, int] = (128, 128, 64)
    psf_sigma: tuple[float, float, float] = (1.0, 1.5, 1.5)
    pitch: tuple[float, float, float] = (4.0, 10.0, 10.0)
    seed: int = 0
    uniform_level: float = 1.0
    layer_edges: tuple[float, ...] = (0.25, 0.5, 0.75)
    layer_levels: tuple[float, ...] = (0.3, 1.0, 3.0, 0.5)
    vessel_level: float = 0.05
    vessel_radius: float | None = None
    vessel_center: tuple[float, float] | None = None
    step_position: int | None = None
    step_levels: tuple[float, float] = (1.0, 100.0)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ArgumentError(f"unknown preset {self.preset!r}, expected one of {PRESETS}")
        if len(self.dims) != 3 or min(self.dims) < 8:
            raise ArgumentError(f"phantom dims must be three sizes of at least 8, got {self.dims}")
        if len(self.psf_sigma) != 3 or any(s < 0 or not np.isfinite(s) for s in self.psf_sigma):
            raise ArgumentError(f"psf_sigma must be three non-negative values, got {self.psf_sigma}")
        if int(self.seed) < 0:
            raise ArgumentError(f"seed must be non-negative, got {self.seed}")
        levels = self._all_levels()
        if any(lv < 0 or not np.isfinite(lv) for lv in levels):
            raise ArgumentError("reflectivity levels must be finite and non-negative")
        if self.preset == "layers":
            edges = self.layer_edges
            if len(self.layer_levels) != len(edges) + 1:
                raise ArgumentError("layers preset needs len(layer_levels) == len(layer_edges) + 1")
            if list(edges) != sorted(edges) or edges[0] <= 0 or edges[-1] >= 1:
                raise ArgumentError(f"layer_edges must increase strictly inside (0, 1), got {edges}")

    def _all_levels(self):
        return (self.uniform_level, *self.layer_levels, self.vessel_level,
                *self.step_levels)


def generate_incoherent(spec: PhantomSpec) -> Volume:
    """Incoherent reflectivity map of a phantom, independent of its seed."""
    nz, nx, ny = spec.dims
    if spec.preset == "uniform":
        r = np.full(spec.dims, spec.uniform_level, dtype=np.float32)
    elif spec.preset == "layers":
        r = np.empty(spec.dims, dtype=np.float32)
        bounds = [0] + [int(round(e * nz)) for e in spec.layer_edges] + [nz]
        for level, z0, z1 in zip(spec.layer_levels, bounds[:-1], bounds[1:]):
            r[z0:z1] = level
    elif spec.preset == "vessel":
        r = np.full(spec.dims, spec.uniform_level, dtype=np.float32)
        radius = spec.vessel_radius
        if radius is None:
            radius = 0.15 * min(nz, nx)
        if radius < 0:
            raise ArgumentError(f"vessel_radius must be non-negative, got {radius}")
        cz, cx = spec.vessel_center if spec.vessel_center is not None \
            else ((nz - 1) / 2.0, (nx - 1) / 2.0)
        zz, xx = np.meshgrid(np.arange(nz), np.arange(nx), indexing="ij")
        inside = (zz - cz) ** 2 + (xx - cx) ** 2 <= radius ** 2
        r[inside, :] = spec.vessel_level
    else:  # step
        pos = spec.step_position if spec.step_position is not None else nx // 2
        if not 0 < pos < nx:
            raise ArgumentError(f"step_position must fall inside (0, {nx}), got {pos}")
        r = np.empty(spec.dims, dtype=np.float32)
        r[:, :pos, :] = spec.step_levels[0]
        r[:, pos:, :] = spec.step_levels[1]
    return Volume(r, spec.pitch, Domain.LINEAR)


def _gaussian_taps(sigma: float) -> np.ndarray:
    radius = int(4.0 * sigma + 0.5)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    return taps / taps.sum()


def _l2_normalized_blur(parts: list[np.ndarray], psf_sigma) -> None:
    """In-place separable Gaussian blur with unit squared-sum kernel."""
    scale = 1.0
    for axis, sigma in enumerate(psf_sigma):
        if sigma == 0:
            continue
        taps = _gaussian_taps(float(sigma))
        scale *= float(np.sum(taps * taps))
        for part in parts:
            correlate1d(part, taps, axis=axis, mode="reflect", output=part)
    if scale != 1.0:
        gain = np.float32(1.0 / np.sqrt(scale))
        for part in parts:
            part *= gain


def speckle_realization(incoherent: Volume, psf_sigma=(1.0, 1.5, 1.5),
                        seed: int = 0) -> tuple[ComplexTomogram, Volume]:
    """Draw one coherent speckle realization over a reflectivity map.

    Returns the complex field (single channel) and its intensity.
    The field obeys E[|field|^2] = R blurred by the squared PSF.
    """
    if incoherent.domain != Domain.LINEAR:
        raise ArgumentError("speckle_realization needs a LINEAR reflectivity map")
    seed = int(seed)
    if seed < 0:
        raise ArgumentError(f"seed must be non-negative, got {seed}")
    if len(psf_sigma) != 3 or any(s < 0 or not np.isfinite(s) for s in psf_sigma):
        raise ArgumentError(f"psf_sigma must be three non-negative values, got {psf_sigma}")
    nz, nx, ny = incoherent.dims
    amplitude = np.sqrt(incoherent.data * 0.5)
    re = np.empty((nz, nx, ny), dtype=np.float32)
    im = np.empty((nz, nx, ny), dtype=np.float32)
    for y in range(ny):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, y], dtype=np.uint64)))
        draws = rng.standard_normal((2, nz, nx))
        re[:, :, y] = amplitude[:, :, y] * draws[0]
        im[:, :, y] = amplitude[:, :, y] * draws[1]
    _l2_normalized_blur([re, im], tuple(float(s) for s in psf_sigma))
    field = re + 1j * im
    intensity = re * re + im * im
    tomogram = ComplexTomogram(field[None].astype(np.complex64), incoherent.pitch)
    return tomogram, Volume(intensity, incoherent.pitch, Domain.LINEAR)


@dataclass(frozen=True)
class PhantomPair:
    """One (raw log, despeckled unit) training example plus its window."""

    raw_log: Volume
    target_unit: Volume
    window: ContrastWindow


def make_pair_set(spec: PhantomSpec, tnode_params=None, count: int = 1,
                  seed: int = 0) -> list[PhantomPair]:
    """Generate matched raw/despeckled phantom pairs.

    Each pair is an independent speckle realization of the same
    incoherent map, converted to log dB, windowed over its full range,
    and despeckled.  Volumes this small drive smoke tests and toy
    training runs, not benchmarks.
    """
    from .nlm import TNodeParams, despeckle  # local import, nlm pulls numba

    if count < 1:
        raise ArgumentError(f"count must be at least 1, got {count}")
    if tnode_params is None:
        tnode_params = TNodeParams()
    truth = generate_incoherent(spec)
    pairs = []
    for index in range(count):
        child = np.random.SeedSequence(entropy=int(spec.seed),
                                       spawn_key=(index,)).generate_state(1)[0]
        _, intensity = speckle_realization(truth, spec.psf_sigma, int(child))
        from .volume import convert_domain
        raw_log = convert_domain(intensity, Domain.LOG_DB)
        low = float(raw_log.data.min())
        high = float(raw_log.data.max())
        window = ContrastWindow(low, high if high > low else low + 1.0)
        raw_unit = convert_domain(raw_log, Domain.UNIT, window=window)
        target = despeckle(raw_unit, tnode_params, window)
        pairs.append(PhantomPair(raw_log, target, window))
    return pairs
