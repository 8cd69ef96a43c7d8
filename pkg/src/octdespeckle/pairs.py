"""Training-pair construction and export.

A pair couples a partial volume of 2n+1 raw B-scans with the
despeckled center B-scan.  Both sides go through the same dynamic
contrast window (noise floor plus jitter up to a jittered bright-VOI
mean), 16-bit quantization, one shared geometric augmentation, and a
signed [-1, 1] remap.  Every random choice is drawn from a Philox
stream keyed by (seed, pair index) and recorded, so an export tree is
byte-identical for a fixed seed no matter how many worker threads
build it, and any pair can be replayed bit for bit from its record.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates, rotate as ndrotate

from .exceptions import ArgumentError, DegenerateInputError
from .volume import ContrastWindow, Domain, Volume, convert_domain, write_volume

logger = logging.getLogger(__name__)

QUANT_MAX = 65535


@dataclass(frozen=True)
class AugmentPolicy:
    """Contrast jitter and geometric augmentation settings.

    Jitters are dB offsets added to the noise floor (lower limit) and
    to the bright-VOI mean (upper limit).  Rotation is lossless 90
    degree steps unless free_angle enables bilinear rotation by an
    arbitrary angle.  output_size None resizes crops back to the
    in-plane frame they were cut from.
    """

    lower_jitter_db: tuple[float, float] = (0.0, 10.0)
    upper_jitter_db: tuple[float, float] = (-15.0, 1.0)
    voi_extent: tuple[int, int, int] = (11, 11, 3)
    flip: bool = True
    rotate: bool = True
    crop_resize: bool = True
    free_angle: bool = False
    crop_area: tuple[float, float] = (0.5, 1.0)
    min_crop_px: int = 16
    output_size: tuple[int, int] | None = None

    def __post_init__(self):
        for name in ("lower_jitter_db", "upper_jitter_db"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ArgumentError(f"{name} must be an ordered finite range, got ({lo}, {hi})")
        extent = tuple(int(e) for e in self.voi_extent)
        if len(extent) != 3 or any(e < 1 or e % 2 == 0 for e in extent):
            raise ArgumentError(f"voi_extent must be three odd positive sizes, got {self.voi_extent}")
        object.__setattr__(self, "voi_extent", extent)
        lo, hi = self.crop_area
        if not 0.0 < lo <= hi <= 1.0:
            raise ArgumentError(f"crop_area must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")
        if self.min_crop_px < 1:
            raise ArgumentError("min_crop_px must be positive")
        if self.output_size is not None:
            size = tuple(int(s) for s in self.output_size)
            if len(size) != 2 or min(size) < 1:
                raise ArgumentError(f"output_size must be two positive sizes, got {self.output_size}")
            object.__setattr__(self, "output_size", size)

    def to_dict(self) -> dict:
        return {
            "lower_jitter_db": list(self.lower_jitter_db),
            "upper_jitter_db": list(self.upper_jitter_db),
            "voi_extent": list(self.voi_extent),
            "flip": self.flip,
            "rotate": self.rotate,
            "crop_resize": self.crop_resize,
            "free_angle": self.free_angle,
            "crop_area": list(self.crop_area),
            "min_crop_px": self.min_crop_px,
            "output_size": list(self.output_size) if self.output_size else None,
        }


@dataclass(frozen=True)
class PartialVolume:
    """2n+1 adjacent B-scans centered on the one being despeckled."""

    center_index: int
    half_width: int
    block: np.ndarray  # (nz, nx, 2n+1) float32, SIGNED domain

    def __post_init__(self):
        block = np.asarray(self.block, dtype=np.float32)
        if block.ndim != 3:
            raise ArgumentError("partial volume block must be 3-D")
        if block.shape[2] != 2 * self.half_width + 1:
            raise ArgumentError(
                f"block holds {block.shape[2]} B-scans, expected {2 * self.half_width + 1}")
        object.__setattr__(self, "block", block)

    @property
    def center_bscan(self) -> np.ndarray:
        return self.block[:, :, self.half_width]


@dataclass(frozen=True)
class AugmentRecord:
    """Everything needed to replay one pair bit for bit."""

    window: ContrastWindow
    flip_z: bool = False
    flip_x: bool = False
    rot90: int = 0
    angle_deg: float | None = None
    crop: tuple[int, int, int, int] | None = None  # z0, x0, nz, nx
    resize_to: tuple[int, int] | None = None
    noise_floor_db: float | None = None
    voi_mean_db: float | None = None
    seed_path: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        return {
            "window_db": [self.window.lower_db, self.window.upper_db],
            "flip_z": self.flip_z,
            "flip_x": self.flip_x,
            "rot90": self.rot90,
            "angle_deg": self.angle_deg,
            "crop": list(self.crop) if self.crop else None,
            "resize_to": list(self.resize_to) if self.resize_to else None,
            "noise_floor_db": self.noise_floor_db,
            "voi_mean_db": self.voi_mean_db,
            "seed_path": list(self.seed_path) if self.seed_path else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentRecord":
        return cls(
            window=ContrastWindow(*d["window_db"]),
            flip_z=bool(d["flip_z"]),
            flip_x=bool(d["flip_x"]),
            rot90=int(d["rot90"]),
            angle_deg=None if d.get("angle_deg") is None else float(d["angle_deg"]),
            crop=None if d.get("crop") is None else tuple(int(v) for v in d["crop"]),
            resize_to=None if d.get("resize_to") is None else tuple(int(v) for v in d["resize_to"]),
            noise_floor_db=d.get("noise_floor_db"),
            voi_mean_db=d.get("voi_mean_db"),
            seed_path=None if d.get("seed_path") is None else tuple(int(v) for v in d["seed_path"]),
        )


@dataclass(frozen=True)
class TrainingPair:
    """Partial-volume input, target B-scan, and the transform record."""

    input: PartialVolume
    target: np.ndarray  # (nz, nx) float32, SIGNED domain
    record: AugmentRecord

    def __post_init__(self):
        target = np.asarray(self.target, dtype=np.float32)
        if target.ndim != 2:
            raise ArgumentError("target must be a 2-D B-scan")
        if target.shape != self.input.block.shape[:2]:
            raise ArgumentError(
                f"target dims {target.shape} differ from input {self.input.block.shape[:2]}")
        object.__setattr__(self, "target", target)


def noise_floor(volume) -> float:
    """Noise floor in dB: median of the lowest decile of voxel values."""
    if isinstance(volume, Volume):
        if volume.domain != Domain.LOG_DB:
            raise ArgumentError("noise_floor expects LOG_DB data")
        data = volume.data
    else:
        data = np.asarray(volume)
    flat = data.ravel()
    if flat.size == 0:
        raise ArgumentError("noise_floor needs a non-empty volume")
    k = max(1, flat.size // 10)
    lowest = np.partition(flat.astype(np.float64), k - 1)[:k]
    return float(np.median(lowest))


def voi_mean_db(volume: Volume, center_index: int, half_width: int,
                extent=(11, 11, 3)) -> float:
    """Mean dB over the VOI centered on the partial volume's maximum.

    The VOI box is clipped at the volume faces.
    """
    if volume.domain != Domain.LOG_DB:
        raise ArgumentError("voi_mean_db expects LOG_DB data")
    nz, nx, ny = volume.dims
    y0 = center_index - half_width
    y1 = center_index + half_width + 1
    if y0 < 0 or y1 > ny:
        raise ArgumentError(
            f"partial volume [{y0}, {y1}) exceeds the slow axis of size {ny}")
    block = volume.data[:, :, y0:y1]
    zm, xm, ym = np.unravel_index(int(np.argmax(block)), block.shape)
    ym += y0
    half = [e // 2 for e in extent]
    sl = tuple(slice(max(c - h, 0), min(c + h + 1, n))
               for c, h, n in zip((zm, xm, ym), half, (nz, nx, ny)))
    return float(volume.data[sl].mean())


def draw_contrast_window(volume: Volume, center_index: int, half_width: int,
                         rng: np.random.Generator,
                         policy: AugmentPolicy | None = None,
                         noise_floor_db: float | None = None,
                         voi_db: float | None = None) -> ContrastWindow:
    """Draw the jittered per-pair contrast window.

    lower = noise floor + U[lower jitter]; upper = VOI mean + U[upper
    jitter].  The upper jitter is re-drawn while the window is not
    ordered, at most 10 times.
    """
    if policy is None:
        policy = AugmentPolicy()
    if noise_floor_db is None:
        noise_floor_db = noise_floor(volume)
    if voi_db is None:
        voi_db = voi_mean_db(volume, center_index, half_width, policy.voi_extent)
    lower = noise_floor_db + float(rng.uniform(*policy.lower_jitter_db))
    for _ in range(10):
        upper = voi_db + float(rng.uniform(*policy.upper_jitter_db))
        if upper > lower:
            return ContrastWindow(lower, upper)
    raise DegenerateInputError(
        f"could not draw an ordered window: lower {lower:.2f} dB, "
        f"VOI mean {voi_db:.2f} dB")


def quantize_uint16(values, window: ContrastWindow) -> np.ndarray:
    """Map dB values through the window onto [0, 65535] integers.

    Values at or below the lower limit give 0, at or above the upper
    give 65535; in between the mapping is linear with round-half-up.
    """
    data = values.data if isinstance(values, Volume) else np.asarray(values)
    unit = np.clip((data.astype(np.float64) - window.lower_db) / window.span_db,
                   0.0, 1.0)
    return np.floor(QUANT_MAX * unit + 0.5).astype(np.uint16)


def to_signed(quantized: np.ndarray) -> np.ndarray:
    """Remap uint16 onto SIGNED floats via 2 (q / 65535) - 1."""
    return (np.asarray(quantized, dtype=np.float32) * np.float32(2.0 / QUANT_MAX)
            - np.float32(1.0))


def _resize_plane(plane: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    nz, nx = plane.shape
    rows = np.linspace(0.0, nz - 1.0, out_shape[0])
    cols = np.linspace(0.0, nx - 1.0, out_shape[1])
    grid = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(plane.astype(np.float32), grid, order=1,
                           mode="nearest").astype(np.float32)


def _transform_block(block: np.ndarray, record: AugmentRecord) -> np.ndarray:
    out = block
    if record.flip_z:
        out = np.flip(out, axis=0)
    if record.flip_x:
        out = np.flip(out, axis=1)
    if record.rot90 % 4:
        out = np.rot90(out, record.rot90 % 4, axes=(0, 1))
    if record.angle_deg is not None:
        rotated = np.empty_like(out, dtype=np.float32)
        for y in range(out.shape[2]):
            rotated[:, :, y] = ndrotate(out[:, :, y].astype(np.float32),
                                        record.angle_deg, reshape=False,
                                        order=1, mode="nearest")
        out = rotated
    if record.crop is not None:
        z0, x0, cz, cx = record.crop
        if (z0 < 0 or x0 < 0 or z0 + cz > out.shape[0] or x0 + cx > out.shape[1]):
            raise ArgumentError(f"crop {record.crop} exceeds frame {out.shape[:2]}")
        out = out[z0:z0 + cz, x0:x0 + cx]
    if record.resize_to is not None and record.resize_to != out.shape[:2]:
        resized = np.empty((*record.resize_to, out.shape[2]), dtype=np.float32)
        for y in range(out.shape[2]):
            resized[:, :, y] = _resize_plane(out[:, :, y], record.resize_to)
        out = resized
    return np.ascontiguousarray(out, dtype=np.float32)


def apply_record(pair: TrainingPair, record: AugmentRecord) -> TrainingPair:
    """Replay a recorded transform; same record, bit-identical output."""
    stacked = np.concatenate([pair.input.block, pair.target[:, :, None]], axis=2)
    moved = _transform_block(stacked, record)
    block = np.clip(moved[:, :, :-1], -1.0, 1.0)
    target = np.clip(moved[:, :, -1], -1.0, 1.0)
    return TrainingPair(
        PartialVolume(pair.input.center_index, pair.input.half_width, block),
        target, record)


def augment(pair: TrainingPair, policy: AugmentPolicy,
            rng: np.random.Generator) -> TrainingPair:
    """Draw one geometric transform and apply it to input and target alike.

    Draw order is fixed (flips, rotation, crop) so a seeded generator
    reproduces the pair exactly; the drawn transform lands in the
    returned record for replay.
    """
    frame = pair.input.block.shape[:2]
    flip_z = flip_x = False
    rot = 0
    angle = None
    crop = None
    resize_to = None
    if policy.flip:
        flip_z = bool(rng.integers(0, 2))
        flip_x = bool(rng.integers(0, 2))
    if policy.rotate:
        if policy.free_angle:
            angle = float(rng.uniform(0.0, 360.0))
        else:
            rot = int(rng.integers(0, 4))
    if rot % 2:
        frame = (frame[1], frame[0])
    if policy.crop_resize:
        area = float(rng.uniform(*policy.crop_area))
        scale = float(np.sqrt(area))
        cz = max(int(round(frame[0] * scale)), 1)
        cx = max(int(round(frame[1] * scale)), 1)
        if min(cz, cx) < policy.min_crop_px:
            raise ArgumentError(
                f"crop {cz}x{cx} falls below {policy.min_crop_px} px per side; "
                "use a larger frame or a tighter crop_area range")
        z0 = int(rng.integers(0, frame[0] - cz + 1))
        x0 = int(rng.integers(0, frame[1] - cx + 1))
        crop = (z0, x0, cz, cx)
        resize_to = policy.output_size if policy.output_size else frame
    elif policy.output_size and policy.output_size != frame:
        resize_to = policy.output_size
    record = AugmentRecord(
        window=pair.record.window, flip_z=flip_z, flip_x=flip_x, rot90=rot,
        angle_deg=angle, crop=crop, resize_to=resize_to,
        noise_floor_db=pair.record.noise_floor_db,
        voi_mean_db=pair.record.voi_mean_db,
        seed_path=pair.record.seed_path)
    return apply_record(pair, record)


def _pair_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _center_rng(seed: int) -> np.random.Generator:
    key = np.array([seed, np.iinfo(np.uint64).max], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _build_pair(raw: Volume, target_db: np.ndarray, center: int, n: int,
                seed: int, index: int, policy: AugmentPolicy,
                floor_db: float) -> TrainingPair:
    rng = _pair_rng(seed, index)
    voi = voi_mean_db(raw, center, n, policy.voi_extent)
    window = draw_contrast_window(raw, center, n, rng, policy,
                                  noise_floor_db=floor_db, voi_db=voi)
    block_db = raw.data[:, :, center - n:center + n + 1]
    q_in = quantize_uint16(block_db, window)
    q_tg = quantize_uint16(target_db, window)
    base = TrainingPair(
        PartialVolume(center, n, to_signed(q_in)),
        to_signed(q_tg),
        AugmentRecord(window=window, noise_floor_db=floor_db, voi_mean_db=voi,
                      seed_path=(seed, index)))
    return augment(base, policy, rng)


def _effective_pitch(raw: Volume, record: AugmentRecord) -> tuple[float, float, float]:
    dz, dx, dy = raw.pitch
    if record.rot90 % 2:
        dz, dx = dx, dz
    if record.crop is not None and record.resize_to is not None:
        _, _, cz, cx = record.crop
        dz *= cz / record.resize_to[0]
        dx *= cx / record.resize_to[1]
    return (dz, dx, dy)


def export_pairs(raw: Volume, despeckled: Volume | None, window: ContrastWindow,
                 n: int = 8, count: int = 1, seed: int = 0,
                 out_dir="pairs", policy: AugmentPolicy | None = None,
                 tnode_params=None, threads: int = 1,
                 noise_floor_db: float | None = None) -> dict:
    """Export `count` training pairs and a manifest to `out_dir`.

    `window` is the normalization window of the despeckled volume.
    Pass despeckled=None to compute each target on demand from the raw
    volume with `tnode_params` (single B-scans through the partial
    despeckling path).  Center indices are drawn without replacement
    and re-used (logged) once exhausted.  The tree is byte-identical
    for a fixed seed regardless of `threads`.
    """
    from .nlm import TNodeParams, despeckle_partial

    if raw.domain != Domain.LOG_DB:
        raise ArgumentError("export_pairs needs the raw volume in LOG_DB")
    n = int(n)
    count = int(count)
    seed = int(seed)
    if n < 0:
        raise ArgumentError(f"n must be non-negative, got {n}")
    if count < 1:
        raise ArgumentError(f"count must be at least 1, got {count}")
    if seed < 0:
        raise ArgumentError(f"seed must be non-negative, got {seed}")
    nz, nx, ny = raw.dims
    if ny < 2 * n + 1:
        raise ArgumentError(f"volume has {ny} B-scans, fewer than 2n+1 = {2 * n + 1}")
    if despeckled is not None:
        if despeckled.domain != Domain.UNIT:
            raise ArgumentError("despeckled volume must be in the UNIT domain")
        if despeckled.dims != raw.dims:
            raise ArgumentError(
                f"despeckled dims {despeckled.dims} differ from raw {raw.dims}")
    elif tnode_params is None:
        tnode_params = TNodeParams()
    if policy is None:
        policy = AugmentPolicy()
    if threads < 1:
        raise ArgumentError(f"threads must be at least 1, got {threads}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    floor_db = noise_floor(raw) if noise_floor_db is None else float(noise_floor_db)
    candidates = np.arange(n, ny - n)
    order = _center_rng(seed).permutation(candidates)
    if count > order.size:
        logger.info("drawing %d pairs from %d distinct centers; centers repeat",
                    count, order.size)
    centers = [int(order[i % order.size]) for i in range(count)]

    # Targets are despeckled up front on the calling thread; the pool
    # below only augments, quantizes and writes, so the filter kernel
    # is never launched from two threads at once.
    target_units: dict[int, np.ndarray] = {}
    if despeckled is None:
        raw_unit = convert_domain(raw, Domain.UNIT, window=window)
        for center in sorted(set(centers)):
            target_units[center] = despeckle_partial(
                raw_unit, center, tnode_params, window).astype(np.float64)

    def job(index: int) -> dict:
        center = centers[index]
        if despeckled is not None:
            target_unit = despeckled.data[:, :, center].astype(np.float64)
        else:
            target_unit = target_units[center]
        target_db = window.lower_db + target_unit * window.span_db
        pair = _build_pair(raw, target_db, center, n, seed, index, policy, floor_db)
        in_name = f"pair_{index:06d}_input.octv"
        tg_name = f"pair_{index:06d}_target.octv"
        pitch = _effective_pitch(raw, pair.record)
        write_volume(Volume(pair.input.block, pitch, Domain.SIGNED),
                     out_dir / in_name)
        write_volume(Volume(pair.target[:, :, None], pitch, Domain.SIGNED),
                     out_dir / tg_name)
        entry = {
            "index": index,
            "input": in_name,
            "target": tg_name,
            "center_index": center,
            "block_bscans": 2 * n + 1,
            "dims": list(pair.target.shape),
            "transform": pair.record.to_dict(),
        }
        return entry

    if threads == 1:
        entries = [job(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(job, range(count)))

    manifest = {
        "version": 1,
        "n": n,
        "seed": seed,
        "count": count,
        "volume_dims": [nz, nx, ny],
        "noise_floor_db": floor_db,
        "tnode_window_db": [window.lower_db, window.upper_db],
        "policy": policy.to_dict(),
        "entries": entries,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
