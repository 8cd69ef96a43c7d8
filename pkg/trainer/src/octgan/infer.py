"""Volume inference with a trained generator.

The generator consumes 2n+1 adjacent B-scans and emits the despeckled
center frame, so a volume is processed by sliding that window along
the slow axis. Edge positions reuse mirror-replicated neighbors; a
single-B-scan volume therefore sees a block of 2n+1 copies of itself.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import ArgumentError, FormatError
from .models import DiscriminatorSpec, GeneratorSpec, PatchDiscriminator, \
    UNetGenerator
from .octv import SIGNED, read_volume, write_volume
from .train import CHECKPOINT_FORMAT, TrainConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Checkpoint:
    """A reloaded training state, modules rebuilt and weights applied."""

    generator: UNetGenerator
    discriminator: PatchDiscriminator
    g_spec: GeneratorSpec
    d_spec: DiscriminatorSpec
    config: TrainConfig
    n: int
    center_only: bool
    window_db: tuple
    log: tuple


def load_checkpoint(path):
    """Rebuilds the module pair saved by train()."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint: {exc}") from exc
    except Exception as exc:
        raise FormatError(f"checkpoint is not loadable: {exc}") from exc
    if not isinstance(payload, dict) or \
            payload.get("format") != CHECKPOINT_FORMAT:
        raise FormatError("file is not a format-1 training checkpoint")
    try:
        g_spec = GeneratorSpec(**payload["g_spec"])
        d_spec = DiscriminatorSpec(**payload["d_spec"])
        cfg = dict(payload["config"])
        cfg["betas"] = tuple(cfg["betas"])
        config = TrainConfig(**cfg)
        generator = UNetGenerator(g_spec)
        generator.load_state_dict(payload["generator"])
        discriminator = PatchDiscriminator(d_spec)
        discriminator.load_state_dict(payload["discriminator"])
    except KeyError as exc:
        raise FormatError(f"checkpoint is missing field {exc}") from exc
    generator.eval()
    discriminator.eval()
    return Checkpoint(
        generator=generator,
        discriminator=discriminator,
        g_spec=g_spec,
        d_spec=d_spec,
        config=config,
        n=int(payload.get("n", (g_spec.channels - 1) // 2)),
        center_only=bool(payload.get("center_only", False)),
        window_db=tuple(payload.get("window_db", ())),
        log=tuple(payload.get("log", ())),
    )


def infer_volume(generator, data, noise=True):
    """Despeckles a (nz, nx, ny) signed-domain array B-scan by B-scan.

    noise keeps the generator's dropout sampling active, matching the
    training-time behavior; pass False for a deterministic mapping.
    """
    if data.ndim != 3:
        raise ArgumentError(f"expected a 3-d volume, got shape {data.shape}")
    win = generator.spec.channels
    if win % 2 == 0:
        raise ArgumentError(
            f"generator window must hold an odd B-scan count, got {win}")
    half = win // 2
    nz, nx, ny = data.shape
    index = np.pad(np.arange(ny), (half, half), mode="symmetric") \
        if half else np.arange(ny)
    out = np.empty((nz, nx, ny), dtype=np.float32)
    with torch.no_grad():
        for y in range(ny):
            t0 = time.perf_counter()
            block = np.ascontiguousarray(
                data[:, :, index[y:y + win]].transpose(2, 0, 1))
            x = torch.from_numpy(block).unsqueeze(0)
            pred = generator(x, noise=noise)
            out[:, :, y] = pred[0, 0].numpy()
            logger.info("B-scan %d/%d in %.3f s",
                        y + 1, ny, time.perf_counter() - t0)
    return out


def infer_file(checkpoint, input_path, output_path, noise=True):
    """Runs a signed-domain volume file through a loaded checkpoint."""
    data, domain, pitch = read_volume(input_path)
    if domain != SIGNED:
        raise ArgumentError(
            "inference input must be in the signed domain; convert the "
            "volume with its training contrast window first")
    if max(data.shape[0], data.shape[1]) > checkpoint.g_spec.extent:
        raise ArgumentError(
            f"B-scans of {data.shape[0]}x{data.shape[1]} px exceed the "
            f"generator extent {checkpoint.g_spec.extent}")
    out = infer_volume(checkpoint.generator, data, noise=noise)
    write_volume(output_path, out, domain=SIGNED, pitch=pitch)
    return out
