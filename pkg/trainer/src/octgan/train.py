"""Alternating adversarial training over exported pairs.

Each step first updates the discriminator on a real pair and the
generator's detached output, then updates the generator against the
refreshed discriminator plus the weighted L1 term. Training stops at
the epoch cap or once the discriminator loss has stayed within a
tolerance band around its 2 log 2 equilibrium for a run of epochs.
"""
import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import torch

from .dataset import PairDataset
from .exceptions import ArgumentError, TrainingDiverged
from .losses import TWO_LOG_TWO, d_loss_from_logits, g_loss_from_logits
from .models import DiscriminatorSpec, GeneratorSpec, PatchDiscriminator, \
    UNetGenerator

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; the defaults match the reference recipe."""

    lam: float = 100.0
    learning_rate: float = 2e-4
    betas: tuple = (0.5, 0.999)
    epochs: int = 200
    batch_size: int = 1
    seed: int = 0
    stop_tolerance: float = 0.1
    stop_patience: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(
                f"batch_size must be at least 1, got {self.batch_size}")
        if self.stop_patience < 1:
            raise ArgumentError(
                f"stop_patience must be at least 1, got {self.stop_patience}")


def _check_pairing(dataset, g_spec, d_spec):
    if g_spec.channels != dataset.channels:
        raise ArgumentError(
            f"generator expects {g_spec.channels} input channels but the "
            f"pairs hold {dataset.channels}")
    if d_spec.channels != g_spec.channels + 1:
        raise ArgumentError(
            f"discriminator channels {d_spec.channels} must be the "
            f"generator's {g_spec.channels} plus the candidate")
    if d_spec.extent != g_spec.extent:
        raise ArgumentError(
            f"generator extent {g_spec.extent} and discriminator extent "
            f"{d_spec.extent} differ")


def train(manifest_path, g_spec, d_spec, cfg, out_dir, center_only=False):
    """Trains the pair and writes checkpoint.pt plus training_log.tsv.

    Returns the checkpoint dictionary. Raises TrainingDiverged if any
    loss goes non-finite; the exception carries the failing epoch.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = PairDataset(manifest_path, extent=g_spec.extent,
                          center_only=center_only)
    _check_pairing(dataset, g_spec, d_spec)

    torch.manual_seed(cfg.seed)
    generator = UNetGenerator(g_spec)
    discriminator = PatchDiscriminator(d_spec)
    g_opt = torch.optim.Adam(generator.parameters(),
                             lr=cfg.learning_rate, betas=cfg.betas)
    d_opt = torch.optim.Adam(discriminator.parameters(),
                             lr=cfg.learning_rate, betas=cfg.betas)
    shuffler = torch.Generator().manual_seed(cfg.seed)

    log = []
    near_equilibrium = 0
    # A fresh discriminator predicts 0.5 everywhere, which sits inside
    # the stop band by construction; the stop only arms once the loss
    # has left the band, so it detects a return to equilibrium rather
    # than the untrained starting point.
    stop_armed = False
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = torch.randperm(len(dataset), generator=shuffler)
        g_sum = 0.0
        d_sum = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pv = torch.stack([dataset[i][0] for i in idx.tolist()])
            target = torch.stack([dataset[i][1] for i in idx.tolist()])

            fake = generator(pv, noise=True)

            d_opt.zero_grad()
            d_loss = d_loss_from_logits(
                discriminator(pv, target), discriminator(pv, fake.detach()))
            d_loss.backward()
            d_opt.step()

            g_opt.zero_grad()
            g_loss = g_loss_from_logits(
                target, fake, discriminator(pv, fake), lam=cfg.lam)
            g_loss.backward()
            g_opt.step()

            g_val = float(g_loss.detach())
            d_val = float(d_loss.detach())
            if not (torch.isfinite(g_loss) and torch.isfinite(d_loss)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: generator {g_val}, "
                    f"discriminator {d_val}", epoch=epoch)
            g_sum += g_val
            d_sum += d_val
            batches += 1

        row = {
            "epoch": epoch,
            "g_loss": g_sum / batches,
            "d_loss": d_sum / batches,
            "seconds": time.perf_counter() - t0,
        }
        log.append(row)
        logger.info("epoch %d: g %.4f d %.4f (%.1f s)",
                    epoch, row["g_loss"], row["d_loss"], row["seconds"])

        in_band = abs(row["d_loss"] - TWO_LOG_TWO) < cfg.stop_tolerance
        if in_band and stop_armed:
            near_equilibrium += 1
            if near_equilibrium >= cfg.stop_patience:
                logger.info(
                    "discriminator loss held within %.3f of 2 log 2 for "
                    "%d epochs; stopping", cfg.stop_tolerance,
                    cfg.stop_patience)
                break
        else:
            near_equilibrium = 0
            stop_armed = stop_armed or not in_band

    checkpoint = {
        "format": CHECKPOINT_FORMAT,
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict(),
        "g_spec": dataclasses.asdict(g_spec),
        "d_spec": dataclasses.asdict(d_spec),
        "config": dataclasses.asdict(cfg),
        "n": dataset.n,
        "center_only": center_only,
        "window_db": dataset.window_db,
        "log": log,
    }
    torch.save(checkpoint, out_dir / "checkpoint.pt")
    with open(out_dir / "training_log.tsv", "w") as fh:
        fh.write("epoch\tg_loss\td_loss\tseconds\n")
        for row in log:
            fh.write(f"{row['epoch']}\t{row['g_loss']:.6f}\t"
                     f"{row['d_loss']:.6f}\t{row['seconds']:.3f}\n")
    return checkpoint


def train_2d_baseline(manifest_path, g_spec, d_spec, cfg, out_dir):
    """Single-frame control: same recipe on center B-scans only."""
    g2 = dataclasses.replace(g_spec, channels=1)
    d2 = dataclasses.replace(d_spec, channels=2)
    return train(manifest_path, g2, d2, cfg, out_dir, center_only=True)


def load_manifest_window(manifest_path):
    """Contrast window (lower_dB, upper_dB) recorded in a manifest."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    lower, upper = manifest["tnode_window_db"]
    return float(lower), float(upper)
