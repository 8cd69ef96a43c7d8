"""Adversarial and reconstruction objectives.

The discriminator plays a binary cross-entropy game against real and
generated patches; the generator answers with the same game plus an
L1 fidelity term weighted by ``lam``. At the indifference point where
the discriminator outputs probability one half everywhere, its loss
sits at 2 log 2, which the training loop uses as the equilibrium mark.
"""
import math

import torch
from torch.nn import functional as F

TWO_LOG_TWO = 2.0 * math.log(2.0)

# Probabilities straight from a sigmoid can reach exact 0 or 1 in
# float32; clamp keeps log() finite without moving the optimum.  The
# bound must survive float32 rounding of 1 - eps, so it sits at 1e-7.
_EPS = 1e-7


def _bce(p, label):
    p = p.clamp(_EPS, 1.0 - _EPS)
    if label:
        return -torch.log(p).mean()
    return -torch.log1p(-p).mean()


def losses(target, generated, d_real, d_fake, lam=100.0):
    """Generator and discriminator losses from patch probabilities.

    Parameters
    ----------
    target, generated : torch.Tensor
        Clean B-scan and its generated counterpart, same shape.
    d_real, d_fake : torch.Tensor
        Discriminator probabilities for the real and generated pair.
    lam : float
        Weight of the L1 reconstruction term in the generator loss.

    Returns
    -------
    (g_loss, d_loss) : tuple of scalar tensors
    """
    if target.shape != generated.shape:
        raise ValueError(
            f"target {tuple(target.shape)} and generated "
            f"{tuple(generated.shape)} shapes differ")
    d_loss = _bce(d_real, 1) + _bce(d_fake, 0)
    g_loss = _bce(d_fake, 1) + lam * (target - generated).abs().mean()
    return g_loss, d_loss


def d_loss_from_logits(real_logits, fake_logits):
    """Discriminator loss on raw logits; numerically safer for training."""
    return (
        F.binary_cross_entropy_with_logits(
            real_logits, torch.ones_like(real_logits))
        + F.binary_cross_entropy_with_logits(
            fake_logits, torch.zeros_like(fake_logits)))


def g_loss_from_logits(target, generated, fake_logits, lam=100.0):
    """Generator loss on raw logits; numerically safer for training."""
    adv = F.binary_cross_entropy_with_logits(
        fake_logits, torch.ones_like(fake_logits))
    return adv + lam * F.l1_loss(generated, target)
