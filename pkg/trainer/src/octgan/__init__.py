"""Conditional adversarial despeckling trained on exported OCT pairs.

The package consumes the pair directories written by the despeckling
toolkit's ``export-pairs`` command: a JSON manifest plus signed-domain
volume files, each pairing a block of 2n+1 adjacent raw B-scans with
the despeckled center frame. A U-Net generator learns that mapping
against a patch discriminator; a trained checkpoint then despeckles
whole volumes one sliding window at a time.
"""

__version__ = "0.1.0"

from .dataset import PairDataset
from .exceptions import (ArgumentError, FormatError, TrainerError,
                         TrainingDiverged)
from .infer import Checkpoint, infer_file, infer_volume, load_checkpoint
from .losses import (TWO_LOG_TWO, d_loss_from_logits, g_loss_from_logits,
                     losses)
from .models import (DiscriminatorSpec, GeneratorSpec, PatchDiscriminator,
                     UNetGenerator)
from .octv import (DOMAIN_NAMES, LINEAR, LOG_DB, SIGNED, UNIT, read_volume,
                   write_volume)
from .train import TrainConfig, train, train_2d_baseline

__all__ = [
    "ArgumentError",
    "Checkpoint",
    "DiscriminatorSpec",
    "DOMAIN_NAMES",
    "FormatError",
    "GeneratorSpec",
    "LINEAR",
    "LOG_DB",
    "PairDataset",
    "PatchDiscriminator",
    "SIGNED",
    "TrainConfig",
    "TrainerError",
    "TrainingDiverged",
    "TWO_LOG_TWO",
    "UNIT",
    "UNetGenerator",
    "d_loss_from_logits",
    "g_loss_from_logits",
    "infer_file",
    "infer_volume",
    "load_checkpoint",
    "losses",
    "read_volume",
    "train",
    "train_2d_baseline",
    "write_volume",
]
