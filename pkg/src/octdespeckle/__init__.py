"""Volumetric OCT speckle suppression toolkit.

Non-local-means despeckling of tomogram volumes with SNR-adaptive
filtering strength, sub-pixel B-scan registration, synthetic speckle
phantoms, volumetric image-quality metrics, and a training-pair
exporter, all sharing one binary volume container.
"""

__version__ = "0.1.0"

from .exceptions import (ArgumentError, DataError, DegenerateInputError,
                         FormatError, ToolkitError)
from .volume import (ComplexTomogram, ContrastWindow, Domain, Volume,
                     convert_domain, read_octv, read_tomogram, read_volume,
                     write_tomogram, write_volume)
from .preprocess import (ShiftEstimate, apply_shift, combine_polarization,
                         estimate_shift, lowpass, register_volume,
                         stabilize_phase)
from .nlm import (TNodeParams, adaptive_h, despeckle, despeckle_partial,
                  gaussian_patch_taps, patch_distance, warmup)
from .phantom import (PhantomPair, PhantomSpec, generate_incoherent,
                      make_pair_set, speckle_realization)
from .metrics import (Roi, cnr, msssim3d, psnr, speckle_contrast, ssim3d,
                      ssim_ttest)
from .pairs import (AugmentPolicy, AugmentRecord, PartialVolume, TrainingPair,
                    apply_record, augment, draw_contrast_window, export_pairs,
                    noise_floor, quantize_uint16, to_signed, voi_mean_db)
from .estimators import ContrastNormalizer, SubpixelRegistrar, TNodeDespeckler

__all__ = [
    "ArgumentError", "DataError", "DegenerateInputError", "FormatError",
    "ToolkitError",
    "ComplexTomogram", "ContrastWindow", "Domain", "Volume",
    "convert_domain", "read_octv", "read_tomogram", "read_volume",
    "write_tomogram", "write_volume",
    "ShiftEstimate", "apply_shift", "combine_polarization", "estimate_shift",
    "lowpass", "register_volume", "stabilize_phase",
    "TNodeParams", "adaptive_h", "despeckle", "despeckle_partial",
    "gaussian_patch_taps", "patch_distance", "warmup",
    "PhantomPair", "PhantomSpec", "generate_incoherent", "make_pair_set",
    "speckle_realization",
    "Roi", "cnr", "msssim3d", "psnr", "speckle_contrast", "ssim3d",
    "ssim_ttest",
    "AugmentPolicy", "AugmentRecord", "PartialVolume", "TrainingPair",
    "apply_record", "augment", "draw_contrast_window", "export_pairs",
    "noise_floor", "quantize_uint16", "to_signed", "voi_mean_db",
    "ContrastNormalizer", "SubpixelRegistrar", "TNodeDespeckler",
    "__version__",
]
