"""Training pairs loaded from an export manifest.

The despeckling toolkit's ``export-pairs`` command writes a directory
of signed-domain volume pairs plus ``manifest.json``. Each input block
holds the 2n+1 B-scans around a center index, the target holds the
despeckled center B-scan. This module turns those files into (C, H, W)
float32 tensors ready for the conditional GAN.
"""
import json
from pathlib import Path

import numpy as np
import torch

from .exceptions import FormatError
from .octv import SIGNED, read_volume


def _require(manifest, key, kind):
    if key not in manifest:
        raise FormatError(f"manifest is missing the '{key}' field")
    value = manifest[key]
    if not isinstance(value, kind):
        raise FormatError(f"manifest field '{key}' has the wrong type")
    return value


class PairDataset(torch.utils.data.Dataset):
    """Eagerly loaded (partial volume, target B-scan) pairs.

    Parameters
    ----------
    manifest_path : str or Path
        The ``manifest.json`` written by the pair exporter.
    extent : int, optional
        Zero-pad every tensor at the bottom and right edges to this
        square extent. Pairs larger than the extent are rejected.
    center_only : bool
        Keep only the center B-scan of each input block, for the
        single-frame baseline.

    Attributes
    ----------
    records : list of dict
        The manifest entries, in manifest order.
    window_db : tuple of float
        Contrast window the exporter used, (lower_dB, upper_dB).
    n : int
        Half-width of the exported blocks.
    channels : int
        B-scans per input tensor after any center_only reduction.
    """

    def __init__(self, manifest_path, extent=None, center_only=False):
        manifest_path = Path(manifest_path)
        try:
            with open(manifest_path) as fh:
                manifest = json.load(fh)
        except OSError as exc:
            raise FormatError(f"cannot read manifest: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(manifest, dict):
            raise FormatError("manifest must be a JSON object")

        self.n = _require(manifest, "n", int)
        window = _require(manifest, "tnode_window_db", list)
        if len(window) != 2:
            raise FormatError("manifest field 'tnode_window_db' must hold "
                              "[lower_dB, upper_dB]")
        self.window_db = (float(window[0]), float(window[1]))
        self.records = _require(manifest, "entries", list)
        if not self.records:
            raise FormatError("manifest lists no pairs")

        self.center_only = bool(center_only)
        self.channels = 1 if center_only else 2 * self.n + 1
        self.extent = None if extent is None else int(extent)

        root = manifest_path.parent
        self._inputs = []
        self._targets = []
        for entry in self.records:
            if not isinstance(entry, dict) or \
                    "input" not in entry or "target" not in entry:
                raise FormatError("manifest entry lacks input/target paths")
            block = self._load(root / entry["input"], 2 * self.n + 1)
            target = self._load(root / entry["target"], 1)
            if block.shape[-2:] != target.shape[-2:]:
                raise FormatError(
                    f"pair {entry.get('index')}: input {block.shape[-2:]} and "
                    f"target {target.shape[-2:]} extents differ")
            if center_only:
                block = block[self.n:self.n + 1]
            self._inputs.append(self._pad(block))
            self._targets.append(self._pad(target))

    def _load(self, path, expected_bscans):
        try:
            data, domain, _ = read_volume(path)
        except OSError as exc:
            raise FormatError(f"cannot read pair file {path}: {exc}") from exc
        if domain != SIGNED:
            raise FormatError(f"{path} is not in the signed domain")
        if data.shape[2] != expected_bscans:
            raise FormatError(
                f"{path} holds {data.shape[2]} B-scans, expected "
                f"{expected_bscans}")
        # (nz, nx, ny) volume -> (ny, nz, nx) channel-first tensor.
        return torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1)))

    def _pad(self, x):
        if self.extent is None:
            return x
        h, w = x.shape[-2:]
        if h > self.extent or w > self.extent:
            raise FormatError(
                f"pair extent {h}x{w} exceeds the requested "
                f"{self.extent}x{self.extent}")
        return torch.nn.functional.pad(
            x, (0, self.extent - w, 0, self.extent - h))

    def __len__(self):
        return len(self._inputs)

    def __getitem__(self, index):
        return self._inputs[index], self._targets[index]
