"""Estimator-style wrappers around the volume pipeline.

These follow the usual fit/transform conventions so volumes can move
through composable pipelines: constructors only store parameters,
fitted state lands in trailing-underscore attributes, and get_params /
set_params come from the standard base class.  X is a 3-D (nz, nx, ny)
volume, either a plain array or a Volume; outputs match the input
kind.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ArgumentError
from .nlm import TNodeParams, despeckle
from .preprocess import apply_shift, estimate_shift
from .validation import as_volume_array, as_window, rewrap_like
from .volume import ContrastWindow, Domain, Volume


def _db_to_unit(data: np.ndarray, window: ContrastWindow) -> np.ndarray:
    # Same float64 arithmetic as convert_domain, so estimator output is
    # bit-identical to the functional pipeline.
    unit = np.clip((data.astype(np.float64) - window.lower_db)
                   / window.span_db, 0.0, 1.0).astype(np.float32)
    np.clip(unit, 0.0, 1.0, out=unit)
    return unit


def _unit_to_db(data: np.ndarray, window: ContrastWindow) -> np.ndarray:
    return (window.lower_db
            + data.astype(np.float64) * window.span_db).astype(np.float32)


class ContrastNormalizer(BaseEstimator, TransformerMixin):
    """Map log-dB volumes onto [0, 1] through a fitted contrast window.

    mode "range" fits the window to the data's full [min, max]; mode
    "floor" sets the lower limit to the noise floor (median of the
    lowest decile) instead.  Explicit lower_db / upper_db override the
    fitted values.
    """

    def __init__(self, mode: str = "range", lower_db: float | None = None,
                 upper_db: float | None = None):
        self.mode = mode
        self.lower_db = lower_db
        self.upper_db = upper_db

    def fit(self, X, y=None):
        from .pairs import noise_floor

        if self.mode not in ("range", "floor"):
            raise ArgumentError(f"mode must be 'range' or 'floor', got {self.mode!r}")
        data = as_volume_array(X, "X")
        lower = self.lower_db
        upper = self.upper_db
        if lower is None:
            lower = noise_floor(np.asarray(data)) if self.mode == "floor" \
                else float(data.min())
        if upper is None:
            upper = float(data.max())
        if upper <= lower:
            upper = lower + 1.0
        self.window_ = ContrastWindow(float(lower), float(upper))
        return self

    def transform(self, X):
        check_is_fitted(self, "window_")
        data = as_volume_array(X, "X")
        unit = _db_to_unit(data, self.window_)
        return rewrap_like(X, unit, Domain.UNIT)

    def inverse_transform(self, X):
        check_is_fitted(self, "window_")
        data = as_volume_array(X, "X")
        db = _unit_to_db(data, self.window_)
        return rewrap_like(X, db, Domain.LOG_DB)


class TNodeDespeckler(BaseEstimator, TransformerMixin):
    """Non-local-means despeckling as a transformer on log-dB volumes.

    fit() records the contrast window (from `window` or the data's
    full range); transform() normalizes, despeckles, and returns the
    volume back in dB.  Output is deterministic for any thread count.
    """

    def __init__(self, h0: float = 0.08, h1: float = 0.04,
                 search_radii=(8, 8, 8), patch_radii=(1, 1, 1),
                 noise_floor_db: float = 0.0, snr_scale_db: float = 10.0,
                 window=None, threads: int | None = None):
        self.h0 = h0
        self.h1 = h1
        self.search_radii = search_radii
        self.patch_radii = patch_radii
        self.noise_floor_db = noise_floor_db
        self.snr_scale_db = snr_scale_db
        self.window = window
        self.threads = threads

    def _params(self) -> TNodeParams:
        return TNodeParams(h0=self.h0, h1=self.h1,
                           search_radii=self.search_radii,
                           patch_radii=self.patch_radii,
                           noise_floor_db=self.noise_floor_db,
                           snr_scale_db=self.snr_scale_db)

    def fit(self, X, y=None):
        self.params_ = self._params()
        if self.window is not None:
            self.window_ = as_window(self.window)
        else:
            data = as_volume_array(X, "X")
            lower = float(data.min())
            upper = float(data.max())
            self.window_ = ContrastWindow(lower, upper if upper > lower else lower + 1.0)
        return self

    def transform(self, X):
        check_is_fitted(self, "window_")
        data = as_volume_array(X, "X")
        if isinstance(X, Volume) and X.domain != Domain.LOG_DB:
            raise ArgumentError(f"X must be a LOG_DB volume, got {X.domain.name}")
        unit = _db_to_unit(data, self.window_)
        pitch = X.pitch if isinstance(X, Volume) else (1.0, 1.0, 1.0)
        cleaned = despeckle(Volume(unit, pitch, Domain.UNIT), self.params_,
                            self.window_, threads=self.threads)
        db = _unit_to_db(cleaned.data, self.window_)
        return rewrap_like(X, db)


class SubpixelRegistrar(BaseEstimator, TransformerMixin):
    """Slow-axis drift correction as a transformer.

    fit() chains pairwise B-scan registrations through the volume and
    stores the per-B-scan shift table in shifts_ (columns y, dz, dx,
    peak).  transform() applies the stored corrections, so shifts
    estimated on one volume (say, intensity) can be applied to another
    acquired in the same geometry.
    """

    def __init__(self, upsample: int = 100):
        self.upsample = upsample

    def fit(self, X, y=None):
        data = as_volume_array(X, "X")
        ny = data.shape[2]
        trace = np.zeros((ny, 4), dtype=np.float64)
        trace[0] = (0, 0.0, 0.0, 1.0)
        previous = data[:, :, 0]
        for yi in range(1, ny):
            est = estimate_shift(previous, data[:, :, yi], self.upsample)
            corrected = apply_shift(data[:, :, yi], -est.dz, -est.dx)
            trace[yi] = (yi, est.dz, est.dx, est.peak)
            previous = corrected
        self.shifts_ = trace
        return self

    def transform(self, X):
        check_is_fitted(self, "shifts_")
        data = as_volume_array(X, "X")
        if data.shape[2] != self.shifts_.shape[0]:
            raise ArgumentError(
                f"X has {data.shape[2]} B-scans but {self.shifts_.shape[0]} "
                "shifts were fitted")
        out = np.empty_like(data, dtype=np.float32)
        for yi in range(data.shape[2]):
            _, dz, dx, _ = self.shifts_[yi]
            out[:, :, yi] = apply_shift(data[:, :, yi].astype(np.float32), -dz, -dx)
        if isinstance(X, Volume):
            from .volume import _DOMAIN_BOUNDS

            low, high = _DOMAIN_BOUNDS[X.domain]
            if low is not None or high is not None:
                out = np.clip(out, low, high)
        return rewrap_like(X, out)
