import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from octdespeckle import (ArgumentError, ContrastNormalizer, ContrastWindow,
                          Domain, SubpixelRegistrar, TNodeDespeckler,
                          TNodeParams, Volume, apply_shift, convert_domain,
                          despeckle)

pytestmark = pytest.mark.usefixtures("compiled_kernel")


def _log_volume(shape=(20, 18, 12), seed=0):
    gen = np.random.default_rng(seed)
    intensity = gen.exponential(1.0, size=shape)
    db = 10.0 * np.log10(np.maximum(intensity, 1e-12)).astype(np.float32)
    return Volume(db, (4.0, 10.0, 10.0), Domain.LOG_DB)


class TestSklearnProtocol:
    @pytest.mark.parametrize("estimator", [
        ContrastNormalizer(),
        TNodeDespeckler(h1=0.0, search_radii=(2, 2, 2)),
        SubpixelRegistrar(upsample=10),
    ])
    def test_get_set_params_and_clone(self, estimator):
        params = estimator.get_params()
        twin = clone(estimator)
        assert twin.get_params() == params
        twin.set_params(**params)
        assert twin.get_params() == params

    @pytest.mark.parametrize("estimator", [
        ContrastNormalizer(),
        TNodeDespeckler(h1=0.0),
        SubpixelRegistrar(),
    ])
    def test_not_fitted_rejected(self, estimator):
        vol = _log_volume()
        with pytest.raises(NotFittedError):
            estimator.transform(vol)


class TestContrastNormalizer:
    def test_range_mode(self):
        vol = _log_volume(seed=1)
        norm = ContrastNormalizer(mode="range").fit(vol)
        assert norm.window_.lower_db == pytest.approx(float(vol.data.min()))
        assert norm.window_.upper_db == pytest.approx(float(vol.data.max()))
        unit = norm.transform(vol)
        assert unit.domain == Domain.UNIT
        assert unit.data.min() == pytest.approx(0.0, abs=1e-7)
        assert unit.data.max() == pytest.approx(1.0, abs=1e-7)

    def test_floor_mode(self):
        from octdespeckle import noise_floor
        vol = _log_volume(seed=2)
        norm = ContrastNormalizer(mode="floor").fit(vol)
        assert norm.window_.lower_db == pytest.approx(
            noise_floor(np.asarray(vol.data)))
        unit = norm.transform(vol)
        # A tenth of the voxels sit at or below the floor.
        assert (unit.data == 0.0).mean() >= 0.05

    def test_explicit_limits_override(self):
        vol = _log_volume(seed=3)
        norm = ContrastNormalizer(lower_db=-30.0, upper_db=10.0).fit(vol)
        assert norm.window_ == ContrastWindow(-30.0, 10.0)

    def test_inverse_round_trip(self):
        vol = _log_volume(seed=4)
        norm = ContrastNormalizer(mode="range").fit(vol)
        unit = norm.transform(vol)
        back = norm.inverse_transform(unit)
        assert back.domain == Domain.LOG_DB
        assert np.allclose(back.data, vol.data, atol=1e-4)

    def test_array_passthrough(self):
        vol = _log_volume(seed=5)
        arr = np.asarray(vol.data)
        norm = ContrastNormalizer(mode="range").fit(arr)
        out = norm.transform(arr)
        assert isinstance(out, np.ndarray)
        assert not isinstance(out, Volume)

    def test_bad_mode(self):
        with pytest.raises(ArgumentError):
            ContrastNormalizer(mode="percentile").fit(_log_volume())


class TestTNodeDespeckler:
    def test_matches_functional_pipeline(self):
        vol = _log_volume(seed=6)
        est = TNodeDespeckler(h0=0.1, h1=0.0, search_radii=(2, 2, 2),
                              patch_radii=(1, 1, 1))
        out = est.fit(vol).transform(vol)
        assert out.domain == Domain.LOG_DB

        window = ContrastWindow(float(vol.data.min()), float(vol.data.max()))
        unit = convert_domain(vol, Domain.UNIT, window=window)
        params = TNodeParams(h0=0.1, h1=0.0, search_radii=(2, 2, 2),
                             patch_radii=(1, 1, 1))
        cleaned = despeckle(unit, params, window)
        expected = convert_domain(cleaned, Domain.LOG_DB, window=window)
        assert np.array_equal(out.data, expected.data)

    def test_explicit_window_pair(self):
        vol = _log_volume(seed=7)
        est = TNodeDespeckler(h1=0.0, search_radii=(2, 2, 2),
                              window=(-40.0, 20.0))
        est.fit(vol)
        assert est.window_ == ContrastWindow(-40.0, 20.0)

    def test_rejects_non_log_volume(self):
        vol = _log_volume(seed=8)
        window = ContrastWindow(float(vol.data.min()), float(vol.data.max()))
        unit = convert_domain(vol, Domain.UNIT, window=window)
        est = TNodeDespeckler(h1=0.0, search_radii=(2, 2, 2)).fit(vol)
        with pytest.raises(ArgumentError):
            est.transform(unit)

    def test_reduces_variance(self):
        vol = _log_volume(seed=9)
        est = TNodeDespeckler(h0=0.3, h1=0.0, search_radii=(3, 3, 3))
        out = est.fit(vol).transform(vol)
        assert float(out.data.var()) < float(vol.data.var())


class TestSubpixelRegistrar:
    def _drifted(self, seed=10, ny=8):
        from scipy import ndimage
        gen = np.random.default_rng(seed)
        base = ndimage.gaussian_filter(
            gen.exponential(1.0, (32, 28)), 1.5, mode="wrap").astype(np.float32)
        drifts = np.cumsum(gen.uniform(-0.7, 0.7, (ny, 2)), axis=0)
        drifts[0] = 0.0
        stack = np.empty((32, 28, ny), dtype=np.float32)
        for y in range(ny):
            stack[:, :, y] = apply_shift(base, *drifts[y])
        return np.clip(stack, 0.0, None), base, drifts

    def test_fit_estimates_drift(self):
        stack, _, drifts = self._drifted()
        reg = SubpixelRegistrar(upsample=100).fit(stack)
        assert reg.shifts_.shape == (8, 4)
        assert np.array_equal(reg.shifts_[0], (0, 0.0, 0.0, 1.0))
        assert np.allclose(reg.shifts_[1:, 1], drifts[1:, 0], atol=0.05)
        assert np.allclose(reg.shifts_[1:, 2], drifts[1:, 1], atol=0.05)

    def test_transform_corrects(self):
        stack, base, _ = self._drifted(seed=11)
        reg = SubpixelRegistrar(upsample=100).fit(stack)
        out = reg.transform(stack)
        for y in range(stack.shape[2]):
            assert np.allclose(out[:, :, y], base, atol=0.05)

    def test_shifts_apply_to_other_volume(self):
        # Corrections fitted on one contrast apply to a second volume
        # acquired in the same geometry.
        stack, base, _ = self._drifted(seed=12)
        reg = SubpixelRegistrar(upsample=100).fit(stack)
        doubled = reg.transform(stack * 2.0)
        for y in range(stack.shape[2]):
            assert np.allclose(doubled[:, :, y], base * 2.0, atol=0.1)

    def test_volume_in_volume_out_with_clipping(self):
        stack, _, _ = self._drifted(seed=13)
        peak = float(stack.max())
        vol = Volume(stack / peak, (1, 1, 1), Domain.UNIT)
        reg = SubpixelRegistrar(upsample=10).fit(vol)
        out = reg.transform(vol)
        assert isinstance(out, Volume)
        assert out.domain == Domain.UNIT
        assert out.data.min() >= 0.0
        assert out.data.max() <= 1.0

    def test_bscan_count_mismatch(self):
        stack, _, _ = self._drifted(seed=14)
        reg = SubpixelRegistrar(upsample=10).fit(stack)
        with pytest.raises(ArgumentError):
            reg.transform(stack[:, :, :5])
