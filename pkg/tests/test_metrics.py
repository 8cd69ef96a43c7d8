import numpy as np
import pytest

from octdespeckle import (ArgumentError, DegenerateInputError, Domain, Roi,
                          Volume, cnr, msssim3d, psnr, speckle_contrast,
                          ssim3d, ssim_ttest)

from oracle_ssim import ssim_reference


def _pair(shape=(24, 24, 16), seed=0):
    gen = np.random.default_rng(seed)
    a = gen.random(shape)
    b = np.clip(a + gen.normal(0, 0.05, shape), 0.0, 1.0)
    return a, b


class TestRoi:
    def test_slices(self):
        roi = Roi((1, 2, 3), (4, 5, 6))
        assert roi.slices() == (slice(1, 5), slice(2, 7), slice(3, 9))

    def test_validation(self):
        with pytest.raises(ArgumentError):
            Roi((0, 0), (1, 1, 1))
        with pytest.raises(ArgumentError):
            Roi((-1, 0, 0), (1, 1, 1))
        with pytest.raises(ArgumentError):
            Roi((0, 0, 0), (0, 1, 1))

    def test_check_inside(self):
        Roi((0, 0, 0), (4, 4, 4)).check_inside((4, 4, 4))
        with pytest.raises(ArgumentError):
            Roi((1, 0, 0), (4, 4, 4)).check_inside((4, 4, 4))

    def test_overlaps(self):
        a = Roi((0, 0, 0), (4, 4, 4))
        assert a.overlaps(Roi((3, 3, 3), (2, 2, 2)))
        assert not a.overlaps(Roi((4, 0, 0), (2, 4, 4)))


class TestPsnr:
    def test_constant_offset_of_one(self):
        gen = np.random.default_rng(1)
        ref = gen.uniform(0, 60000, (16, 16, 8))
        assert psnr(ref, ref + 1.0) == pytest.approx(96.3296, abs=1e-3)

    def test_constant_offset_of_one_percent_of_peak(self):
        gen = np.random.default_rng(2)
        ref = gen.uniform(0, 60000, (16, 16, 8))
        assert psnr(ref, ref + 655.35) == pytest.approx(40.0, abs=1e-3)

    def test_identical_is_infinite(self):
        ref = np.full((8, 8, 8), 123.0)
        assert psnr(ref, ref) == float("inf")

    def test_monotone_in_noise(self):
        gen = np.random.default_rng(3)
        ref = gen.uniform(1000, 60000, (16, 16, 8))
        scores = []
        for sd in (10.0, 100.0, 1000.0):
            noisy = np.clip(ref + gen.normal(0, sd, ref.shape), 0, 65535)
            scores.append(psnr(ref, noisy))
        assert scores[0] > scores[1] > scores[2]

    def test_range_enforced(self):
        ref = np.full((4, 4, 4), 70000.0)
        with pytest.raises(ArgumentError):
            psnr(ref, ref - 1000.0)
        with pytest.raises(ArgumentError):
            psnr(np.full((4, 4, 4), -1.0), np.zeros((4, 4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ArgumentError):
            psnr(np.zeros((4, 4, 4)), np.zeros((4, 4, 5)))


class TestCnr:
    def _volume(self, a_value, b_value, jitter):
        # Two blocks with exactly known means and variances: samples
        # alternate value +- jitter so var = jitter^2.
        data = np.zeros((8, 8, 8), dtype=np.float32)
        signs = np.indices((8, 8, 4)).sum(axis=0) % 2 * 2 - 1
        data[:, :, :4] = a_value + jitter * signs
        data[:, :, 4:] = b_value + jitter * signs
        return Volume(data, (1, 1, 1), Domain.LOG_DB)

    def test_closed_form(self):
        # means 7 and 13, both variances 4.5^2: CNR = 6 / sqrt(40.5)
        vol = self._volume(7.0, 13.0, 4.5)
        a = Roi((0, 0, 0), (8, 8, 4))
        b = Roi((0, 0, 4), (8, 8, 4))
        expected = (13.0 - 7.0) / np.sqrt(2 * 4.5 ** 2)
        assert cnr(vol, a, b) == pytest.approx(expected, abs=1e-6)

    def test_two_to_one_case(self):
        # means 16 and 24, variances 2*4^2 = 32: CNR = 8/4sqrt2 = sqrt2
        vol = self._volume(16.0, 24.0, 4.0)
        a = Roi((0, 0, 0), (8, 8, 4))
        b = Roi((0, 0, 4), (8, 8, 4))
        assert cnr(vol, a, b) == pytest.approx(np.sqrt(2.0), abs=1e-6)

    def test_antisymmetric(self):
        vol = self._volume(7.0, 13.0, 2.0)
        a = Roi((0, 0, 0), (8, 8, 4))
        b = Roi((0, 0, 4), (8, 8, 4))
        assert cnr(vol, a, b) == pytest.approx(-cnr(vol, b, a), abs=1e-12)

    def test_equal_stats_is_zero(self):
        vol = self._volume(9.0, 9.0, 1.5)
        a = Roi((0, 0, 0), (8, 8, 4))
        b = Roi((0, 0, 4), (8, 8, 4))
        assert cnr(vol, a, b) == pytest.approx(0.0, abs=1e-9)

    def test_overlap_rejected(self):
        vol = self._volume(1.0, 2.0, 1.0)
        with pytest.raises(ArgumentError):
            cnr(vol, Roi((0, 0, 0), (8, 8, 5)), Roi((0, 0, 4), (8, 8, 4)))

    def test_outside_rejected(self):
        vol = self._volume(1.0, 2.0, 1.0)
        with pytest.raises(ArgumentError):
            cnr(vol, Roi((0, 0, 0), (8, 8, 4)), Roi((0, 0, 6), (8, 8, 4)))

    def test_constant_rois_degenerate(self):
        vol = self._volume(5.0, 9.0, 0.0)
        a = Roi((0, 0, 0), (8, 8, 4))
        b = Roi((0, 0, 4), (8, 8, 4))
        with pytest.raises(DegenerateInputError):
            cnr(vol, a, b)

    def test_wrong_domain_rejected(self):
        vol = Volume(np.ones((8, 8, 8), np.float32), (1, 1, 1), Domain.LINEAR)
        with pytest.raises(ArgumentError):
            cnr(vol, Roi((0, 0, 0), (4, 4, 4)), Roi((4, 4, 4), (4, 4, 4)))


class TestSpeckleContrast:
    def test_exponential_is_near_one(self):
        gen = np.random.default_rng(4)
        data = gen.exponential(2.0, (40, 40, 20)).astype(np.float32)
        vol = Volume(data, (1, 1, 1), Domain.LINEAR)
        assert speckle_contrast(vol) == pytest.approx(1.0, abs=0.03)

    def test_constant_is_zero(self):
        vol = Volume(np.full((8, 8, 8), 3.0, np.float32), (1, 1, 1),
                     Domain.LINEAR)
        assert speckle_contrast(vol) == 0.0

    def test_roi_restriction(self):
        data = np.ones((8, 8, 8), dtype=np.float32)
        data[:4] = 5.0
        vol = Volume(data, (1, 1, 1), Domain.LINEAR)
        assert speckle_contrast(vol, Roi((0, 0, 0), (4, 8, 8))) == 0.0
        assert speckle_contrast(vol) > 0.5

    def test_zero_mean_degenerate(self):
        vol = Volume(np.zeros((8, 8, 8), np.float32), (1, 1, 1),
                     Domain.LINEAR)
        with pytest.raises(DegenerateInputError):
            speckle_contrast(vol)

    def test_wrong_domain_rejected(self):
        vol = Volume(np.zeros((8, 8, 8), np.float32), (1, 1, 1),
                     Domain.LOG_DB)
        with pytest.raises(ArgumentError):
            speckle_contrast(vol)


class TestSsim3d:
    def test_self_similarity_is_one(self):
        a, _ = _pair(seed=5)
        score, local = ssim3d(a, a, data_range=1.0)
        assert abs(score - 1.0) < 1e-9
        assert np.allclose(local, 1.0, atol=1e-9)

    def test_matches_reference_noisy_pair(self):
        a, b = _pair(shape=(18, 16, 14), seed=6)
        score, local = ssim3d(a, b, data_range=1.0)
        ref_score, ref_local = ssim_reference(a, b, 1.0)
        assert abs(score - ref_score) < 1e-6
        assert np.max(np.abs(local - ref_local)) < 1e-6

    def test_matches_reference_affine_pair(self):
        a, _ = _pair(shape=(16, 16, 12), seed=7)
        b = 0.5 * a + 0.2
        score, local = ssim3d(a, b, data_range=1.0)
        ref_score, _ = ssim_reference(a, b, 1.0)
        assert abs(score - ref_score) < 1e-6
        assert score < 0.999

    def test_score_is_mean_of_map(self):
        a, b = _pair(seed=8)
        score, local = ssim3d(a, b, data_range=1.0)
        assert score == pytest.approx(float(local.mean()), abs=1e-12)

    def test_symmetry(self):
        a, b = _pair(seed=9)
        assert ssim3d(a, b, 1.0)[0] == pytest.approx(ssim3d(b, a, 1.0)[0],
                                                     abs=1e-12)

    def test_unit_volume_infers_range(self):
        a, b = _pair(seed=10)
        va = Volume(a.astype(np.float32), (1, 1, 1), Domain.UNIT)
        vb = Volume(b.astype(np.float32), (1, 1, 1), Domain.UNIT)
        explicit = ssim3d(va, vb, data_range=1.0)[0]
        inferred = ssim3d(va, vb)[0]
        assert inferred == pytest.approx(explicit, abs=1e-12)

    def test_constant_reference_needs_range(self):
        const = np.full((16, 16, 16), 0.5)
        with pytest.raises(ArgumentError):
            ssim3d(const, const)
        score, _ = ssim3d(const, const, data_range=1.0)
        assert score == pytest.approx(1.0, abs=1e-9)

    def test_domain_mismatch_rejected(self):
        a, b = _pair(seed=11)
        va = Volume(a.astype(np.float32), (1, 1, 1), Domain.UNIT)
        vb = Volume((2 * b - 1).astype(np.float32), (1, 1, 1), Domain.SIGNED)
        with pytest.raises(ArgumentError):
            ssim3d(va, vb)


class TestMsssim3d:
    def test_self_similarity_is_one(self):
        gen = np.random.default_rng(12)
        a = gen.random((192, 192, 176))
        assert abs(msssim3d(a, a, data_range=1.0) - 1.0) < 1e-9

    def test_reduces_scales_on_small_volumes(self):
        a, b = _pair(shape=(32, 32, 32), seed=13)
        with pytest.warns(RuntimeWarning):
            score = msssim3d(a, b, scales=5, data_range=1.0)
        assert 0.0 <= score <= 1.0

    def test_single_scale_relates_to_ssim(self):
        # With one scale the score is (lum_mean * cs_mean), close to
        # but not identical to mean(lum*cs).
        a, b = _pair(shape=(24, 24, 24), seed=14)
        ms = msssim3d(a, b, scales=1, data_range=1.0)
        ssim_score = ssim3d(a, b, data_range=1.0)[0]
        assert ms == pytest.approx(ssim_score, abs=0.01)

    def test_scale_validation(self):
        a, _ = _pair(seed=15)
        with pytest.raises(ArgumentError):
            msssim3d(a, a, scales=0, data_range=1.0)
        with pytest.raises(ArgumentError):
            msssim3d(a, a, scales=6, data_range=1.0)

    def test_degrades_with_noise(self):
        gen = np.random.default_rng(16)
        a = gen.random((176, 176, 176))
        b1 = np.clip(a + gen.normal(0, 0.02, a.shape), 0, 1)
        b2 = np.clip(a + gen.normal(0, 0.2, a.shape), 0, 1)
        assert msssim3d(a, b1, data_range=1.0) > msssim3d(a, b2,
                                                          data_range=1.0)


class TestSsimTtest:
    def test_identical_maps(self):
        gen = np.random.default_rng(17)
        m = gen.random(1000)
        t, p = ssim_ttest(m, m.copy())
        assert t == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_shifted_maps_significant(self):
        gen = np.random.default_rng(18)
        m = gen.normal(0.8, 0.1, 100000)
        t, p = ssim_ttest(m + 0.05, m)
        assert t > 0
        assert p < 1e-6

    def test_needs_samples(self):
        with pytest.raises(ArgumentError):
            ssim_ttest([0.5], [0.5, 0.6])
