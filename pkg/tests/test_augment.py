import math

import numpy as np
import pytest

from fbsplab.augment import (
    AugmentConfig,
    augment_pipeline,
    draw_scale_factor,
    fit_duration,
    time_invert,
    time_scale,
)
from fbsplab.signals import Waveform, sine


def noise(n, seed=0, sr=8000):
    return Waveform(np.random.default_rng(seed).standard_normal(n), sr)


class TestTimeScale:
    def test_factor_two_takes_every_other_sample(self):
        x = noise(40)
        y = time_scale(x, 2.0)
        assert len(y) == 20
        assert np.array_equal(y.samples, x.samples[::2])

    def test_factor_half_interpolates_midpoints(self):
        x = noise(20)
        y = time_scale(x, 0.5)
        assert len(y) == 40
        assert np.array_equal(y.samples[::2], x.samples)
        mids = 0.5 * (x.samples[:-1] + x.samples[1:])
        assert np.allclose(y.samples[1:-1:2], mids, atol=1e-15)

    def test_factor_one_is_bit_identical(self):
        x = noise(30)
        assert np.array_equal(time_scale(x, 1.0).samples, x.samples)

    def test_spectral_peak_moves_with_factor(self):
        # speeding a tone up by 2 doubles its frequency
        sr = 8000
        x = sine(440.0, 1.0, sr)
        y = time_scale(x, 2.0)
        spec = np.abs(np.fft.rfft(y.samples * np.hanning(len(y))))
        peak = np.argmax(spec) * sr / len(y)
        assert abs(peak - 880.0) < sr / len(y) + 1e-9

    def test_validation(self):
        x = noise(10)
        with pytest.raises(ValueError):
            time_scale(x, 0.0)
        with pytest.raises(ValueError):
            time_scale(x, math.inf)
        with pytest.raises(ValueError):
            time_scale(x, 100.0)  # 10 samples / 100 rounds to zero


class TestTimeInvert:
    def test_reverses(self):
        x = Waveform(np.arange(5, dtype=float), 8000)
        assert np.array_equal(time_invert(x).samples, [4, 3, 2, 1, 0])

    def test_involution(self):
        x = noise(33)
        assert np.array_equal(time_invert(time_invert(x)).samples, x.samples)

    def test_preserves_energy(self):
        x = noise(64)
        assert math.isclose(np.sum(time_invert(x).samples ** 2),
                            np.sum(x.samples ** 2), rel_tol=1e-15)


class TestFitDuration:
    def test_exact_output_length(self):
        for n, target_s in [(100, 0.02), (100, 0.0125), (100, 0.005)]:
            x = noise(n)
            y = fit_duration(x, target_s)
            assert len(y) == round(target_s * 8000)

    def test_centered_crop_without_rng(self):
        x = Waveform(np.arange(10, dtype=float), 10)
        y = fit_duration(x, 0.6)  # 6 samples, slack 4, offset 2
        assert np.array_equal(y.samples, [2, 3, 4, 5, 6, 7])

    def test_centered_pad_without_rng(self):
        x = Waveform(np.ones(4), 10)
        y = fit_duration(x, 0.8)  # 8 samples, pad 4, left 2
        assert np.array_equal(y.samples, [0, 0, 1, 1, 1, 1, 0, 0])

    def test_random_crop_stays_in_bounds(self):
        x = Waveform(np.arange(50, dtype=float), 100)
        starts = set()
        for seed in range(40):
            y = fit_duration(x, 0.3, np.random.default_rng(seed))
            assert len(y) == 30
            start = int(y.samples[0])
            assert 0 <= start <= 20
            assert np.array_equal(y.samples, np.arange(start, start + 30))
            starts.add(start)
        assert len(starts) > 5  # offsets actually vary

    def test_random_pad_keeps_all_samples(self):
        x = Waveform(np.ones(10), 100)
        for seed in range(20):
            y = fit_duration(x, 0.25, np.random.default_rng(seed))
            assert len(y) == 25
            assert np.sum(y.samples) == 10.0  # padding adds only zeros

    def test_cropping_never_increases_energy(self):
        x = noise(200)
        for seed in range(10):
            y = fit_duration(x, 0.01, np.random.default_rng(seed))
            assert np.sum(y.samples ** 2) <= np.sum(x.samples ** 2) + 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_duration(noise(10), 0.0)
        with pytest.raises(ValueError):
            fit_duration(noise(10), 1e-9)  # rounds to zero samples


class TestDrawScaleFactor:
    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            f = draw_scale_factor(rng, (-1.5, 1.5))
            assert 2.0 ** -1.5 <= f <= 2.0 ** 1.5

    def test_log2_is_uniform(self):
        # empirical CDF of log2(factor) against uniform [-1.5, 1.5]; the
        # Kolmogorov bound for 1000 draws at ~1% level is about 0.0515
        rng = np.random.default_rng(123)
        draws = np.sort([math.log2(draw_scale_factor(rng, (-1.5, 1.5)))
                         for _ in range(1000)])
        cdf = (draws + 1.5) / 3.0
        ecdf_hi = np.arange(1, 1001) / 1000.0
        ecdf_lo = np.arange(0, 1000) / 1000.0
        d_stat = max(np.max(np.abs(ecdf_hi - cdf)), np.max(np.abs(ecdf_lo - cdf)))
        assert d_stat < 0.0515


class TestPipeline:
    def test_deterministic_for_config(self):
        x = noise(6000)
        cfg = AugmentConfig(target_duration=0.5, seed=11)
        a = augment_pipeline(x, cfg)
        b = augment_pipeline(x, cfg)
        assert np.array_equal(a.samples, b.samples)
        c = augment_pipeline(x, AugmentConfig(target_duration=0.5, seed=12))
        assert not np.array_equal(a.samples, c.samples)

    def test_output_duration_exact(self):
        x = noise(6000)
        for seed in range(8):
            y = augment_pipeline(x, AugmentConfig(target_duration=0.37, seed=seed))
            assert len(y) == round(0.37 * 8000)

    def test_eval_mode_is_center_fit(self):
        x = noise(6000)
        cfg = AugmentConfig(target_duration=0.25, seed=5, eval_mode=True)
        y = augment_pipeline(x, cfg)
        assert np.array_equal(y.samples, fit_duration(x, 0.25).samples)

    def test_never_inverts_at_zero_prob(self):
        # an increasing ramp stays increasing when inversion is off and the
        # exponent range pins the scale factor to 1
        x = Waveform(np.linspace(0.0, 1.0, 4000), 8000)
        cfg = AugmentConfig(target_duration=0.25, scale_exponent_range=(0.0, 0.0),
                            invert_prob=0.0, seed=3)
        y = augment_pipeline(x, cfg)
        assert np.all(np.diff(y.samples) > 0)

    def test_always_inverts_at_unit_prob(self):
        x = Waveform(np.linspace(0.0, 1.0, 4000), 8000)
        cfg = AugmentConfig(target_duration=0.25, scale_exponent_range=(0.0, 0.0),
                            invert_prob=1.0, seed=3)
        y = augment_pipeline(x, cfg)
        assert np.all(np.diff(y.samples) < 0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AugmentConfig(target_duration=0.0)
        with pytest.raises(ValueError):
            AugmentConfig(target_duration=1.0, scale_exponent_range=(1.0, -1.0))
        with pytest.raises(ValueError):
            AugmentConfig(target_duration=1.0, invert_prob=1.5)
