import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from spikejscc.channel import (
    CalibrationError,
    GaussianQuantizedChannel,
    channel_step,
    measure_density,
    quantize,
    sigma2_from_snr,
)
from spikejscc.spikes import SpikeTensor


@pytest.mark.parametrize("x, y", [(0.5, 1), (0.4999, 0), (1.7, 1), (-3.0, 0)])
def test_quantize(x, y):
    assert quantize(x) == y


class TestCalibration:
    def test_zero_db(self):
        assert sigma2_from_snr(0.0, 0.2) == pytest.approx(0.2)

    def test_minus_six_db(self):
        assert sigma2_from_snr(-6.0, 0.2) == pytest.approx(0.2 / 10 ** (-0.6))
        assert sigma2_from_snr(-6.0, 0.2) == pytest.approx(0.7962, abs=1e-4)

    def test_infinite_snr(self):
        assert sigma2_from_snr(math.inf, 0.3) == 0.0
        assert sigma2_from_snr(200.0, 0.3) < 1e-20

    def test_no_energy(self):
        with pytest.raises(CalibrationError):
            sigma2_from_snr(0.0, 0.0)

    @given(st.floats(-20, 20), st.floats(1e-3, 1.0))
    def test_round_trip(self, snr, rho):
        s2 = sigma2_from_snr(snr, rho)
        assert 10 * math.log10(rho / s2) == pytest.approx(snr, abs=1e-9)


class TestDensity:
    def test_extremes(self):
        assert measure_density(SpikeTensor.zeros(3, 4)) == 0.0
        assert measure_density(np.ones((2, 5), dtype=np.uint8)) == 1.0

    def test_half(self):
        assert measure_density(SpikeTensor([[1, 0], [0, 1]])) == 0.5

    def test_stream_pools_counts(self):
        assert measure_density([SpikeTensor([[1, 1]]), SpikeTensor([[0, 0, 0, 1]])]) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            measure_density([])


class TestGaussianChannel:
    def test_noiseless_is_identity(self):
        ch = GaussianQuantizedChannel(4, 0.0)
        x = np.array([1, 0, 1, 1])
        np.testing.assert_array_equal(ch.step(x, np.random.default_rng(0)), x)
        assert ch.flip_probability() == 0.0

    def test_tiny_noise_is_identity(self):
        ch = GaussianQuantizedChannel(1000, 1e-6)
        x = np.random.default_rng(1).integers(0, 2, 1000)
        np.testing.assert_array_equal(ch.step(x, np.random.default_rng(0)), x)

    def test_flip_rate_sigma_half(self):
        ch = GaussianQuantizedChannel(1000, 0.25)
        rng = np.random.default_rng(3)
        ones = sum(ch.step(np.zeros(1000), rng).sum() for _ in range(1000))
        assert ones / 1e6 == pytest.approx(1 - norm.cdf(1.0), abs=1e-3)
        assert ch.flip_probability() == pytest.approx(0.158655, abs=1e-6)

    def test_symmetric_flips(self):
        ch = GaussianQuantizedChannel(1, 0.3)
        assert ch.flip_probability(0) == pytest.approx(ch.flip_probability(1))

    def test_output_binary_and_seeded(self):
        ch = GaussianQuantizedChannel(50, 1.0)
        x = np.ones(50)
        a = ch.step(x, np.random.default_rng(5))
        b = ch.step(x, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a)) <= {0.0, 1.0}

    def test_log_prob(self):
        ch = GaussianQuantizedChannel(2, 0.25)
        p = ch.flip_probability()
        assert ch.log_prob([1, 0], [1, 1]) == pytest.approx(math.log(1 - p) + math.log(p))

    def test_transmit_keeps_history(self):
        ch = GaussianQuantizedChannel(2, 0.1)
        rng = np.random.default_rng(0)
        ch.transmit([1, 0], rng)
        ch.transmit([0, 0], rng)
        assert len(ch.x_history) == 2 and len(ch.y_history) == 2
        ch.reset()
        assert ch.x_history == []

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            GaussianQuantizedChannel(3, 0.1).transmit([1, 0], np.random.default_rng(0))

    @pytest.mark.parametrize("sigma2", [-1.0, math.nan])
    def test_invalid_power(self, sigma2):
        with pytest.raises(ValueError):
            GaussianQuantizedChannel(1, sigma2)

    def test_channel_step_requires_noise(self):
        with pytest.raises(ValueError):
            channel_step(GaussianQuantizedChannel(1, 0.0), [1], np.random.default_rng(0))
