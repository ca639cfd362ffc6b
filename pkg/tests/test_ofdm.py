import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmimo.numerics import fft
from dmimo.ofdm import (
    OfdmConfig,
    apply_fir,
    demodulate,
    demodulate_slot,
    modulate,
    modulate_slot,
    subcarrier_phase_ramp,
)

from conftest import crandn

SMALL = OfdmConfig(n_fft=8, cp_len=2, data_subcarriers=(1, 2, 6, 7), pilot_subcarriers=(3, 5))
CFG = OfdmConfig()


def evm_db(rx, ref):
    return 10 * np.log10(np.sum(np.abs(rx - ref) ** 2) / np.sum(np.abs(ref) ** 2))


class TestConfig:
    def test_defaults(self):
        assert (CFG.n_fft, CFG.cp_len, CFG.sample_period) == (64, 16, 50e-9)
        assert CFG.symbol_len == 80
        assert CFG.symbol_duration == pytest.approx(4e-6)
        assert not set(CFG.data_subcarriers) & set(CFG.pilot_subcarriers)

    @pytest.mark.parametrize("kw", [
        dict(cp_len=65),
        dict(data_subcarriers=(1, 2), pilot_subcarriers=(2,)),
        dict(data_subcarriers=(64,), pilot_subcarriers=()),
        dict(sample_period=0.0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            OfdmConfig(**kw)

    def test_dict_round_trip(self):
        assert OfdmConfig.from_dict(SMALL.to_dict()) == SMALL


class TestModulate:
    def test_zero(self):
        assert np.all(modulate(SMALL, np.zeros(8)) == 0)

    def test_delta_bin0_constant_with_prefix(self):
        t = modulate(SMALL, np.eye(8)[0])
        np.testing.assert_allclose(t, np.full(10, 1 / np.sqrt(8)), atol=1e-15)
        # The prefix is a copy of the last two body samples.
        np.testing.assert_array_equal(t[:2], t[8:10])

    def test_prefix_property(self, rng):
        t = modulate(CFG, crandn(rng, 64))
        np.testing.assert_array_equal(t[:16], t[-16:])

    def test_round_trip(self, rng):
        x = crandn(rng, 64)
        np.testing.assert_allclose(demodulate(CFG, modulate(CFG, x), CFG.cp_len), x, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            modulate(CFG, np.zeros(63))

    def test_power_conservation(self, rng):
        x = crandn(rng, 64)
        body = modulate(CFG, x)[CFG.cp_len:]
        assert abs(np.sum(np.abs(body) ** 2) - np.sum(np.abs(x) ** 2)) < 1e-12 * np.sum(np.abs(x) ** 2)

    def test_slot_round_trip(self, rng):
        x = crandn(rng, 3, 5, 64)
        y = modulate_slot(CFG, x)
        assert y.shape == (3, 5 * 80)
        for b in (0, 4, 16):
            np.testing.assert_allclose(demodulate_slot(CFG, y, 5, b), x, atol=1e-12)


class TestDemodulate:
    def test_window_out_of_range(self):
        with pytest.raises(ValueError):
            demodulate(CFG, np.zeros(70), 10)
        with pytest.raises(ValueError):
            demodulate(CFG, np.zeros(80), -1)

    @pytest.mark.parametrize("ell", [1, 4, 17])
    def test_parallel_channels(self, rng, ell):
        h = crandn(rng, ell)
        x = crandn(rng, 64)
        y = apply_fir(modulate(CFG, x), h)
        hn = np.fft.fft(h, 64)
        for k in range(0, CFG.cp_len - ell + 2):
            got = demodulate(CFG, y, CFG.cp_len - k)
            # An early window by k samples is a k-sample delay in the DFT.
            expect = x * hn * subcarrier_phase_ramp(64, -k)
            np.testing.assert_allclose(got, expect, atol=1e-9)

    def test_window_past_prefix_breaks_decomposition(self, rng):
        ell = 8
        h = crandn(rng, ell)
        x = crandn(rng, 3, 64)
        y = apply_fir(modulate_slot(CFG, x), h)
        hn = np.fft.fft(h, 64)
        start = CFG.symbol_len + CFG.cp_len
        # Window reaching into the previous symbol's tail.
        k = CFG.cp_len + 6
        got = demodulate(CFG, y, start - k)
        assert evm_db(got, x[1] * hn * subcarrier_phase_ramp(64, -k)) > -20

    def test_backoff_compensated(self, rng):
        x = crandn(rng, 2, 64)
        y = modulate_slot(CFG, x)
        np.testing.assert_allclose(demodulate_slot(CFG, y, 2, backoff=7), x, atol=1e-12)
        with pytest.raises(ValueError):
            demodulate_slot(CFG, y, 2, backoff=17)
        with pytest.raises(ValueError):
            demodulate_slot(CFG, y, 3)


class TestFir:
    def test_identity_and_delay(self, rng):
        y = crandn(rng, 10)
        np.testing.assert_array_equal(apply_fir(y, [1]), y)
        np.testing.assert_allclose(apply_fir(y, [0, 1]), np.concatenate([[0], y]))

    def test_direct_sum(self, rng):
        y, h = crandn(rng, 30), crandn(rng, 5)
        out = np.zeros(34, complex)
        for i in range(30):
            for j in range(5):
                out[i + j] += y[i] * h[j]
        np.testing.assert_allclose(apply_fir(y, h), out, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 17), st.integers(0, 16), st.integers(0, 2 ** 32 - 1))
def test_decomposition_property(ell, k, seed):
    rng = np.random.default_rng(seed)
    k = min(k, CFG.cp_len - ell + 1)
    h = crandn(rng, ell)
    x = crandn(rng, 64)
    got = demodulate(CFG, apply_fir(modulate(CFG, x), h), CFG.cp_len - k)
    np.testing.assert_allclose(got, x * fft(np.pad(h, (0, 64 - ell))) * 8 * subcarrier_phase_ramp(64, -k), atol=1e-9)
