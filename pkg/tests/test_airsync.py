import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmimo.airsync import (
    SLOPE_WINDOW,
    PhaseCorrection,
    PhaseTrackerState,
    apply_correction,
    calibrated_fit,
    fitted_phases,
    initial_estimate,
    predict,
    track,
)
from dmimo.numerics import wrap_phase
from dmimo.ofdm import OfdmConfig

from conftest import crandn

CFG = OfdmConfig()
USED = CFG.used_subcarriers
PILOTS = np.array(CFG.pilot_subcarriers)


def state_from(phases, lookahead=4, t0=0.0):
    return PhaseTrackerState.from_header(USED, phases, PILOTS, t0=t0, lookahead=lookahead)


class TestInitialEstimate:
    def test_equal(self, rng):
        known = np.exp(2j * np.pi * rng.random(64))
        np.testing.assert_allclose(initial_estimate([known], known), 0, atol=1e-15)

    def test_constant_rotation(self, rng):
        known = crandn(rng, 64)
        est = initial_estimate(known * np.exp(1j * np.pi / 4), known, PILOTS)
        np.testing.assert_allclose(est, np.pi / 4, atol=1e-12)

    def test_timing_ramp(self, rng):
        known = np.exp(2j * np.pi * rng.random(64))
        n = np.arange(64)
        rx = known * np.exp(1j * 4 * np.pi * n / 64)
        est = initial_estimate(rx, known, PILOTS)
        np.testing.assert_allclose(wrap_phase(est - 4 * np.pi * PILOTS / 64), 0, atol=1e-9)

    def test_circular_mean_over_symbols(self):
        known = np.ones(64, complex)
        rx = np.stack([np.exp(1j * 3.1) * known, np.exp(-1j * 3.1) * known])
        np.testing.assert_allclose(np.abs(initial_estimate(rx, known)), np.pi, atol=1e-12)

    def test_zero_known(self):
        known = np.ones(64, complex)
        known[22] = 0
        with pytest.raises(ValueError):
            initial_estimate(known, known, PILOTS)
        # Zero elsewhere is fine when not requested.
        initial_estimate(known, known, [23, 24])


class TestTrack:
    def test_constant_phases(self):
        s = state_from(np.zeros(USED.size))
        for t in range(1, 6):
            track(s, np.zeros(PILOTS.size), t)
        assert s.slope == 0.0

    def test_linear_input(self):
        s = state_from(np.zeros(USED.size))
        track(s, np.full(PILOTS.size, 0.02), 1)
        assert s.slope == pytest.approx(0.02)
        for t in range(2, 7):
            track(s, np.full(PILOTS.size, 0.02 * t), t)
        assert len(s.slope_window) == SLOPE_WINDOW
        assert s.slope == pytest.approx(0.02)

    def test_window_mean(self):
        s = state_from(np.zeros(USED.size))
        meas = np.cumsum([0.01, 0.02, 0.03, 0.04])
        for t, m in enumerate(meas, start=1):
            track(s, np.full(PILOTS.size, m), t)
        assert s.slope == pytest.approx(0.025)
        # The oldest increment is evicted once the window is full.
        track(s, np.full(PILOTS.size, meas[-1] + 0.09), 5)
        assert s.slope == pytest.approx((0.02 + 0.03 + 0.04 + 0.09) / 4)

    def test_wraps_across_pi(self):
        s = state_from(np.full(USED.size, 3.1))
        track(s, np.full(PILOTS.size, -3.1), 1)
        assert s.slope == pytest.approx(2 * np.pi - 6.2)

    def test_time_must_increase(self):
        s = state_from(np.zeros(USED.size), t0=3)
        with pytest.raises(ValueError):
            track(s, np.zeros(PILOTS.size), 3)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            track(state_from(np.zeros(USED.size)), np.zeros(3), 1)

    def test_record(self):
        s = PhaseTrackerState.from_header(USED, np.zeros(USED.size), PILOTS, record=True)
        track(s, np.full(PILOTS.size, 0.1), 1)
        assert s.trace[0][0] == 1 and s.trace[0][2] == pytest.approx(0.1)

    def test_pilot_not_in_header(self):
        with pytest.raises(ValueError):
            PhaseTrackerState.from_header([1, 2, 3], np.zeros(3), [4])


class TestPredict:
    def test_zero_slope(self):
        s = state_from(np.linspace(-1, 1, USED.size))
        np.testing.assert_allclose(predict(s).angles, s.phase)

    def test_arithmetic(self):
        s = PhaseTrackerState.from_header([5], [0.9], [5])
        track(s, [1.0], 1)
        assert s.slope == pytest.approx(0.1)
        corr = predict(s, d=3)
        assert corr.angles[0] == pytest.approx(1.3)
        assert corr.valid_at == 4

    def test_empty(self):
        with pytest.raises(ValueError):
            predict(PhaseTrackerState(np.zeros(0, int), np.zeros(0), np.zeros(0, int)))

    def test_methods_delegate(self):
        s = PhaseTrackerState.from_header([5], [0.0], [5])
        s.track([0.2], 1)
        assert s.predict(d=1).angles[0] == pytest.approx(0.4)


def _truth(a, b, slope, t):
    return wrap_phase(a * USED + b + slope * t)


@settings(max_examples=150, deadline=None)
@given(
    slope=st.floats(-0.1, 0.1),
    d=st.integers(1, 8),
    a=st.floats(-np.pi, np.pi),
    b=st.floats(-np.pi, np.pi),
)
def test_noiseless_convergence(slope, d, a, b):
    # Linear drift in t on top of an arbitrary line in n.
    s = state_from(_truth(a, b, slope, 0), lookahead=d)
    for t in range(1, 20):
        track(s, _truth(a, b, slope, t)[s.pilot_positions], t)
        corr = predict(s)
        err = np.rad2deg(wrap_phase(corr.angles - _truth(a, b, slope, t + d)))
        if t >= 5:
            assert np.max(np.abs(err)) < 0.1
        # Exact as soon as one increment is in the window.
        assert np.max(np.abs(err)) < 1e-7


def test_noiseless_prediction_exact():
    s = state_from(_truth(0.3, -1.0, 0.07, 0), lookahead=3)
    for t in range(1, 10):
        track(s, _truth(0.3, -1.0, 0.07, t)[s.pilot_positions], t)
    np.testing.assert_allclose(wrap_phase(predict(s).angles - _truth(0.3, -1.0, 0.07, 12)), 0, atol=1e-9)


class TestApplyCorrection:
    def test_identity(self, rng):
        x = crandn(rng, 64)
        np.testing.assert_array_equal(apply_correction(x, PhaseCorrection(np.zeros(64), np.arange(64), 0)), x)

    def test_modulus_and_negation(self, rng):
        x = crandn(rng, 2, 64)
        ang = rng.uniform(-np.pi, np.pi, 64)
        out = apply_correction(x, PhaseCorrection(ang, np.arange(64), 0))
        np.testing.assert_allclose(np.abs(out), np.abs(x))
        neg = apply_correction(x, PhaseCorrection(np.array([np.pi]), np.array([7]), 0))
        np.testing.assert_allclose(neg[:, 7], -x[:, 7])
        np.testing.assert_array_equal(np.delete(neg, 7, axis=1), np.delete(x, 7, axis=1))

    def test_sign(self):
        out = apply_correction(np.ones(4), PhaseCorrection(np.array([0.5]), np.array([1]), 0))
        assert np.angle(out[1]) == pytest.approx(0.5)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            apply_correction(np.ones(4), PhaseCorrection(np.zeros(2), np.array([1]), 0))
        with pytest.raises(ValueError):
            apply_correction(np.ones(4), PhaseCorrection(np.zeros(1), np.array([4]), 0))


class TestCalibratedFit:
    def test_flat_offset(self):
        cal = np.zeros(PILOTS.size)
        slope, icpt = calibrated_fit(np.full(PILOTS.size, 0.5), cal, PILOTS)
        assert (slope, icpt) == pytest.approx((0.0, 0.5), abs=1e-12)

    def test_timing_slope(self, rng):
        cal = rng.uniform(-np.pi, np.pi, PILOTS.size)
        ph = wrap_phase(6 * np.pi * PILOTS / 64 + 0.3 + cal)
        slope, icpt = calibrated_fit(ph, cal, PILOTS)
        assert slope == pytest.approx(6 * np.pi / 64, abs=1e-9)
        assert icpt == pytest.approx(0.3, abs=1e-9)
        np.testing.assert_allclose(wrap_phase(fitted_phases(slope, icpt, PILOTS, cal) - ph), 0, atol=1e-9)

    def test_too_few(self):
        with pytest.raises(ValueError):
            calibrated_fit([0.1], [0.0], [22])

    @pytest.mark.parametrize("pilots", [np.arange(1, 9), PILOTS])
    def test_averaging_gain(self, rng, pilots):
        sigma = 0.05
        cal = rng.uniform(-np.pi, np.pi, pilots.size)
        truth = 2 * np.pi * pilots / 64 + 0.4 + cal
        icpt_err, fit_mse, raw_mse = [], [], []
        for _ in range(4000):
            ph = wrap_phase(truth + sigma * rng.standard_normal(pilots.size))
            s, b = calibrated_fit(ph, cal, pilots)
            icpt_err.append(wrap_phase(b - 0.4))
            fit_mse.append(np.mean(wrap_phase(fitted_phases(s, b, pilots, cal) - truth) ** 2))
            raw_mse.append(np.mean(wrap_phase(ph - truth) ** 2))
        # OLS intercept variance: sigma^2 (1/n + mean(x)^2 / Sxx).
        x = pilots.astype(float)
        ols = sigma * np.sqrt(1 / x.size + x.mean() ** 2 / np.sum((x - x.mean()) ** 2))
        assert np.std(icpt_err) == pytest.approx(ols, rel=0.1)
        if x.mean() ** 2 / np.sum((x - x.mean()) ** 2) < 1 - 1 / x.size:
            assert np.std(icpt_err) < sigma
        # The two-step fit never loses to per-pilot estimates.
        assert np.mean(fit_mse) <= np.mean(raw_mse)
