import json

import numpy as np
import pytest

from dmimo.harness import (
    RUNNERS,
    SINR_CAP_DB,
    ExperimentConfig,
    MetricsReport,
    default_config,
    drift_phase_budget,
    dynamic_range_budget,
    measure_evm,
    measure_sinr,
    run_beamforming,
    run_leakage,
    run_sync_accuracy,
    run_thp_4x4,
    run_zfbf_2x2,
)
from dmimo.precoding import shannon_sum_rate

from conftest import crandn


class TestConfig:
    def test_json_round_trip(self):
        cfg = default_config("thp-4x4", seed=2 ** 63 + 5, fixed_phase_error_deg=3.0)
        back = ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg

    @pytest.mark.parametrize("bad", [
        dict(n_trials=0),
        dict(freq_offset_range=(0.1, -0.1)),
        dict(timing_offset_range=(3, 1)),
        dict(phase_noise_std_deg=-1.0),
        dict(sync_model="magic"),
        dict(fft_backoff=99),
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_dict({"n_trails": 3})
        with pytest.raises(ValueError):
            default_config("nope")

    def test_defaults_match_testbed(self):
        cfg = default_config("thp-4x4")
        assert (cfg.n_aps, cfg.n_clients) == (4, 4)
        assert cfg.ofdm.n_fft == 64 and cfg.ofdm.cp_len == 16


class TestMetrics:
    def test_identical_is_capped(self, rng):
        x = crandn(rng, 100)
        assert measure_sinr(x, x) == SINR_CAP_DB
        assert measure_evm(x, x) == -SINR_CAP_DB

    def test_known_snr(self, rng):
        ref = np.exp(2j * np.pi * rng.random(10_000))
        rx = ref + crandn(rng, 10_000) * 0.1
        assert measure_sinr(rx, ref) == pytest.approx(20.0, abs=0.3)

    def test_gain_invariance(self, rng):
        ref = np.exp(2j * np.pi * rng.random(10_000))
        noise = crandn(rng, 10_000) * 0.1
        g = 2 * np.exp(1j * np.pi / 3)
        a = measure_sinr(ref + noise, ref)
        b = measure_sinr(g * ref + g * noise, ref)
        assert b == pytest.approx(a, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            measure_sinr(np.ones(3), np.zeros(3))
        with pytest.raises(ValueError):
            measure_sinr(np.ones(3), np.ones(4))

    def test_report_serialization(self):
        r = MetricsReport("x", sinr_db=np.array([[1.0, 2.0]]), scatter=[np.array([1 + 2j])],
                          summary={"a": float("inf")})
        d = json.loads(r.to_json())
        assert d["scatter"] == [[[1.0, 2.0]]]
        assert d["summary"]["a"] == "inf"
        assert ("sinr_db", 0, 1, 2.0) in list(r.rows())


class TestBudgets:
    def test_dynamic_range(self):
        assert dynamic_range_budget(1) == 0.0
        assert dynamic_range_budget(32) == pytest.approx(30.103, abs=5e-4)
        assert dynamic_range_budget(128) == pytest.approx(42.144, abs=5e-4)
        with pytest.raises(ValueError):
            dynamic_range_budget(0)

    def test_drift(self):
        t, ph = drift_phase_budget(1, 4e-6, 2.4e9)
        assert t == pytest.approx(4e-12) and ph == pytest.approx(3.456)
        assert drift_phase_budget(0, 4e-6, 2.4e9) == (0.0, 0.0)
        t, ph = drift_phase_budget(10, 4e-6, 1e9)
        assert t == pytest.approx(4e-11) and ph == pytest.approx(14.4)
        with pytest.raises(ValueError):
            drift_phase_budget(-1, 4e-6, 1e9)


class TestSync:
    def test_impairment_free(self):
        cfg = default_config("sync-accuracy", n_trials=20).impairment_free()
        assert run_sync_accuracy(cfg).summary["std_deg"] < 0.01

    def test_bracket(self):
        r = run_sync_accuracy(default_config("sync-accuracy"))
        assert 1.5 <= r.summary["std_deg"] <= 3.5
        assert r.summary["n_samples"] == r.phase_error_deg.size

    def test_monotone_in_phase_noise(self):
        stds = [run_sync_accuracy(default_config("sync-accuracy", phase_noise_std_deg=s)).summary["std_deg"]
                for s in (0.05, 0.15, 0.5)]
        assert stds[0] < stds[1] < stds[2]

    def test_trace(self):
        trace = []
        run_sync_accuracy(default_config("sync-accuracy", n_trials=2), trace=trace)
        assert trace and all(len(row) == 6 for row in trace)

    def test_needs_secondary(self):
        with pytest.raises(ValueError):
            run_sync_accuracy(default_config("sync-accuracy", n_aps=1))


def bf_oracle_db(std_deg):
    # E|1 + e^{j theta}|^2 / 2 = 1 + E cos(theta), theta ~ N(0, s^2)
    s = np.deg2rad(std_deg)
    return 10 * np.log10(1 + np.exp(-s * s / 2))


class TestBeamforming:
    def test_perfect(self):
        cfg = default_config("beamforming", sync_model="ideal", perfect_csi=True)
        assert run_beamforming(cfg).summary["gain_db"] == pytest.approx(10 * np.log10(2), abs=0.01)

    def test_jitter(self):
        r = run_beamforming(default_config("beamforming", perfect_csi=True))
        assert r.summary["gain_db"] >= 2.95
        assert r.summary["gain_db"] == pytest.approx(bf_oracle_db(2.37), abs=0.01)

    def test_quadrature(self):
        cfg = default_config("beamforming", fixed_phase_error_deg=90.0, perfect_csi=True, n_trials=100)
        assert run_beamforming(cfg).summary["gain_db"] == pytest.approx(0.0, abs=1e-9)


class TestLeakage:
    def test_perfect(self):
        cfg = default_config("leakage", sync_model="ideal", perfect_csi=True)
        assert run_leakage(cfg).summary["mean_leakage_db"] < -100

    def test_fixed_10deg(self):
        cfg = default_config("leakage", fixed_phase_error_deg=10.0, perfect_csi=True)
        closed = 10 * np.log10(2 * (1 - np.cos(np.deg2rad(10))) / 2)
        assert run_leakage(cfg).summary["mean_leakage_db"] == pytest.approx(closed, abs=0.1)

    def test_monotone(self):
        vals = [run_leakage(default_config("leakage", phase_error_std_deg=s)).summary["mean_leakage_db"]
                for s in (1.0, 3.0, 10.0)]
        assert vals[0] < vals[1] < vals[2]


class TestZfbf:
    def test_impairment_free(self):
        cfg = default_config("zfbf-2x2").impairment_free()
        r = run_zfbf_2x2(cfg)
        assert r.sinr_db.shape == (cfg.n_trials, 2)
        for kk in range(2):
            assert r.summary[f"sinr_db_user{kk}"] == pytest.approx(cfg.snr_db, abs=0.2)

    def test_impairment_free_flat_per_trial(self):
        # One tap: every subcarrier has the same post-precoding SNR, so each
        # trial's estimate only carries sampling noise.
        cfg = default_config("zfbf-2x2", n_taps=1).impairment_free()
        assert np.all(np.abs(run_zfbf_2x2(cfg).sinr_db - cfg.snr_db) < 0.5)

    def test_measured_sinr_replay(self):
        assert shannon_sum_rate([29, 26]) == pytest.approx(18.28, abs=0.05)

    def test_zero_symbol_errors(self):
        # 20 trials x 50 slot symbols x 40 data bins = 4e4 symbols per user
        cfg = default_config("zfbf-2x2", n_taps=1, snr_db=26.0).impairment_free()
        r = run_zfbf_2x2(cfg)
        assert np.all(r.sinr_db >= 25.0)
        assert r.summary["symbol_error_rate"] == 0.0

    def test_multiplexing_gain_grows(self):
        g = [run_zfbf_2x2(default_config("zfbf-2x2", snr_db=s).impairment_free()).summary["multiplexing_gain"]
             for s in (20.0, 40.0, 60.0)]
        assert g[0] < g[1] < g[2] < 2.0

    def test_finite_report(self):
        r = run_zfbf_2x2(default_config("zfbf-2x2", n_trials=3))
        assert np.all(np.isfinite(r.sinr_db)) and np.all(np.isfinite(r.rates))
        assert np.allclose(r.evm_db, -r.sinr_db)


class TestThp:
    def test_impairment_free(self):
        cfg = default_config("thp-4x4", snr_db=40.0).impairment_free()
        r = run_thp_4x4(cfg)
        assert r.summary["practical_sum_rate"] == 16.0
        assert r.summary["symbol_error_rate"] == 0.0
        assert len(r.scatter) == 4

    def test_measured_sinr_replay(self):
        assert shannon_sum_rate([16.8, 19.2, 21.4, 20.8]) == pytest.approx(26.0, abs=0.1)

    def test_more_streams_more_leakage(self):
        base = dict(sync_model="gaussian", perfect_csi=True, n_trials=30)
        two = run_thp_4x4(default_config("thp-4x4", n_aps=2, n_clients=2, **base))
        four = run_thp_4x4(default_config("thp-4x4", **base))
        assert four.summary["mean_sinr_db"] < two.summary["mean_sinr_db"]


@pytest.mark.parametrize("name", list(RUNNERS))
def test_deterministic_across_workers(name):
    cfg = default_config(name, n_trials=4, seed=11)
    a = RUNNERS[name](cfg).to_json()
    b = RUNNERS[name](cfg, workers=2).to_json()
    assert a == b


def test_seed_changes_output():
    a = run_leakage(default_config("leakage", n_trials=5, seed=1))
    b = run_leakage(default_config("leakage", n_trials=5, seed=2))
    assert not np.array_equal(a.leakage_db, b.leakage_db)
