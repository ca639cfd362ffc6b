"""Experiment runners.

Every trial draws from ``trial_rng(cfg.seed, trial_index)`` and trials are
merged in index order, so a report depends only on the configuration.

The two-AP experiments (beamforming, leakage) work per subcarrier in the
frequency domain and model the residual synchronization error directly.
The downlink experiments (ZFBF, THP) run the full time-domain chain: the
master's probing header and pilots, phase tracking at every secondary AP,
channel estimation at the clients and precoded data.
"""

from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Optional

import numpy as np

from ..airsync import SLOPE_WINDOW, PhaseTrackerState, initial_estimate, predict, track
from ..channel import ChannelRealization, NodeClock, awgn, generate_channel, phase_trajectory, propagate, transmit_slot
from ..mac import MCS_TABLE
from ..numerics import wrap_phase
from ..ofdm import demodulate_slot, modulate_slot
from ..precoding import THP_TAU, build_thp, build_zfbf, modulo_tau, qam_map, qam_nearest, thp_precode
from ..seeding import trial_rng
from .config import ExperimentConfig, default_config
from .metrics import SINR_CAP_DB, MetricsReport, measure_sinr

__all__ = [
    "run_sync_accuracy",
    "run_beamforming",
    "run_leakage",
    "run_zfbf_2x2",
    "run_thp_4x4",
]

_POWER_FLOOR = 1e-30
_SCATTER_POINTS = 1000


# --- shared plumbing ------------------------------------------------------


def _map_trials(fn: Callable, cfg: ExperimentConfig, workers: int = 1) -> list:
    idx = range(cfg.n_trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, idx))
    return [fn(i) for i in idx]


def _noise_var(snr_db: float) -> float:
    return 0.0 if np.isposinf(snr_db) else 10.0 ** (-snr_db / 10.0)


def _draw_clock(cfg: ExperimentConfig, rng: np.random.Generator) -> NodeClock:
    lo, hi = cfg.timing_offset_range
    flo, fhi = cfg.freq_offset_range
    return NodeClock(
        timing_offset=int(rng.integers(int(lo), int(hi) + 1)),
        initial_phase=float(rng.uniform(-np.pi, np.pi)),
        freq_offset=float(rng.uniform(flo, fhi)) if fhi > flo else float(flo),
        phase_noise_std=float(np.deg2rad(cfg.phase_noise_std_deg)),
        phase_noise_model=cfg.phase_noise_model,
    )


def _qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=shape)))


def _phase_error(cfg: ExperimentConfig, rng: np.random.Generator) -> float:
    """Residual phase error (rad) of a secondary for the two-AP runners."""
    if cfg.sync_model == "ideal":
        return 0.0
    if cfg.fixed_phase_error_deg is not None:
        return float(np.deg2rad(cfg.fixed_phase_error_deg))
    return float(np.deg2rad(cfg.phase_error_std_deg) * rng.standard_normal())


def _master_frame(cfg: ExperimentConfig, rng: np.random.Generator, n_symbols: int):
    """Master's header and pilots; returns ``(X, header, pilot_values)``."""
    ofdm = cfg.ofdm
    used = ofdm.used_subcarriers
    pil = np.array(ofdm.pilot_subcarriers)
    header = np.zeros(ofdm.n_fft, dtype=complex)
    header[used] = _qpsk(rng, used.size)
    pilots = np.where(rng.integers(0, 2, size=(n_symbols, pil.size)) == 1, 1.0, -1.0).astype(complex)
    pilots[: cfg.header_symbols] = header[pil]
    x = np.zeros((n_symbols, ofdm.n_fft), dtype=complex)
    x[: cfg.header_symbols] = header
    x[:, pil] = pilots
    return x, header, pilots


def _ap_link(cfg: ExperimentConfig, rng: np.random.Generator, m: int):
    """Master-to-AP links: a line-of-sight path on top of multipath.

    The Rician factor keeps deep fades rare on the fixed AP-to-AP links.
    """
    link = generate_channel(rng, 1, m, cfg.n_taps, cfg.ofdm, cfg.delay_decay)
    kf = 10.0 ** (cfg.link_k_factor_db / 10.0)
    taps = link.taps / np.sqrt(1.0 + kf)
    taps[..., 0] += np.sqrt(kf / (1.0 + kf)) * np.exp(1j * rng.uniform(-np.pi, np.pi, size=(1, m)))
    return ChannelRealization(taps, cfg.ofdm.n_fft)


def _relative_phase(cfg, master: NodeClock, sec: NodeClock, phi_m, phi_s, link_gain):
    """True phase (rad) the secondary must add, shape ``(T, n_fft)``."""
    n = np.arange(cfg.ofdm.n_fft)
    adv = master.timing_offset - sec.timing_offset
    ramp = 2.0 * np.pi * adv * n / cfg.ofdm.n_fft + np.angle(link_gain)
    return ramp[None, :] + (phi_m - phi_s)[:, None]


def _secondary_rx(cfg, rng, stream, master, sec, phi_m, phi_s, taps, n_symbols):
    """Master's frame as demodulated by a secondary AP."""
    adv = master.timing_offset - sec.timing_offset
    rx = propagate(cfg.ofdm, stream, taps, adv, phi_m[:n_symbols], -phi_s[:n_symbols])
    var = _noise_var(cfg.pilot_snr_db)
    if var > 0:
        rx = rx + awgn(rng, rx.size, var)
    return demodulate_slot(cfg.ofdm, rx, n_symbols, cfg.fft_backoff)


def _track_secondary(cfg, y, header, pilots, n_tx: int, trace: Optional[list] = None, truth=None):
    """Run the tracker on demodulated master symbols ``y``.

    Returns per-symbol correction angles on the used subcarriers, shape
    ``(n_tx, n_used)``. The correction for symbol ``t`` only uses
    observations up to ``t - lookahead``.
    """
    ofdm = cfg.ofdm
    used = ofdm.used_subcarriers
    pil = np.array(ofdm.pilot_subcarriers)
    hs = cfg.header_symbols
    d = cfg.lookahead
    est = initial_estimate(y[:hs], header, used)
    state = PhaseTrackerState.from_header(used, est, pil, t0=(hs - 1) / 2.0, lookahead=d)
    pil_pos = state.pilot_positions
    angles = np.zeros((n_tx, used.size))
    for t in range(hs, n_tx):
        s = t - d
        tracked = s >= hs and (s - hs) % cfg.update_period == 0
        if tracked:
            meas = np.angle(y[s, pil] / pilots[s])
            track(state, meas, s)
        corr = predict(state, t_now=state.t_last, d=t - state.t_last)
        angles[t] = corr.angles
        if tracked and trace is not None:
            resid = wrap_phase(corr.angles[pil_pos] - truth[t, pil])
            for j, p in enumerate(pil):
                trace.append((s, int(p), float(meas[j]), state.slope, float(corr.angles[pil_pos[j]]), float(resid[j])))
    return angles


def _report(experiment: str, cfg: ExperimentConfig, **kw) -> MetricsReport:
    return MetricsReport(experiment=experiment, config=cfg.to_dict(), **kw)


# --- synchronization accuracy --------------------------------------------


def _sync_trial(cfg: ExperimentConfig, index: int, trace: Optional[list] = None) -> np.ndarray:
    rng = trial_rng(cfg.seed, index)
    ofdm = cfg.ofdm
    hs = cfg.header_symbols
    n_sym = hs + cfg.slot_symbols
    d = cfg.lookahead
    data = np.array(ofdm.data_subcarriers)

    master, sec = _draw_clock(cfg, rng), _draw_clock(cfg, rng)
    link = _ap_link(cfg, rng, 1)
    phi_m = phase_trajectory(master, n_sym + d, rng)
    phi_s = phase_trajectory(sec, n_sym + d, rng)

    x, header, pilots = _master_frame(cfg, rng, n_sym)
    x[hs:, data] = _qpsk(rng, (n_sym - hs, data.size))
    y = _secondary_rx(cfg, rng, modulate_slot(ofdm, x), master, sec, phi_m, phi_s, link.taps[0, 0], n_sym)
    truth = _relative_phase(cfg, master, sec, phi_m, phi_s, link.freq_response[:, 0, 0])

    angles = _track_secondary(cfg, y, header, pilots, n_sym, trace, truth)
    used = ofdm.used_subcarriers
    data_pos = np.searchsorted(used, data)
    # Score once the slope window has filled.
    first = hs + d + SLOPE_WINDOW * cfg.update_period
    err = wrap_phase(angles[first:, data_pos] - truth[first:n_sym, data])
    return np.rad2deg(err).ravel()


def run_sync_accuracy(cfg: Optional[ExperimentConfig] = None, workers: int = 1, trace: Optional[list] = None) -> MetricsReport:
    """Post-correction phase error of a secondary AP against the master.

    Each trial is one slot: header, then pilot tracking with look-ahead
    prediction. The error is scored per data subcarrier and symbol against
    the true relative phase (including the AP-to-AP channel phase, which
    the correction deliberately carries). Pass a list as ``trace`` to
    collect per-pilot tracker rows of the first trial.
    """
    cfg = cfg or default_config("sync-accuracy")
    if cfg.n_aps < 2:
        raise ValueError("sync accuracy needs a secondary AP")
    if workers > 1 and trace is None:
        parts = _map_trials(partial(_sync_trial, cfg), cfg, workers)
    else:
        parts = [_sync_trial(cfg, i, trace if i == 0 else None) for i in range(cfg.n_trials)]
    err = np.concatenate(parts)
    summary = {
        "std_deg": float(np.std(err)),
        "mean_deg": float(np.mean(err)),
        "p95_abs_deg": float(np.percentile(np.abs(err), 95)),
        "n_samples": int(err.size),
    }
    return _report("sync-accuracy", cfg, phase_error_deg=err, summary=summary)


# --- two-AP tone experiments ---------------------------------------------


def _tone_setup(cfg: ExperimentConfig, rng: np.random.Generator):
    """True and estimated gains of two single-antenna APs to one client."""
    ofdm = cfg.ofdm
    data = np.array(ofdm.data_subcarriers)
    g = generate_channel(rng, 2, 1, cfg.n_taps, ofdm, cfg.delay_decay).freq_response[data][:, :, 0]
    if cfg.perfect_csi:
        g_hat = g
    else:
        g_hat = g + awgn(rng, g.shape, _noise_var(cfg.snr_db) / cfg.est_symbols)
    theta = _phase_error(cfg, rng)
    # Equal received amplitudes with unit total transmit power per subcarrier.
    inv = 1.0 / np.abs(g_hat) ** 2
    c = 1.0 / np.sqrt(inv.sum(axis=1, keepdims=True))
    w = c * g_hat.conj() * inv
    r = g * w
    r[:, 1] *= np.exp(1j * theta)
    return r


def _beam_trial(cfg: ExperimentConfig, index: int):
    r = _tone_setup(cfg, trial_rng(cfg.seed, index))
    # The joint transmission splits one transmission's power over both APs.
    joint = np.abs(r.sum(axis=1)) ** 2 / 2.0
    single = (np.abs(r) ** 2).mean(axis=1)
    return float(joint.sum()), float(single.sum())


def run_beamforming(cfg: Optional[ExperimentConfig] = None, workers: int = 1) -> MetricsReport:
    """Coherent combining gain of two APs at one client.

    Both APs are weighted so their tones arrive with equal amplitude and
    aligned phase; the secondary carries a residual phase error. The gain
    compares the received power of the joint transmission to the mean
    power of the individual ones at equal total transmit power, so perfect
    alignment gives ``10 log10 2`` dB. ``summary["gain_db"]`` is the ratio
    of average powers over all trials.
    """
    cfg = cfg or default_config("beamforming")
    res = np.array(_map_trials(partial(_beam_trial, cfg), cfg, workers))
    per_trial = 10.0 * np.log10(res[:, 0] / res[:, 1])
    gain = 10.0 * np.log10(res[:, 0].sum() / res[:, 1].sum())
    return _report("beamforming", cfg, gain_db=per_trial, summary={"gain_db": float(gain)})


def _leak_trial(cfg: ExperimentConfig, index: int) -> float:
    r = _tone_setup(cfg, trial_rng(cfg.seed, index))
    r[:, 1] *= -1.0
    resid = np.abs(r.sum(axis=1)) ** 2
    ref = (np.abs(r) ** 2).sum(axis=1)
    return float(max(resid.sum() / ref.sum(), _POWER_FLOOR))


def run_leakage(cfg: Optional[ExperimentConfig] = None, workers: int = 1) -> MetricsReport:
    """Residual power when two tones are set to cancel at a client.

    Leakage is the residual power relative to the total power of the two
    tones as received individually; with unit-gain links this is the total
    transmit power. A phase error ``theta`` leaves ``1 - cos(theta)``.
    """
    cfg = cfg or default_config("leakage")
    lin = np.array(_map_trials(partial(_leak_trial, cfg), cfg, workers))
    db = 10.0 * np.log10(lin)
    summary = {
        "mean_leakage_db": float(10.0 * np.log10(lin.mean())),
        "median_leakage_db": float(np.median(db)),
    }
    return _report("leakage", cfg, leakage_db=db, summary=summary)


# --- full downlink chain --------------------------------------------------


def _unit_qam_tau(order: int) -> float:
    # Grid side that gives the QAM unit average energy.
    return float(np.sqrt(6.0 / (1.0 - 1.0 / order)))


def _min_snr_for(order: int) -> float:
    return min(e.min_snr_db for e in MCS_TABLE if e.order == order)


def _common_phase(z: np.ndarray, ref: np.ndarray, enabled: bool = True) -> np.ndarray:
    if not enabled:
        return np.zeros(z.shape[:-1])
    return np.angle((z * ref.conj()).sum(axis=-1))


def _over_the_air(cfg, g, ap_clocks, cl_clocks, x, angles, snr_db, rng, ap_ph, cl_ph) -> np.ndarray:
    """Correct, modulate, send and demodulate ``(M, T, n_fft)`` symbols."""
    ofdm = cfg.ofdm
    x = x.copy()
    x[:, :, ofdm.used_subcarriers] *= np.exp(1j * angles)
    streams = modulate_slot(ofdm, x)
    rx = transmit_slot(ofdm, g, ap_clocks, cl_clocks, streams, snr_db, rng, ap_ph, cl_ph)
    return demodulate_slot(ofdm, rx, x.shape[1], cfg.fft_backoff)


def _thp_sinr(rx: np.ndarray, virtual: np.ndarray, tau: float) -> float:
    # The lattice offsets in the virtual points carry no power at the
    # transmitter, so the signal power is that of the tau-square.
    v = np.ravel(virtual)
    r = np.ravel(rx)
    g = np.vdot(v, r) / np.vdot(v, v).real
    err = np.mean(np.abs(r - g * v) ** 2)
    sig = abs(g) ** 2 * tau ** 2 / 6.0
    if err <= sig * 10.0 ** (-SINR_CAP_DB / 10.0):
        return SINR_CAP_DB
    return float(10.0 * np.log10(sig / err))


def _downlink_trial(cfg: ExperimentConfig, scheme: str, index: int) -> dict:
    rng = trial_rng(cfg.seed, index)
    ofdm = cfg.ofdm
    m, k = cfg.n_aps, cfg.n_clients
    if k > m:
        raise ValueError("more clients than AP antennas")
    data = np.array(ofdm.data_subcarriers)
    pil = np.array(ofdm.pilot_subcarriers)
    used = ofdm.used_subcarriers
    data_pos = np.searchsorted(used, data)
    nd = data.size
    hs, es, ds, d = cfg.header_symbols, cfg.est_symbols, cfg.slot_symbols, cfg.lookahead
    t_est = hs + cfg.warmup_symbols
    t_dat = t_est + es * m
    n_sym = t_dat + ds
    order = cfg.qam_order

    ap_clocks = [_draw_clock(cfg, rng) for _ in range(m)]
    cl_clocks = [_draw_clock(cfg, rng) for _ in range(k)]
    ap_ph = np.array([phase_trajectory(c, n_sym + d, rng) for c in ap_clocks])
    cl_ph = np.array([phase_trajectory(c, n_sym + d, rng) for c in cl_clocks])
    g = generate_channel(rng, m, k, cfg.n_taps, ofdm, cfg.delay_decay)
    link = _ap_link(cfg, rng, m)

    # Noise floor per client so that the ideal post-precoding SNR,
    # averaged over data subcarriers, equals cfg.snr_db.
    q = np.full(k, 1.0 / k)
    g_true = g.freq_response[data]
    if scheme == "zf":
        gains = np.array([build_zfbf(h.conj()).lam for h in g_true])
    else:
        gains = np.array([build_thp(h.conj()).l_diag ** 2 for h in g_true])
    noise_var = _noise_var(cfg.snr_db) / np.mean(1.0 / (gains * q), axis=0)
    with np.errstate(divide="ignore"):
        client_snr = -10.0 * np.log10(noise_var)

    # Secondary APs derive their corrections from the master's frame.
    x0, header, pilots = _master_frame(cfg, rng, n_sym)
    master_stream = modulate_slot(ofdm, x0)
    angles = np.zeros((m, n_sym, used.size))
    sync_err = []
    for i in range(1, m):
        truth = _relative_phase(cfg, ap_clocks[0], ap_clocks[i], ap_ph[0], ap_ph[i], link.freq_response[:, 0, i])
        if cfg.sync_model == "tracker":
            y = _secondary_rx(cfg, rng, master_stream, ap_clocks[0], ap_clocks[i], ap_ph[0], ap_ph[i],
                              link.taps[0, i], n_sym)
            angles[i] = _track_secondary(cfg, y, header, pilots, n_sym)
        else:
            angles[i] = truth[:n_sym, used] + _phase_error(cfg, rng)
        err = wrap_phase(angles[i, t_est:][:, data_pos] - truth[t_est:n_sym][:, data])
        sync_err.append(np.rad2deg(err).ravel())

    # Channel sounding: AP i sends known QPSK in its own block.
    xa = np.zeros((m, t_dat, ofdm.n_fft), dtype=complex)
    xa[0] = x0[:t_dat]
    sound = _qpsk(rng, (m, es, nd))
    for i in range(m):
        xa[i][t_est + i * es:t_est + (i + 1) * es, data] = sound[i]
    ya = _over_the_air(cfg, g, ap_clocks, cl_clocks, xa, angles[:, :t_dat],
                       None if cfg.perfect_csi else client_snr, rng, ap_ph[:, :t_dat], cl_ph[:, :t_dat])

    # Clients remove their common phase drift using the master's pilots,
    # referenced to the sounding block.
    za = ya[:, :, pil] / pilots[:t_dat]
    est = slice(t_est, t_dat)
    c1 = _common_phase(za[:, est], za[:, t_est:t_est + 1])
    ref = (za[:, est] * np.exp(-1j * c1)[..., None]).mean(axis=1)[:, None]
    c_a = _common_phase(za, ref, cfg.client_phase_tracking)
    g_hat = np.zeros((nd, m, k), dtype=complex)
    for i in range(m):
        rows = slice(t_est + i * es, t_est + (i + 1) * es)
        yk = ya[:, rows][:, :, data] * np.exp(-1j * c_a[:, rows])[..., None]
        g_hat[:, i, :] = (yk / sound[i]).mean(axis=1).T

    # Data symbols and precoding per subcarrier.
    tau = _unit_qam_tau(order) if scheme == "zf" else THP_TAU
    bps = int(np.log2(order))
    bits = rng.integers(0, 2, size=(k, ds, nd, bps))
    u = qam_map(bits, order, tau).reshape(k, ds, nd)
    xb = np.zeros((m, ds, ofdm.n_fft), dtype=complex)
    xb[0][:, pil] = pilots[t_dat:]
    scale = np.zeros((nd, k))
    virtual = np.zeros((k, ds, nd), dtype=complex)
    for j in range(nd):
        h = g_hat[j].conj()
        if scheme == "zf":
            pre = build_zfbf(h)
            xb[:, :, data[j]] = pre.precode(u[:, :, j], q)
            scale[j] = np.sqrt(pre.lam * q)
        else:
            pre = build_thp(h)
            uh = thp_precode(u[:, :, j], pre, q)
            xb[:, :, data[j]] = pre.q_mat @ uh
            scale[j] = pre.l_diag * np.sqrt(q)
            virtual[pre.order, :, j] = (pre.l_mat @ uh) / scale[j][pre.order, None]
    yb = _over_the_air(cfg, g, ap_clocks, cl_clocks, xb, angles[:, t_dat:], client_snr, rng,
                       ap_ph[:, t_dat:n_sym], cl_ph[:, t_dat:n_sym])
    c_b = _common_phase(yb[:, :, pil] / pilots[t_dat:], ref, cfg.client_phase_tracking)
    rx = yb[:, :, data] * np.exp(-1j * c_b)[..., None] / scale.T[:, None, :]

    sinr = np.zeros(k)
    sym_err = np.zeros(k, dtype=int)
    scatter = []
    for kk in range(k):
        if scheme == "zf":
            dec = rx[kk]
            sinr[kk] = measure_sinr(rx[kk], u[kk])
        else:
            dec = modulo_tau(rx[kk], tau)
            sinr[kk] = _thp_sinr(rx[kk], virtual[kk], tau)
        ti, tq = qam_nearest(u[kk], order, tau)
        ri, rq = qam_nearest(dec, order, tau)
        sym_err[kk] = int(np.count_nonzero((ti != ri) | (tq != rq)))
        scatter.append(np.ravel(dec)[:_SCATTER_POINTS])

    # Best single link: one AP to one client at full power.
    link_snr = np.mean(np.abs(g_true) ** 2, axis=0) / np.where(noise_var > 0, noise_var, np.nan)
    best = float(np.nanmax(link_snr)) if np.isfinite(link_snr).any() else np.inf
    return {
        "sinr_db": sinr,
        "sym_err": sym_err,
        "n_symbols": ds * nd,
        "sync_err": np.concatenate(sync_err) if sync_err else np.zeros(0),
        "best_link_snr_db": 10.0 * np.log10(best),
        "scatter": scatter,
    }


def _downlink_report(experiment: str, scheme: str, cfg: ExperimentConfig, workers: int) -> MetricsReport:
    res = _map_trials(partial(_downlink_trial, cfg, scheme), cfg, workers)
    sinr = np.array([r["sinr_db"] for r in res])
    rates = np.log2(1.0 + 10.0 ** (sinr / 10.0)).sum(axis=1)
    need = _min_snr_for(cfg.qam_order)
    practical = (sinr >= need).sum(axis=1) * np.log2(cfg.qam_order)
    best_rate = np.log2(1.0 + 10.0 ** (np.array([r["best_link_snr_db"] for r in res]) / 10.0))
    sync = np.concatenate([r["sync_err"] for r in res])
    n_sym = sum(r["n_symbols"] for r in res) * cfg.n_clients
    summary = {
        "mean_sinr_db": float(sinr.mean()),
        "sum_rate": float(rates.mean()),
        "practical_sum_rate": float(practical.mean()),
        "best_link_rate": float(best_rate.mean()),
        "multiplexing_gain": float(np.mean(rates / best_rate)),
        "symbol_error_rate": float(sum(r["sym_err"].sum() for r in res) / n_sym),
        "sync_error_std_deg": float(np.std(sync)) if sync.size else 0.0,
    }
    for kk in range(cfg.n_clients):
        summary[f"sinr_db_user{kk}"] = float(sinr[:, kk].mean())
    return _report(experiment, cfg, phase_error_deg=sync, sinr_db=sinr, evm_db=-sinr, rates=rates,
                   scatter=res[0]["scatter"], summary=summary)


def run_zfbf_2x2(cfg: Optional[ExperimentConfig] = None, workers: int = 1) -> MetricsReport:
    """Two APs serve two clients with zero-forcing beamforming.

    Per trial: synchronization, channel sounding, ZF precoding on the
    estimated channels and unit-energy QAM data. Streams get equal power.
    The per-client SINR is measured after a least-squares gain fit.
    """
    return _downlink_report("zfbf-2x2", "zf", cfg or default_config("zfbf-2x2"), workers)


def run_thp_4x4(cfg: Optional[ExperimentConfig] = None, workers: int = 1) -> MetricsReport:
    """Four APs serve four clients with Tomlinson-Harashima precoding.

    QAM lives in the modulo square. The SINR is measured before the
    receiver's modulo, against the virtual point the encoder aimed at, so
    it reflects noise and residual interference rather than wrap-arounds.
    """
    return _downlink_report("thp-4x4", "thp", cfg or default_config("thp-4x4"), workers)
