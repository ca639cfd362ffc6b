"""Downlink user selection and rate models.

Three per-stream rate models map a post-precoding SINR to bits/s/Hz:

``gaussian``
    ``log2(1 + SINR)``.
``acm``
    the 802.11ac MCS table (highest entry whose threshold is met).
``ir256``
    coded-modulation capacity of uniform 256-QAM, the ideal rate of a
    rateless code on that constellation.
"""

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .numerics import RankError
from .precoding import PowerAllocation, ZfbfPrecoder, build_zfbf, waterfill
from .seeding import trial_rng

__all__ = [
    "McsEntry",
    "MCS_TABLE",
    "ScheduleDecision",
    "ConvergenceError",
    "RATE_MODELS",
    "select_mcs",
    "ir_rate_256qam",
    "stream_rates",
    "subset_rate",
    "greedy_select",
    "exhaustive_select",
    "dpc_sum_capacity",
    "SumRateTable",
    "sum_rate_curves",
]

RATE_MODELS = ("gaussian", "acm", "ir256")


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation: str
    order: int
    code_rate: Fraction
    min_snr_db: float

    @property
    def rate_bps_hz(self) -> float:
        return float(np.log2(self.order) * self.code_rate)


MCS_TABLE = (
    McsEntry(0, "BPSK", 2, Fraction(1, 2), 2.0),
    McsEntry(1, "QPSK", 4, Fraction(1, 2), 5.0),
    McsEntry(2, "QPSK", 4, Fraction(3, 4), 8.0),
    McsEntry(3, "16-QAM", 16, Fraction(1, 2), 12.0),
    McsEntry(4, "16-QAM", 16, Fraction(3, 4), 15.0),
    McsEntry(5, "64-QAM", 64, Fraction(2, 3), 18.0),
    McsEntry(6, "64-QAM", 64, Fraction(3, 4), 21.0),
    McsEntry(7, "64-QAM", 64, Fraction(5, 6), 24.0),
    McsEntry(8, "256-QAM", 256, Fraction(3, 4), 27.0),
)

_THRESHOLDS = np.array([e.min_snr_db for e in MCS_TABLE])
_RATES = np.concatenate([[0.0], [e.rate_bps_hz for e in MCS_TABLE]])


def select_mcs(sinr_db):
    """Rate of the highest MCS whose threshold is at or below ``sinr_db``."""
    s = np.asarray(sinr_db, dtype=float)
    out = _RATES[np.searchsorted(_THRESHOLDS, s, side="right")]
    return float(out) if out.ndim == 0 else out


# 16-PAM per real dimension; 256-QAM is two independent copies of it.
_PAM = np.arange(-15, 16, 2, dtype=float)
_PAM /= np.sqrt(2.0 * np.mean(_PAM ** 2))
_GH_X, _GH_W = np.polynomial.hermite.hermgauss(16)


def _pam_mi(sinr: np.ndarray) -> np.ndarray:
    """Mutual information (bits) of 16-PAM with per-dimension noise N0/2."""
    sigma2 = 0.5 / sinr
    z = np.sqrt(2.0 * sigma2)[:, None] * _GH_X[None, :]
    diff = _PAM[:, None] - _PAM[None, :]
    # arg[s, i, j, h] = -((a_i - a_j + z)^2 - z^2) / (2 sigma^2)
    d = diff[None, :, :, None]
    zz = z[:, None, None, :]
    arg = -((d + zz) ** 2 - zz ** 2) / (2.0 * sigma2[:, None, None, None])
    lse = logsumexp(arg, axis=2) / np.log(2.0)
    expect = (lse * _GH_W[None, None, :]).sum(axis=-1) / np.sqrt(np.pi)
    return np.log2(_PAM.size) - expect.mean(axis=1)


def ir_rate_256qam(sinr_db):
    """Coded-modulation capacity of uniform 256-QAM, in bits per symbol.

    Evaluated with 16-point Gauss-Hermite quadrature on the two independent
    16-PAM components.
    """
    s_db = np.asarray(sinr_db, dtype=float)
    flat = s_db.ravel()
    out = np.zeros(flat.shape)
    lin = 10.0 ** (flat / 10.0)
    finite = np.isfinite(flat) & (lin > 0)
    out[np.isposinf(flat)] = 8.0
    if np.any(finite):
        out[finite] = 2.0 * _pam_mi(lin[finite])
    out = np.clip(out, 0.0, 8.0).reshape(s_db.shape)
    return float(out) if out.ndim == 0 else out


def stream_rates(sinr, rate_model: str = "gaussian") -> np.ndarray:
    """Per-stream rate for linear SINRs under ``rate_model``."""
    sinr = np.asarray(sinr, dtype=float)
    if rate_model == "gaussian":
        return np.log2(1.0 + sinr)
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(sinr)
    if rate_model == "acm":
        return np.asarray(select_mcs(sinr_db), dtype=float)
    if rate_model == "ir256":
        return np.asarray(ir_rate_256qam(sinr_db), dtype=float)
    raise ValueError(f"unknown rate model {rate_model!r}")


@dataclass
class ScheduleDecision:
    selected_users: tuple
    precoder: Optional[ZfbfPrecoder]
    alloc: Optional[PowerAllocation]
    per_user_rate: np.ndarray
    rate_model: str
    weights: Optional[np.ndarray] = None

    @property
    def sum_rate(self) -> float:
        w = 1.0 if self.weights is None else self.weights[list(self.selected_users)]
        return float(np.sum(w * self.per_user_rate))

    @property
    def sinr(self) -> np.ndarray:
        return self.precoder.lam * self.alloc.q


def subset_rate(h, users: Sequence[int], snr: float, rate_model: str = "gaussian", weights=None):
    """ZFBF with waterfilling on ``users``; returns ``(weighted_rate, decision)``."""
    h = np.asarray(h, dtype=complex)
    users = tuple(int(u) for u in users)
    pre = build_zfbf(h[:, list(users)])
    alloc = waterfill(pre.lam, snr)
    rates = stream_rates(pre.lam * alloc.q, rate_model)
    w = None if weights is None else np.asarray(weights, dtype=float)
    dec = ScheduleDecision(users, pre, alloc, rates, rate_model, w)
    return dec.sum_rate, dec


def greedy_select(h, snr: float, rate_model: str = "gaussian", weights=None) -> ScheduleDecision:
    """Greedy ZFBF user selection.

    Adds, one at a time, the user that most increases the (weighted) sum
    rate; stops when no candidate improves it or ``M`` users are chosen.
    Ties go to the lowest user index. Candidates that would make the
    selected channel rank deficient are skipped.
    """
    h = np.asarray(h, dtype=complex)
    m, k_total = h.shape
    if k_total < 1:
        raise ValueError("need at least one user")
    chosen: list = []
    best_rate = 0.0
    best_dec = None
    while len(chosen) < min(m, k_total):
        step_rate, step_dec = best_rate, None
        for u in range(k_total):
            if u in chosen:
                continue
            try:
                r, dec = subset_rate(h, chosen + [u], snr, rate_model, weights)
            except RankError:
                continue
            if r > step_rate + 1e-12:
                step_rate, step_dec = r, dec
        if step_dec is None:
            break
        chosen = list(step_dec.selected_users)
        best_rate, best_dec = step_rate, step_dec
    if best_dec is None:
        # Nothing has positive rate; report the strongest single user.
        u = int(np.argmax(np.linalg.norm(h, axis=0)))
        _, best_dec = subset_rate(h, [u], snr, rate_model, weights)
    return best_dec


def exhaustive_select(h, snr: float, rate_model: str = "gaussian", weights=None) -> ScheduleDecision:
    """Best ZFBF subset of at most ``M`` users by full enumeration."""
    h = np.asarray(h, dtype=complex)
    m, k_total = h.shape
    best = None
    for size in range(1, min(m, k_total) + 1):
        for users in itertools.combinations(range(k_total), size):
            try:
                r, dec = subset_rate(h, users, snr, rate_model, weights)
            except RankError:
                continue
            if best is None or r > best[0]:
                best = (r, dec)
    return best[1]


def _logdet_rate(h: np.ndarray, p: np.ndarray) -> float:
    s = np.eye(h.shape[0]) + (h * p) @ h.conj().T
    return float(np.linalg.slogdet(s)[1] / np.log(2.0))


def dpc_sum_capacity(h, snr: float, tol: float = 1e-6, max_iter: int = 500, return_powers: bool = False):
    """Broadcast sum capacity under total power ``snr`` (unit noise).

    Solves the dual multiple-access problem
    ``max log2 det(I + sum_k p_k h_k h_k^H)`` over ``sum p_k = snr`` by
    sum-power iterative waterfilling. Each iterate averages the old powers
    with the waterfilling update; the averaging weight is the best of 1/K
    and a few larger steps. Iteration stops when the Frank-Wolfe duality
    gap, an upper bound on the remaining suboptimality, drops below ``tol``
    bits.
    """
    h = np.asarray(h, dtype=complex)
    m, k = h.shape
    if snr <= 0:
        return (0.0, np.zeros(k)) if return_powers else 0.0
    p = np.full(k, snr / k)
    steps = sorted({1.0, 0.5, 0.25, 0.125, 1.0 / k}, reverse=True)
    for _ in range(max_iter):
        s_inv = np.linalg.inv(np.eye(m) + (h * p) @ h.conj().T)
        a = np.real(np.einsum("ik,ij,jk->k", h.conj(), s_inv, h))
        gap = (snr * a.max() - a @ p) / np.log(2.0)
        if gap < tol:
            rate = _logdet_rate(h, p)
            return (rate, p) if return_powers else rate
        g = a / (1.0 - p * a)
        p_new = waterfill(np.maximum(g, 1e-300), snr).q
        # Averaging weight: the classic 1/K plus larger trial steps.
        cands = [p + s * (p_new - p) for s in steps]
        p = max(cands, key=lambda c: _logdet_rate(h, c))
    raise ConvergenceError(f"dual waterfilling did not converge in {max_iter} iterations")


@dataclass
class SumRateTable:
    """Sum rates per draw, shape ``(n_draws, n_snr)`` for each scheme."""

    snr_db: np.ndarray
    zf_g: np.ndarray
    zf_acm: np.ndarray
    zf_ir: np.ndarray
    dpc: np.ndarray

    COLUMNS = ("snr_db", "zf_g", "zf_acm", "zf_ir", "dpc")

    def means(self) -> np.ndarray:
        """Rows of ``(snr_db, zf_g, zf_acm, zf_ir, dpc)`` averaged over draws."""
        return np.column_stack([
            self.snr_db,
            self.zf_g.mean(axis=0),
            self.zf_acm.mean(axis=0),
            self.zf_ir.mean(axis=0),
            self.dpc.mean(axis=0),
        ])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in self.means():
                w.writerow([f"{v:.6g}" for v in row])


def _curve_draw(args):
    seed, index, k_users, m_antennas, snr_db = args
    rng = trial_rng(seed, index)
    shape = (m_antennas, k_users)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    out = np.empty((4, len(snr_db)))
    for j, s in enumerate(snr_db):
        snr = 10.0 ** (s / 10.0)
        out[0, j] = greedy_select(h, snr, "gaussian").sum_rate
        out[1, j] = greedy_select(h, snr, "acm").sum_rate
        out[2, j] = greedy_select(h, snr, "ir256").sum_rate
        out[3, j] = dpc_sum_capacity(h, snr)
    return out


def sum_rate_curves(
    k_users: int = 10,
    m_antennas: int = 4,
    snr_db: Sequence[float] = tuple(range(0, 31, 5)),
    n_draws: int = 200,
    seed: int = 0,
    workers: int = 1,
) -> SumRateTable:
    """Monte Carlo sum rate of greedy ZF under each rate model, plus DPC.

    Channels are i.i.d. unit-variance Rayleigh, flat in frequency. Draw
    ``i`` uses the stream ``trial_rng(seed, i)``.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    jobs = [(seed, i, k_users, m_antennas, snr_db) for i in range(n_draws)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_curve_draw, jobs))
    else:
        res = [_curve_draw(j) for j in jobs]
    arr = np.stack(res) if res else np.zeros((0, 4, snr_db.size))
    return SumRateTable(snr_db, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
