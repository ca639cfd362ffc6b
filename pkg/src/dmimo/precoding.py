"""Zero-forcing and Tomlinson-Harashima precoding.

All precoders use the downlink model ``y = H^H x + z`` with ``H`` of shape
``M x K`` (transmit antennas by users). Rates are in bits/s/Hz.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import qr_tall, zf_pseudo_inverse

__all__ = [
    "THP_TAU",
    "SHAPING_LOSS_BITS",
    "ZfbfPrecoder",
    "ThpPrecoder",
    "PowerAllocation",
    "build_zfbf",
    "build_thp",
    "waterfill",
    "zfbf_sum_rate",
    "shannon_sum_rate",
    "modulo_tau",
    "thp_precode",
    "thp_encode",
    "thp_decode",
    "thp_sum_rate",
    "qam_constellation",
    "qam_map",
    "qam_demap",
    "qam_nearest",
]

# With tau = sqrt(6) a uniform variable on the tau-square has unit power.
THP_TAU = float(np.sqrt(6.0))
SHAPING_LOSS_BITS = float(np.log2(np.pi * np.e / 6.0))


@dataclass
class ZfbfPrecoder:
    """Unit-norm beamforming columns ``v`` and effective gains ``lam``."""

    v: np.ndarray
    lam: np.ndarray

    def precode(self, u, alloc=None) -> np.ndarray:
        """``x = V diag(sqrt(q)) u`` for symbol vectors along axis 0."""
        u = np.asarray(u, dtype=complex)
        if alloc is not None:
            q = _powers(alloc)
            u = np.sqrt(q).reshape((-1,) + (1,) * (u.ndim - 1)) * u
        return self.v @ u


@dataclass
class ThpPrecoder:
    """QR-based THP in the precoding order ``order``.

    ``q_mat`` and ``l_mat`` refer to the permuted users: row ``k`` of
    ``l_mat`` belongs to user ``order[k]``.
    """

    q_mat: np.ndarray
    l_mat: np.ndarray
    order: np.ndarray
    tau: float = THP_TAU

    @property
    def l_diag(self) -> np.ndarray:
        """Diagonal gains indexed by original user."""
        out = np.empty(self.order.size)
        out[self.order] = np.real(np.diagonal(self.l_mat))
        return out


@dataclass
class PowerAllocation:
    q: np.ndarray
    sum_power: float

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)


def _powers(alloc) -> np.ndarray:
    if isinstance(alloc, PowerAllocation):
        return alloc.q
    return np.asarray(alloc, dtype=float)


def build_zfbf(h) -> ZfbfPrecoder:
    """Column-normalized pseudo-inverse precoder.

    ``H^H V = diag(sqrt(lam))`` with ``lam_k = 1 / [(H^H H)^{-1}]_kk``.
    """
    w = zf_pseudo_inverse(h)
    norms = np.linalg.norm(w, axis=0)
    return ZfbfPrecoder(w / norms, 1.0 / norms ** 2)


def waterfill(lam, snr: float) -> PowerAllocation:
    """Maximize ``sum log2(1 + lam_k q_k)`` subject to ``sum q_k = snr``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("channel gains must be positive")
    if snr <= 0:
        return PowerAllocation(np.zeros_like(lam), float(snr))
    inv = 1.0 / lam
    order = np.argsort(inv)
    s = inv[order]
    # Largest active set whose water level stays above its weakest member.
    csum = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    mu = (snr + csum) / k
    active = np.nonzero(mu > s)[0][-1] + 1
    level = mu[active - 1]
    q = np.maximum(level - inv, 0.0)
    return PowerAllocation(q, float(snr))


def zfbf_sum_rate(lam, alloc) -> float:
    """``sum log2(1 + lam_k q_k)``."""
    lam = np.asarray(lam, dtype=float)
    q = _powers(alloc)
    if lam.shape != q.shape:
        raise ValueError("gains and powers differ in length")
    return float(np.sum(np.log2(1.0 + lam * q)))


def shannon_sum_rate(sinr_db: Sequence[float]) -> float:
    """Sum of ``log2(1 + SINR)`` over streams given in dB."""
    s = 10.0 ** (np.asarray(sinr_db, dtype=float) / 10.0)
    return zfbf_sum_rate(s, np.ones_like(s))


def modulo_tau(s, tau: float = THP_TAU):
    """Reduce ``s`` onto the square ``(-tau/2, tau/2]`` in both axes."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    s = np.asarray(s, dtype=complex)

    def fold(v):
        return v - tau * np.ceil(v / tau - 0.5)

    out = fold(s.real) + 1j * fold(s.imag)
    return out if out.ndim else complex(out)


def build_thp(h, order: Optional[Sequence[int]] = None, tau: float = THP_TAU) -> ThpPrecoder:
    """QR-factor ``H`` (columns permuted by ``order``) for THP."""
    h = np.asarray(h, dtype=complex)
    k = h.shape[1]
    order = np.arange(k) if order is None else np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(k)):
        raise ValueError("order must be a permutation of the users")
    q, r = qr_tall(h[:, order])
    return ThpPrecoder(q, r.conj().T, order, float(tau))


def thp_precode(u, pre: ThpPrecoder, alloc) -> np.ndarray:
    """Successive interference pre-cancellation with the modulo.

    Parameters
    ----------
    u : array_like, shape (K,) or (K, S)
        Data symbols indexed by original user, inside the tau-square.

    Returns
    -------
    np.ndarray
        Precoded symbols ``u_hat`` in precoding order, same shape as ``u``.
    """
    u = np.asarray(u, dtype=complex)
    q = _powers(alloc)
    k = pre.order.size
    if u.shape[0] != k or q.size != k:
        raise ValueError("symbol or power vector does not match the precoder")
    up = u[pre.order]
    qp = q[pre.order]
    lmat = pre.l_mat
    out = np.zeros_like(up)
    for i in range(k):
        sq = np.sqrt(qp[i])
        if sq == 0:
            continue
        interf = np.tensordot(lmat[i, :i], out[:i], axes=(0, 0)) if i else 0.0
        out[i] = sq * modulo_tau(up[i] - interf / (lmat[i, i].real * sq), pre.tau)
    return out


def thp_encode(u, pre: ThpPrecoder, alloc) -> np.ndarray:
    """Transmit vector ``x = Q u_hat`` for data ``u``."""
    return pre.q_mat @ thp_precode(u, pre, alloc)


def thp_decode(y, l_kk: float, q_k: float, tau: float = THP_TAU):
    """Receiver side: scale by ``1 / (l_kk sqrt(q_k))`` and fold."""
    if l_kk <= 0 or q_k <= 0:
        raise ValueError("gain and power must be positive")
    return modulo_tau(np.asarray(y) / (l_kk * np.sqrt(q_k)), tau)


def thp_sum_rate(l_diag, alloc) -> float:
    """THP rate with the shaping loss, clamped at zero per stream."""
    g = np.abs(np.asarray(l_diag, dtype=complex)) ** 2
    q = _powers(alloc)
    if g.shape != q.shape:
        raise ValueError("gains and powers differ in length")
    per = np.log2(1.0 + g * q) - SHAPING_LOSS_BITS
    return float(np.sum(np.maximum(per, 0.0)))


# --- QAM inscribed in the tau-square -------------------------------------

_VALID_ORDERS = (4, 16, 64, 256)


def _side(order: int) -> int:
    if order not in _VALID_ORDERS:
        raise ValueError(f"unsupported QAM order {order}")
    return int(round(np.sqrt(order)))


def _levels(order: int, tau: float) -> np.ndarray:
    m = _side(order)
    return (tau / m) * (np.arange(m) + 0.5) - tau / 2.0


def qam_constellation(order: int, tau: float = THP_TAU) -> np.ndarray:
    """All points, indexed by the integer formed from their Gray bits."""
    m = _side(order)
    nb = int(np.log2(m))
    idx = np.arange(order)
    return qam_map(((idx[:, None] >> np.arange(2 * nb - 1, -1, -1)) & 1).ravel(), order, tau)


def qam_map(bits, order: int, tau: float = THP_TAU) -> np.ndarray:
    """Gray-mapped square QAM; the first half of each bit group is I."""
    m = _side(order)
    nb = int(np.log2(m))
    bits = np.asarray(bits, dtype=int).reshape(-1, 2 * nb)
    weights = 1 << np.arange(nb - 1, -1, -1)
    gi = bits[:, :nb] @ weights
    gq = bits[:, nb:] @ weights
    lev = _levels(order, tau)
    return lev[_gray_inverse(gi)] + 1j * lev[_gray_inverse(gq)]


def qam_nearest(symbols, order: int, tau: float = THP_TAU):
    """Per-axis level index of the nearest constellation point."""
    m = _side(order)
    s = np.asarray(symbols, dtype=complex)
    step = tau / m

    def axis(v):
        return np.clip(np.floor((v + tau / 2.0) / step), 0, m - 1).astype(int)

    return axis(s.real), axis(s.imag)


def qam_demap(symbols, order: int, tau: float = THP_TAU) -> np.ndarray:
    """Hard nearest-point decision back to bits."""
    m = _side(order)
    nb = int(np.log2(m))
    ii, qq = qam_nearest(np.ravel(symbols), order, tau)
    gi = ii ^ (ii >> 1)
    gq = qq ^ (qq >> 1)
    shifts = np.arange(nb - 1, -1, -1)
    out = np.concatenate([(gi[:, None] >> shifts) & 1, (gq[:, None] >> shifts) & 1], axis=1)
    return out.ravel()


def _gray_inverse(g):
    g = np.asarray(g, dtype=int)
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b
