"""Multipath channels, oscillator impairments and the effective channel.

Conventions
-----------
``ChannelRealization.freq_response[n]`` is the ``M x K`` matrix ``G(n)``
whose entry ``[i, k]`` is the complex gain from transmit antenna ``i`` to
user ``k``; user ``k`` receives ``sum_i G[i, k] x_i``. The precoders in
:mod:`dmimo.precoding` use the ``y = H^H x`` form, so pass ``G.conj()``.

Timing offsets are integer sample counts. A positive offset advances a
node's waveform relative to the nominal receive window, which shows up on
subcarrier ``n`` as the factor ``exp(j 2 pi offset n / N)``.
"""

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ofdm import OfdmConfig, apply_fir

__all__ = [
    "DEFAULT_PHASE_NOISE_STD",
    "NodeClock",
    "ChannelRealization",
    "EffectiveChannel",
    "sample_phase",
    "phase_trajectory",
    "generate_channel",
    "effective_matrix",
    "propagate",
    "transmit_slot",
    "awgn",
]

# Random-walk step per OFDM symbol. Tuned so the end-to-end tracker error of
# the sync-accuracy experiment lands in the low single degrees; not measured.
DEFAULT_PHASE_NOISE_STD = float(np.deg2rad(0.15))


@dataclass(frozen=True)
class NodeClock:
    """Timing and carrier impairments of one node.

    ``freq_offset`` is the carrier offset normalized to the OFDM symbol
    rate, so the carrier phase advances by ``2 pi freq_offset`` per symbol.
    ``phase_noise_std`` is in radians: the per-symbol step of a random walk,
    or the per-symbol standard deviation of white jitter.
    """

    timing_offset: int = 0
    initial_phase: float = 0.0
    freq_offset: float = 0.0
    phase_noise_std: float = 0.0
    phase_noise_model: str = "random_walk"

    def __post_init__(self):
        if int(self.timing_offset) != self.timing_offset:
            raise ValueError("timing_offset must be an integer number of samples")
        object.__setattr__(self, "timing_offset", int(self.timing_offset))
        if self.phase_noise_std < 0:
            raise ValueError("phase_noise_std must be non-negative")
        if self.phase_noise_model not in ("white", "random_walk"):
            raise ValueError(f"unknown phase noise model {self.phase_noise_model!r}")

    @classmethod
    def from_carrier(cls, carrier_hz: float, nominal_hz: float, cfg: OfdmConfig, **kw) -> "NodeClock":
        """Build a clock from an absolute carrier frequency."""
        delta = (carrier_hz - nominal_hz) * cfg.symbol_len * cfg.sample_period
        return cls(freq_offset=delta, **kw)


def sample_phase(clock: NodeClock, t: int, rng: Optional[np.random.Generator] = None) -> float:
    """Draw the carrier phase of ``clock`` at OFDM symbol ``t``.

    For the random-walk model this samples the marginal at ``t`` only; use
    :func:`phase_trajectory` when a consistent path is needed.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    phi = clock.initial_phase + 2.0 * np.pi * clock.freq_offset * t
    if clock.phase_noise_std > 0:
        if rng is None:
            raise ValueError("rng required for a noisy clock")
        scale = clock.phase_noise_std
        if clock.phase_noise_model == "random_walk":
            scale *= np.sqrt(t)
        phi += scale * rng.standard_normal()
    return float(phi)


def phase_trajectory(clock: NodeClock, n_symbols: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Carrier phase at symbols ``0 .. n_symbols - 1``."""
    t = np.arange(n_symbols)
    phi = clock.initial_phase + 2.0 * np.pi * clock.freq_offset * t
    if clock.phase_noise_std > 0:
        if rng is None:
            raise ValueError("rng required for a noisy clock")
        w = clock.phase_noise_std * rng.standard_normal(n_symbols)
        if clock.phase_noise_model == "random_walk":
            w[0] = 0.0
            w = np.cumsum(w)
        phi = phi + w
    return phi


@dataclass
class ChannelRealization:
    """Impulse responses of every transmit-antenna / user link.

    Attributes
    ----------
    taps : np.ndarray, shape (M, K, n_taps)
    n_fft : int
    """

    taps: np.ndarray
    n_fft: int

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=complex)
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (M, K, n_taps)")
        self._freq = None

    @property
    def m_tx(self) -> int:
        return self.taps.shape[0]

    @property
    def k_users(self) -> int:
        return self.taps.shape[1]

    @property
    def n_taps(self) -> int:
        return self.taps.shape[2]

    @property
    def freq_response(self) -> np.ndarray:
        """Per-subcarrier gain matrices, shape ``(n_fft, M, K)``."""
        if self._freq is None:
            g = np.fft.fft(self.taps, n=self.n_fft, axis=-1)
            self._freq = np.moveaxis(g, -1, 0)
        return self._freq

    def to_dict(self) -> dict:
        return {
            "n_fft": self.n_fft,
            "shape": list(self.taps.shape),
            "taps": np.stack([self.taps.real, self.taps.imag], axis=-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelRealization":
        arr = np.asarray(d["taps"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], int(d["n_fft"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ChannelRealization":
        return cls.from_dict(json.loads(s))


def generate_channel(
    rng: np.random.Generator,
    m_tx: int,
    k_users: int,
    n_taps: int = 1,
    cfg: Optional[OfdmConfig] = None,
    decay: float = 2.0,
) -> ChannelRealization:
    """Draw an i.i.d. Rayleigh multipath channel.

    Each link has ``n_taps`` circularly-symmetric Gaussian taps whose mean
    powers follow ``exp(-l / decay)`` normalized to unit total power.
    """
    cfg = cfg or OfdmConfig()
    if n_taps < 1:
        raise ValueError("n_taps must be at least 1")
    if n_taps > cfg.cp_len + 1:
        raise ValueError(f"channel of {n_taps} taps exceeds cyclic prefix of {cfg.cp_len}")
    profile = np.exp(-np.arange(n_taps) / decay) if decay > 0 else np.eye(1, n_taps)[0]
    profile = profile / profile.sum()
    shape = (m_tx, k_users, n_taps)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelRealization(g * np.sqrt(profile), cfg.n_fft)


def _phasors(clocks: Sequence[NodeClock], phases, n: int, n_fft: int) -> np.ndarray:
    offs = np.array([c.timing_offset for c in clocks], dtype=float)
    return np.exp(1j * (2.0 * np.pi * offs * n / n_fft + np.asarray(phases, dtype=float)))


def effective_matrix(
    h: ChannelRealization,
    ap_clocks: Sequence[NodeClock],
    client_clocks: Sequence[NodeClock],
    n: int,
    t: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Effective gain matrix ``Phi(n;t) G(n) Theta(n;t)`` at symbol ``t``.

    Phases are drawn with :func:`sample_phase`; use :class:`EffectiveChannel`
    to evaluate along a fixed phase path.
    """
    if len(ap_clocks) != h.m_tx or len(client_clocks) != h.k_users:
        raise ValueError("clock lists do not match channel dimensions")
    phi = [sample_phase(c, t, rng) for c in ap_clocks]
    theta = [sample_phase(c, t, rng) for c in client_clocks]
    left = _phasors(ap_clocks, phi, n, h.n_fft)
    right = _phasors(client_clocks, theta, n, h.n_fft)
    return left[:, None] * h.freq_response[n] * right[None, :]


class EffectiveChannel:
    """Effective channel along fixed phase trajectories.

    ``ap_phases`` has shape ``(M, T)`` and ``client_phases`` ``(K, T)``.
    """

    def __init__(self, h: ChannelRealization, ap_clocks, client_clocks, ap_phases, client_phases):
        if len(ap_clocks) != h.m_tx or len(client_clocks) != h.k_users:
            raise ValueError("clock lists do not match channel dimensions")
        self.h = h
        self.ap_clocks = list(ap_clocks)
        self.client_clocks = list(client_clocks)
        self.ap_phases = np.asarray(ap_phases, dtype=float)
        self.client_phases = np.asarray(client_phases, dtype=float)

    def __call__(self, n: int, t: int) -> np.ndarray:
        left = _phasors(self.ap_clocks, self.ap_phases[:, t], n, self.h.n_fft)
        right = _phasors(self.client_clocks, self.client_phases[:, t], n, self.h.n_fft)
        return left[:, None] * self.h.freq_response[n] * right[None, :]


def _per_symbol(phases, n_samples: int, symbol_len: int) -> np.ndarray:
    idx = np.arange(n_samples) // symbol_len
    phases = np.asarray(phases, dtype=float)
    if idx[-1] >= phases.shape[-1]:
        raise ValueError("phase trajectory shorter than the slot")
    return np.exp(1j * phases[..., idx])


def _advance(z: np.ndarray, a: int, n_out: int) -> np.ndarray:
    """``out[m] = z[m + a]`` with zeros outside ``z``."""
    out = np.zeros(n_out, dtype=complex)
    lo = max(0, -a)
    hi = min(n_out, z.size - a)
    if hi > lo:
        out[lo:hi] = z[lo + a:hi + a]
    return out


def propagate(cfg: OfdmConfig, x, taps, advance: int = 0, tx_phases=None, rx_phases=None) -> np.ndarray:
    """Pass one transmitter's stream through one link, without noise.

    The transmit oscillator phase (per OFDM symbol) is applied before the
    multipath channel, then the stream is advanced by ``advance`` samples
    and rotated by the receive-side phase.
    """
    x = np.asarray(x, dtype=complex)
    n = x.size
    if tx_phases is not None:
        x = x * _per_symbol(tx_phases, n, cfg.symbol_len)
    z = apply_fir(x, taps)
    out = _advance(z, int(advance), n)
    if rx_phases is not None:
        out = out * _per_symbol(rx_phases, n, cfg.symbol_len)
    return out


def awgn(rng: np.random.Generator, shape, power: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise of the given power."""
    return np.sqrt(power / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit_slot(
    cfg: OfdmConfig,
    h: ChannelRealization,
    ap_clocks: Sequence[NodeClock],
    client_clocks: Sequence[NodeClock],
    ap_slots,
    snr_db,
    rng: np.random.Generator,
    ap_phases=None,
    client_phases=None,
) -> np.ndarray:
    """Received time-domain samples at every client.

    Parameters
    ----------
    ap_slots : array_like, shape (M, n_samples)
        Time-domain stream of each transmit antenna.
    snr_db : float or sequence of float or None
        Per-client SNR relative to unit total transmit power; the noise
        variance per complex sample is ``10 ** (-snr_db / 10)``. ``None`` or
        ``inf`` disables noise.
    ap_phases, client_phases : array_like, optional
        Carrier phase per OFDM symbol, shapes ``(M, T)`` and ``(K, T)``.
        Sampled from the clocks with ``rng`` when omitted.

    Returns
    -------
    np.ndarray, shape (K, n_samples)
    """
    x = np.asarray(ap_slots, dtype=complex)
    if x.ndim != 2 or x.shape[0] != h.m_tx:
        raise ValueError(f"expected {h.m_tx} AP streams")
    if len(ap_clocks) != h.m_tx or len(client_clocks) != h.k_users:
        raise ValueError("clock lists do not match channel dimensions")
    n = x.shape[1]
    n_sym = -(-n // cfg.symbol_len)
    if ap_phases is None:
        ap_phases = np.array([phase_trajectory(c, n_sym, rng) for c in ap_clocks])
    if client_phases is None:
        client_phases = np.array([phase_trajectory(c, n_sym, rng) for c in client_clocks])
    ap_phases = np.asarray(ap_phases, dtype=float)
    client_phases = np.asarray(client_phases, dtype=float)

    rx = np.zeros((h.k_users, n), dtype=complex)
    for i, ap in enumerate(ap_clocks):
        xi = x[i] * _per_symbol(ap_phases[i], n, cfg.symbol_len)
        for k, cl in enumerate(client_clocks):
            z = apply_fir(xi, h.taps[i, k])
            rx[k] += _advance(z, ap.timing_offset + cl.timing_offset, n)
    for k in range(h.k_users):
        rx[k] *= _per_symbol(client_phases[k], n, cfg.symbol_len)

    if snr_db is not None:
        snr = np.broadcast_to(np.asarray(snr_db, dtype=float), (h.k_users,))
        for k in range(h.k_users):
            if np.isfinite(snr[k]):
                rx[k] += awgn(rng, n, 10.0 ** (-snr[k] / 10.0))
    return rx
