"""OFDM modulation with cyclic prefix.

The frequency-domain symbol lives on ``n_fft`` bins in natural FFT order
(bin 0 is DC, bins above ``n_fft // 2`` are negative frequencies).
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import fft

__all__ = [
    "OfdmConfig",
    "modulate",
    "demodulate",
    "demodulate_slot",
    "modulate_slot",
    "apply_fir",
    "subcarrier_phase_ramp",
]


def _default_data() -> tuple:
    return tuple(range(1, 21)) + tuple(range(44, 64))


def _default_pilots() -> tuple:
    # Out-of-band tones on both sides of the data band.
    return (22, 24, 26, 28, 36, 38, 40, 42)


@dataclass(frozen=True)
class OfdmConfig:
    """Numerology of one OFDM symbol.

    Attributes
    ----------
    n_fft : int
        Number of subcarriers ``N``.
    cp_len : int
        Cyclic prefix length ``L`` in samples.
    sample_period : float
        Time-domain sample spacing in seconds.
    data_subcarriers, pilot_subcarriers : tuple of int
        Disjoint bin index sets.
    """

    n_fft: int = 64
    cp_len: int = 16
    sample_period: float = 50e-9
    data_subcarriers: tuple = field(default_factory=_default_data)
    pilot_subcarriers: tuple = field(default_factory=_default_pilots)

    def __post_init__(self):
        object.__setattr__(self, "data_subcarriers", tuple(int(i) for i in self.data_subcarriers))
        object.__setattr__(self, "pilot_subcarriers", tuple(int(i) for i in self.pilot_subcarriers))
        if self.n_fft < 1:
            raise ValueError("n_fft must be positive")
        if not 0 <= self.cp_len <= self.n_fft:
            raise ValueError("cp_len must satisfy 0 <= L <= N")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        data, pilots = set(self.data_subcarriers), set(self.pilot_subcarriers)
        if data & pilots:
            raise ValueError("pilot and data subcarriers overlap")
        for idx in data | pilots:
            if not 0 <= idx < self.n_fft:
                raise ValueError(f"subcarrier index {idx} outside [0, {self.n_fft})")

    @property
    def symbol_len(self) -> int:
        """Samples per OFDM symbol including the prefix."""
        return self.n_fft + self.cp_len

    @property
    def symbol_duration(self) -> float:
        return self.symbol_len * self.sample_period

    @property
    def used_subcarriers(self) -> np.ndarray:
        return np.array(sorted(self.data_subcarriers + self.pilot_subcarriers))

    def to_dict(self) -> dict:
        return {
            "n_fft": self.n_fft,
            "cp_len": self.cp_len,
            "sample_period": self.sample_period,
            "data_subcarriers": list(self.data_subcarriers),
            "pilot_subcarriers": list(self.pilot_subcarriers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OfdmConfig":
        return cls(**d)


def modulate(cfg: OfdmConfig, x) -> np.ndarray:
    """IFFT one frequency-domain symbol and prepend the cyclic prefix."""
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != cfg.n_fft:
        raise ValueError(f"expected {cfg.n_fft} subcarriers, got {x.shape[-1]}")
    t = fft(x, inverse=True)
    if cfg.cp_len == 0:
        return t
    return np.concatenate([t[..., -cfg.cp_len:], t], axis=-1)


def modulate_slot(cfg: OfdmConfig, symbols) -> np.ndarray:
    """Modulate a ``(..., n_symbols, n_fft)`` array into one sample stream."""
    s = modulate(cfg, symbols)
    return s.reshape(s.shape[:-2] + (-1,))


def demodulate(cfg: OfdmConfig, y, window_start: int) -> np.ndarray:
    """FFT of the ``n_fft`` samples of ``y`` starting at ``window_start``."""
    y = np.asarray(y, dtype=complex)
    if window_start < 0 or window_start + cfg.n_fft > y.shape[-1]:
        raise ValueError(
            f"window [{window_start}, {window_start + cfg.n_fft}) outside "
            f"signal of length {y.shape[-1]}"
        )
    return fft(y[..., window_start:window_start + cfg.n_fft])


def demodulate_slot(cfg: OfdmConfig, y, n_symbols: int, backoff: int = 0) -> np.ndarray:
    """Demodulate consecutive symbols of a stream.

    The FFT window of each symbol starts ``backoff`` samples before the end
    of its cyclic prefix. The resulting linear phase ramp is removed, so a
    clean channel with zero timing offset demodulates identically for any
    backoff inside the prefix.

    Returns an array of shape ``(..., n_symbols, n_fft)``.
    """
    y = np.asarray(y, dtype=complex)
    if not 0 <= backoff <= cfg.cp_len:
        raise ValueError("backoff must lie inside the cyclic prefix")
    sl = cfg.symbol_len
    if n_symbols * sl > y.shape[-1]:
        raise ValueError("signal too short for the requested symbols")
    frames = y[..., : n_symbols * sl].reshape(y.shape[:-1] + (n_symbols, sl))
    start = cfg.cp_len - backoff
    out = fft(frames[..., start:start + cfg.n_fft])
    if backoff:
        out = out * subcarrier_phase_ramp(cfg.n_fft, backoff)
    return out


def subcarrier_phase_ramp(n_fft: int, advance: float) -> np.ndarray:
    """Per-bin factor ``exp(j 2 pi advance n / N)`` of an advanced signal."""
    n = np.arange(n_fft)
    return np.exp(2j * np.pi * advance * n / n_fft)


def apply_fir(y, h: Sequence[complex]) -> np.ndarray:
    """Full linear convolution of ``y`` with taps ``h``."""
    return np.convolve(np.asarray(y, dtype=complex), np.asarray(h, dtype=complex))
