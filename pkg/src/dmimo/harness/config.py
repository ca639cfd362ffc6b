"""Experiment configuration and its JSON form."""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from ..ofdm import OfdmConfig

__all__ = ["ExperimentConfig", "default_config", "EXPERIMENTS"]

EXPERIMENTS = ("sync-accuracy", "beamforming", "leakage", "zfbf-2x2", "thp-4x4")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters shared by the experiment runners.

    Angles are in degrees, offsets in samples, SNRs in dB. ``snr_db`` is the
    interference-free post-precoding SNR each client would see with ideal
    CSI and synchronization; the noise floor is set per client to hit it.
    ``pilot_snr_db`` is the per-subcarrier SNR of the master's pilots at a
    secondary AP, relative to a unit-gain link; ``link_k_factor_db`` is the
    Rician factor of that master-to-AP link. With ``client_phase_tracking``
    off, clients skip the pilot-based common-phase correction.
    """

    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    n_aps: int = 2
    n_clients: int = 2
    antennas_per_ap: int = 1
    freq_offset_range: tuple = (-0.005, 0.005)
    phase_noise_std_deg: float = 0.15
    phase_noise_model: str = "random_walk"
    timing_offset_range: tuple = (-2, 2)
    snr_db: float = 30.0
    pilot_snr_db: float = 28.5
    link_k_factor_db: float = 10.0
    n_taps: int = 4
    delay_decay: float = 2.0
    header_symbols: int = 1
    warmup_symbols: int = 8
    est_symbols: int = 4
    slot_symbols: int = 50
    lookahead: int = 4
    update_period: int = 1
    fft_backoff: int = 4
    perfect_csi: bool = False
    client_phase_tracking: bool = True
    sync_model: str = "tracker"
    phase_error_std_deg: float = 2.37
    fixed_phase_error_deg: Optional[float] = None
    qam_order: int = 16
    n_trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.n_aps < 1 or self.n_clients < 1:
            raise ValueError("need at least one AP and one client")
        if self.antennas_per_ap != 1:
            raise ValueError("only single-antenna APs are simulated")
        for name in ("freq_offset_range", "timing_offset_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not ordered")
            object.__setattr__(self, name, (lo, hi))
        if self.phase_noise_std_deg < 0 or self.phase_error_std_deg < 0:
            raise ValueError("noise levels must be non-negative")
        if self.sync_model not in ("tracker", "gaussian", "ideal"):
            raise ValueError(f"unknown sync model {self.sync_model!r}")
        if not 0 <= self.fft_backoff <= self.ofdm.cp_len:
            raise ValueError("fft_backoff must lie inside the cyclic prefix")
        if self.header_symbols < 1:
            raise ValueError("need at least one header symbol")
        if self.update_period < 1 or self.lookahead < 0:
            raise ValueError("update_period >= 1 and lookahead >= 0 required")

    def replace(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def impairment_free(self) -> "ExperimentConfig":
        """Same setup without clock offsets, phase noise, CSI or pilot noise."""
        return replace(
            self,
            freq_offset_range=(0.0, 0.0),
            timing_offset_range=(0, 0),
            phase_noise_std_deg=0.0,
            phase_error_std_deg=0.0,
            fixed_phase_error_deg=None,
            perfect_csi=True,
            client_phase_tracking=False,
            pilot_snr_db=float("inf"),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ofdm"] = self.ofdm.to_dict()
        d["freq_offset_range"] = list(self.freq_offset_range)
        d["timing_offset_range"] = list(self.timing_offset_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "ofdm" in d and isinstance(d["ofdm"], dict):
            d["ofdm"] = OfdmConfig.from_dict(d["ofdm"])
        for name in ("freq_offset_range", "timing_offset_range"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, s: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(s))


_DEFAULTS = {
    "sync-accuracy": dict(n_aps=2, n_clients=1, n_trials=200),
    "beamforming": dict(n_aps=2, n_clients=1, n_trials=10_000),
    "leakage": dict(n_aps=2, n_clients=1, n_trials=1000),
    "zfbf-2x2": dict(n_aps=2, n_clients=2, n_trials=20),
    "thp-4x4": dict(n_aps=4, n_clients=4, n_trials=10),
}


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Default configuration of one experiment, with overrides applied."""
    if experiment not in _DEFAULTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    return ExperimentConfig(**{**_DEFAULTS[experiment], **overrides})
