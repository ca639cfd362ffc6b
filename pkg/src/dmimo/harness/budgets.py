"""Back-of-the-envelope budgets for a secondary AP."""

from typing import Tuple

import numpy as np

__all__ = ["dynamic_range_budget", "drift_phase_budget"]


def dynamic_range_budget(alpha: float) -> float:
    """Excess power (dB) of the AP's own signal over the master's pilots.

    ``alpha`` is how many times closer the receive antenna is to the AP's
    own transmit antenna than to the master's, under free-space loss.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return float(10.0 * np.log10(alpha ** 2))


def drift_phase_budget(drift_ppm: float, frame_duration: float, carrier_hz: float) -> Tuple[float, float]:
    """Clock drift over one frame and the carrier phase it costs.

    Returns ``(time_drift_seconds, phase_degrees)``.
    """
    if drift_ppm < 0 or frame_duration <= 0 or carrier_hz <= 0:
        raise ValueError("drift must be non-negative, duration and carrier positive")
    drift = drift_ppm * 1e-6 * frame_duration
    return drift, drift * carrier_hz * 360.0
