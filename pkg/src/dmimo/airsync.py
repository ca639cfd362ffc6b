"""Pilot-based phase tracking for secondary transmitters.

A secondary AP observes the master's pilot tones through its own receive
chain. The observed phase on subcarrier ``n`` is

    2 pi (tau_master - tau_i) n / N + phi_master(t) - phi_i(t) + angle(H_i(n))

i.e. a line in ``n`` that drifts linearly in ``t``. The tracker estimates
it per subcarrier from a probing header, follows the drift with a short
moving-average slope filter and extrapolates it ``d`` symbols ahead. The
secondary derotates its frequency-domain symbols by the prediction, which
puts it on the master's carrier up to the constant ``angle(H_i(n))``.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .numerics import line_fit, unwrap_phase, wrap_phase

__all__ = [
    "SLOPE_WINDOW",
    "DEFAULT_LOOKAHEAD",
    "PhaseTrackerState",
    "PhaseCorrection",
    "initial_estimate",
    "track",
    "predict",
    "apply_correction",
    "calibrated_fit",
    "fitted_phases",
]

SLOPE_WINDOW = 4
DEFAULT_LOOKAHEAD = 4


@dataclass
class PhaseCorrection:
    """Derotation angles (radians) for ``subcarriers``, valid at ``valid_at``."""

    angles: np.ndarray
    subcarriers: np.ndarray
    valid_at: float


@dataclass
class PhaseTrackerState:
    """Running phase estimate of one secondary AP.

    ``phase[i]`` is the unwrapped estimate for bin ``subcarriers[i]`` at
    symbol ``t_last``. Pilots are the entries listed in ``pilot_positions``;
    the others follow the common drift measured on the pilots.
    """

    subcarriers: np.ndarray
    phase: np.ndarray
    pilot_positions: np.ndarray
    t_last: float = 0.0
    lookahead: int = DEFAULT_LOOKAHEAD
    calibration: Optional[np.ndarray] = None
    slope_window: deque = field(default_factory=lambda: deque(maxlen=SLOPE_WINDOW))
    record: bool = False
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.subcarriers = np.asarray(self.subcarriers, dtype=int)
        self.phase = np.asarray(self.phase, dtype=float).copy()
        self.pilot_positions = np.asarray(self.pilot_positions, dtype=int)
        if self.phase.shape != self.subcarriers.shape:
            raise ValueError("one phase per subcarrier required")
        if self.lookahead < 0:
            raise ValueError("lookahead must be non-negative")

    @classmethod
    def from_header(
        cls,
        subcarriers: Sequence[int],
        phases,
        pilot_subcarriers: Sequence[int],
        t0: float = 0.0,
        lookahead: int = DEFAULT_LOOKAHEAD,
        record: bool = False,
    ) -> "PhaseTrackerState":
        """Start tracking from a header estimate taken at symbol ``t0``."""
        subcarriers = np.asarray(subcarriers, dtype=int)
        lookup = {int(s): i for i, s in enumerate(subcarriers)}
        try:
            pos = np.array([lookup[int(p)] for p in pilot_subcarriers], dtype=int)
        except KeyError as exc:
            raise ValueError(f"pilot {exc} not covered by the header estimate") from None
        return cls(subcarriers, phases, pos, t_last=t0, lookahead=lookahead, record=record)

    @property
    def pilot_subcarriers(self) -> np.ndarray:
        return self.subcarriers[self.pilot_positions]

    @property
    def slope(self) -> float:
        """Smoothed phase drift in radians per OFDM symbol."""
        if not self.slope_window:
            return 0.0
        return float(np.mean(self.slope_window))

    def track(self, pilot_phases, t: float) -> "PhaseTrackerState":
        return track(self, pilot_phases, t)

    def predict(self, t_now: Optional[float] = None, d: Optional[int] = None) -> PhaseCorrection:
        return predict(self, t_now, d)


def initial_estimate(received: Sequence, known, subcarriers: Optional[Sequence[int]] = None) -> np.ndarray:
    """Per-subcarrier phase of ``received / known`` from header symbols.

    Multiple header symbols are combined by a circular mean. Returns angles
    in ``(-pi, pi]`` for ``subcarriers`` (all bins if omitted).
    """
    rx = np.atleast_2d(np.asarray(received, dtype=complex))
    known = np.asarray(known, dtype=complex)
    if rx.shape[0] < 1:
        raise ValueError("need at least one header symbol")
    if rx.shape[-1] != known.shape[-1]:
        raise ValueError("header length mismatch")
    idx = np.arange(known.size) if subcarriers is None else np.asarray(subcarriers, dtype=int)
    ref = known[idx]
    if np.any(ref == 0):
        raise ValueError("known header is zero on a requested subcarrier")
    ratio = rx[:, idx] / ref
    # Normalize per symbol so weak symbols do not dominate the mean.
    mag = np.abs(ratio)
    unit = np.divide(ratio, mag, out=np.zeros_like(ratio), where=mag > 0)
    return np.angle(unit.sum(axis=0))


def track(state: PhaseTrackerState, pilot_phases, t: float) -> PhaseTrackerState:
    """Fold one pilot observation taken at symbol ``t`` into ``state``."""
    meas = np.asarray(pilot_phases, dtype=float)
    if meas.shape != state.pilot_positions.shape:
        raise ValueError("one phase per tracked pilot required")
    dt = t - state.t_last
    if dt <= 0:
        raise ValueError("updates must be strictly increasing in t")
    prev = state.phase[state.pilot_positions]
    inc = wrap_phase(meas - prev)
    common = float(np.angle(np.exp(1j * inc).sum()))
    state.slope_window.append(common / dt)

    others = np.ones(state.phase.size, dtype=bool)
    others[state.pilot_positions] = False
    state.phase[others] += common
    state.phase[state.pilot_positions] = prev + inc
    state.t_last = t
    if state.record:
        state.trace.append((t, meas.copy(), state.slope))
    return state


def predict(state: PhaseTrackerState, t_now: Optional[float] = None, d: Optional[int] = None) -> PhaseCorrection:
    """Linearly extrapolate the estimate to symbol ``t_now + d``."""
    if state.phase.size == 0:
        raise ValueError("tracker holds no estimate")
    t_now = state.t_last if t_now is None else t_now
    d = state.lookahead if d is None else d
    horizon = (t_now - state.t_last) + d
    angles = state.phase + state.slope * horizon
    return PhaseCorrection(angles, state.subcarriers.copy(), t_now + d)


def apply_correction(x, corr: PhaseCorrection) -> np.ndarray:
    """Rotate ``x[n]`` by ``exp(+j corr(n))`` on the corrected bins.

    ``x`` may carry leading dimensions; the last axis is the subcarrier axis.
    """
    x = np.asarray(x, dtype=complex)
    angles = np.asarray(corr.angles, dtype=float)
    sc = np.asarray(corr.subcarriers, dtype=int)
    if angles.shape != sc.shape:
        raise ValueError("correction angles and subcarriers differ in length")
    if sc.size and (sc.min() < 0 or sc.max() >= x.shape[-1]):
        raise ValueError("correction does not fit the symbol length")
    out = x.copy()
    out[..., sc] = x[..., sc] * np.exp(1j * angles)
    return out


def calibrated_fit(phases, calibration, subcarriers) -> Tuple[float, float]:
    """Fit ``slope * n + intercept`` to channel-compensated pilot phases.

    The calibrated channel phase is subtracted, the result unwrapped along
    the subcarrier index, and a least-squares line fitted. The slope is in
    radians per subcarrier (``2 pi (tau_master - tau_i) / N``); the
    intercept is wrapped to ``(-pi, pi]``.

    Unwrapping assumes adjacent pilots differ by less than ``pi``. Its
    variance is the usual OLS one, so pilots far from bin 0 extrapolate
    the intercept and pay for it.
    """
    phases = np.asarray(phases, dtype=float)
    cal = np.asarray(calibration, dtype=float)
    n = np.asarray(subcarriers, dtype=float)
    if not (phases.shape == cal.shape == n.shape):
        raise ValueError("phases, calibration and subcarriers must align")
    if n.size < 2:
        raise ValueError("need at least two pilots")
    order = np.argsort(n)
    resid = unwrap_phase(wrap_phase(phases[order] - cal[order]))
    slope, intercept = line_fit(n[order], resid)
    return slope, float(wrap_phase(intercept))


def fitted_phases(slope: float, intercept: float, subcarriers, calibration=None) -> np.ndarray:
    """Evaluate a calibrated fit back on ``subcarriers``."""
    n = np.asarray(subcarriers, dtype=float)
    out = slope * n + intercept
    if calibration is not None:
        out = out + np.asarray(calibration, dtype=float)
    return out
