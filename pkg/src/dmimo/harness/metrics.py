"""Link metrics and report serialization."""

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

__all__ = [
    "SINR_CAP_DB",
    "measure_sinr",
    "measure_evm",
    "MetricsReport",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

SINR_CAP_DB = 100.0


def measure_sinr(received, reference) -> float:
    """SINR in dB after a least-squares complex gain fit.

    ``g = <ref, rx> / <ref, ref>``; the SINR is ``|g|^2 ||ref||^2`` over
    ``||rx - g ref||^2``, capped at ``SINR_CAP_DB``.
    """
    rx = np.ravel(np.asarray(received, dtype=complex))
    ref = np.ravel(np.asarray(reference, dtype=complex))
    if rx.shape != ref.shape:
        raise ValueError("received and reference differ in length")
    p_ref = float(np.vdot(ref, ref).real)
    if p_ref <= 0:
        raise ValueError("reference has zero power")
    g = np.vdot(ref, rx) / p_ref
    err = float(np.sum(np.abs(rx - g * ref) ** 2))
    sig = abs(g) ** 2 * p_ref
    if err <= sig * 10.0 ** (-SINR_CAP_DB / 10.0):
        return SINR_CAP_DB
    return float(10.0 * np.log10(sig / err))


def measure_evm(received, reference) -> float:
    """Error vector magnitude in dB; the negative of :func:`measure_sinr`."""
    return -measure_sinr(received, reference)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        if np.iscomplexobj(v):
            return np.stack([v.real, v.imag], axis=-1).tolist()
        return v.tolist()
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


@dataclass
class MetricsReport:
    """Samples and summary values of one experiment run.

    Sample arrays are flat except ``sinr_db`` and ``evm_db``, which are
    ``(n_trials, n_users)``. ``scatter`` holds received constellation points
    per user.
    """

    experiment: str
    phase_error_deg: np.ndarray = field(default_factory=lambda: np.zeros(0))
    leakage_db: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gain_db: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sinr_db: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    evm_db: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scatter: List[np.ndarray] = field(default_factory=list)
    summary: Dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable({
            "experiment": self.experiment,
            "summary": self.summary,
            "config": self.config,
            "phase_error_deg": self.phase_error_deg,
            "leakage_db": self.leakage_db,
            "gain_db": self.gain_db,
            "sinr_db": self.sinr_db,
            "evm_db": self.evm_db,
            "rates": self.rates,
            "scatter": self.scatter,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    def rows(self):
        """Long-format sample rows ``(metric, trial, user, value)``."""
        for name in ("phase_error_deg", "leakage_db", "gain_db", "rates"):
            for i, v in enumerate(np.ravel(getattr(self, name))):
                yield name, i, "", float(v)
        for name in ("sinr_db", "evm_db"):
            arr = getattr(self, name)
            for (t, u), v in np.ndenumerate(arr):
                yield name, t, u, float(v)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "trial", "user", "value"])
            for row in self.rows():
                w.writerow(row)


TRACE_COLUMNS = ("t", "pilot", "raw_phase", "slope", "correction", "residual")


def write_trace_csv(path, rows) -> None:
    """Write tracker trace rows (see ``TRACE_COLUMNS``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow(r)
