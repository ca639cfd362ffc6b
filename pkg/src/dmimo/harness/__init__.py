"""Simulation harness: configuration, experiment runners and metrics."""

from .budgets import drift_phase_budget, dynamic_range_budget
from .config import EXPERIMENTS, ExperimentConfig, default_config
from .metrics import SINR_CAP_DB, TRACE_COLUMNS, MetricsReport, measure_evm, measure_sinr, write_trace_csv
from .runners import run_beamforming, run_leakage, run_sync_accuracy, run_thp_4x4, run_zfbf_2x2

RUNNERS = {
    "sync-accuracy": run_sync_accuracy,
    "beamforming": run_beamforming,
    "leakage": run_leakage,
    "zfbf-2x2": run_zfbf_2x2,
    "thp-4x4": run_thp_4x4,
}
