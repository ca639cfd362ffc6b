"""
Phase alignment of a secondary AP
=================================

A secondary AP listens to the master's pilots, tracks the relative phase
per subcarrier and predicts it a few symbols ahead. Here we look at the
residual error after correction and how it grows with oscillator noise.
"""

import numpy as np
import matplotlib.pyplot as plt

from dmimo.harness import default_config, run_sync_accuracy

cfg = default_config("sync-accuracy")
report = run_sync_accuracy(cfg)
print(f"residual std {report.summary['std_deg']:.2f} deg, "
      f"95th percentile {report.summary['p95_abs_deg']:.2f} deg")

# empirical CDF of the absolute error
err = np.sort(np.abs(report.phase_error_deg))
cdf = np.arange(1, err.size + 1) / err.size

# more phase noise, wider error
levels = [0.05, 0.15, 0.5, 1.0]
stds = [run_sync_accuracy(cfg.replace(phase_noise_std_deg=s)).summary["std_deg"] for s in levels]

fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
axes[0].plot(err, cdf)
axes[0].set_xlabel("|phase error| (deg)")
axes[0].set_ylabel("CDF")
axes[1].plot(levels, stds, "o-")
axes[1].set_xlabel("phase noise per symbol (deg)")
axes[1].set_ylabel("residual std (deg)")
fig.tight_layout()
fig.savefig("sync_tracking.png")
