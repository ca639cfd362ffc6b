"""
Coherent gain and nulling depth
===============================

Two APs send the same tone to one client. Aligned, the powers add to a
3 dB gain; flipped, the tones cancel. A residual phase error eats into
both, and the nulling side is far more sensitive.
"""

import numpy as np
import matplotlib.pyplot as plt

from dmimo.harness import default_config, run_beamforming, run_leakage

errs = np.array([0.0, 2.37, 5.0, 10.0, 20.0, 45.0])

gain = []
leak = []
for e in errs:
    bf = default_config("beamforming", n_trials=2000, perfect_csi=True, fixed_phase_error_deg=float(e))
    lk = default_config("leakage", perfect_csi=True, fixed_phase_error_deg=float(e))
    gain.append(run_beamforming(bf).summary["gain_db"])
    leak.append(run_leakage(lk).summary["mean_leakage_db"])

theta = np.deg2rad(errs)
gain_closed = 10 * np.log10(1 + np.cos(theta))
with np.errstate(divide="ignore"):
    leak_closed = 10 * np.log10(1 - np.cos(theta))

for e, g, l in zip(errs, gain, leak):
    print(f"{e:5.2f} deg: gain {g:5.2f} dB, leakage {l:7.2f} dB")

fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
axes[0].plot(errs, gain, "o", label="simulated")
axes[0].plot(errs, gain_closed, "-", label="1 + cos")
axes[0].set_ylabel("beamforming gain (dB)")
axes[1].plot(errs[1:], leak[1:], "o", label="simulated")
axes[1].plot(errs[1:], leak_closed[1:], "-", label="1 - cos")
axes[1].set_ylabel("leakage (dB)")
for ax in axes:
    ax.set_xlabel("phase error (deg)")
    ax.legend()
fig.tight_layout()
fig.savefig("beamforming_and_leakage.png")
