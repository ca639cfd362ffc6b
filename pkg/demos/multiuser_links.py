"""
Zero-forcing and Tomlinson-Harashima downlinks
==============================================

Full slot simulations: sounding, phase tracking at the secondaries,
precoding per subcarrier, and QAM-16 over a multipath channel. We print
per-user SINR and rates and plot the received constellations.
"""

import matplotlib.pyplot as plt

from dmimo.harness import default_config, run_thp_4x4, run_zfbf_2x2

zf = run_zfbf_2x2(default_config("zfbf-2x2"))
thp = run_thp_4x4(default_config("thp-4x4", snr_db=35.0))

for name, r in (("ZF 2x2", zf), ("THP 4x4", thp)):
    s = r.summary
    users = ", ".join(f"{s[k]:.1f}" for k in sorted(s) if k.startswith("sinr_db_user"))
    print(f"{name}: SINR [{users}] dB, Shannon {s['sum_rate']:.1f}, "
          f"practical {s['practical_sum_rate']:.1f} bps/Hz, "
          f"gain over best link {s['multiplexing_gain']:.2f}")

# THP points are shown after the receiver's modulo fold
fig, axes = plt.subplots(2, 4, figsize=(11, 5.5))
for ax, pts in zip(axes[0], zf.scatter):
    ax.plot(pts.real, pts.imag, ".", ms=1)
for ax in axes[0, len(zf.scatter):]:
    ax.axis("off")
for ax, pts in zip(axes[1], thp.scatter):
    ax.plot(pts.real, pts.imag, ".", ms=1)
for ax in axes.ravel():
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
axes[0, 0].set_title("ZF")
axes[1, 0].set_title("THP")
fig.tight_layout()
fig.savefig("multiuser_links.png")
