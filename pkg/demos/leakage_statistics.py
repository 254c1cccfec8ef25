"""
How much does a zero-forcing beam leak when the channel direction is only
known through a few feedback bits?

This walk-through draws RVQ feedback for Rayleigh channels, measures the
leakage of zero-forcing beams directly, and compares it with the
analytical CDFs of the normalized leakage V and the full leakage D. It
then turns percentiles of D into the leakage caps used by the robust
schemes.

Run with ``python3 demos/leakage_statistics.py``.
"""

import numpy as np

from leakbeam import SystemConfig, make_rng
from leakbeam.channel import eta, generate_channel, quantize_channel
from leakbeam.leakage import (
    cdf_D,
    cdf_V,
    percentile_D,
    simulate_zf_leakage,
    threshold_malc,
    threshold_ralc,
)

N, B = 4, 6
n = 50_000

# 1. Mean leakage. A unit ZF beam leaks eta/(N-1) on average in the
#    normalized sense; with Rayleigh fading the channel power adds a factor N.
v, d = simulate_zf_leakage(N, B, n, make_rng(0, 3))
print(f"eta({N},{B}) = {eta(N, B):.6f}")
print(f"mean V: simulated {v.mean():.5f}, predicted {eta(N, B) / (N - 1):.5f}")
print(f"mean D: simulated {d.mean():.5f}, predicted {N * eta(N, B) / (N - 1):.5f}")

# 2. Whole distributions. The closed forms are evaluated in exact
#    arithmetic, so they can be compared point by point with the samples.
print("\n     x    P_V(x)  empirical |     x    P_D(x)  empirical")
v_sorted, d_sorted = np.sort(v), np.sort(d)
for xv, xd in zip(np.linspace(0, 0.3, 7), np.linspace(0, 1.5, 7)):
    ev = np.searchsorted(v_sorted, xv, side="right") / n
    ed = np.searchsorted(d_sorted, xd, side="right") / n
    print(f"{xv:6.3f}  {cdf_V(xv, N, B):8.5f}  {ev:8.5f}  | {xd:6.3f}  "
          f"{cdf_D(xd, N, B):8.5f}  {ed:8.5f}")

# 3. From statistics to caps. MALC pins each UE's expected leakage to the
#    ZF minimum; RALC relaxes it to the delta-percentile of D.
cfg = SystemConfig()
csi = quantize_channel(generate_channel(cfg, make_rng(0, 0, 0)), cfg)
P_tilde = cfg.P / cfg.K
print(f"\nper-UE power {P_tilde:g}, three interfered UEs")
print(f"MALC cap : {threshold_malc(P_tilde, csi, 0):.4f}")
for delta in (0.7, 0.8, 0.9):
    print(f"RALC cap at delta={delta}: {threshold_ralc(P_tilde, csi, 0, delta):.4f} "
          f"(P_D^-1 = {percentile_D(delta, N, B):.5f})")
