"""
Inside the alternating power / beam optimization.

Starting from zero-forcing with per-antenna budgets, each outer iteration
solves a geometric program for the per-UE powers (by successive monomial
approximation) and then updates the beams one UE at a time under leakage
and antenna caps. This script prints both loops for one channel draw.

Run with ``python3 demos/alternating_updates.py``.
"""

import numpy as np

from leakbeam import SystemConfig
from leakbeam.beamforming import algo1
from leakbeam.channel import STREAM_SCHEME, make_rng
from leakbeam.evaluation import trial_inputs, weighted_sum_rate

cfg = SystemConfig(L_algo1=5).with_snr(15.0)
channel, csi = trial_inputs(cfg, trial=3)

for kind in ("malc", "ralc"):
    sol = algo1(csi, cfg, kind, make_rng(cfg.seed, STREAM_SCHEME, 3))
    info = sol.info
    print(f"== {kind}-pa ==")
    for l, (pd, step, best) in enumerate(zip(info["pd_traces"], info["step_metrics"][1:],
                                             info["perf_trace"][1:]), start=1):
        # pd is the relative power change of each monomial-approximation step
        steps = " ".join(f"{x:.1e}" for x in pd)
        print(f"outer {l}: surrogate {step:7.4f}  best {best:7.4f}  GP steps [{steps}]")
    print(f"start (ZF-PA) surrogate {info['perf_trace'][0]:.4f}")
    print(f"true-channel rate of the returned beams: {weighted_sum_rate(channel, sol, cfg):.4f}")
    print(f"per-UE powers: {np.round(sol.powers, 3)}; randomized beams: {info['randomized']}\n")
