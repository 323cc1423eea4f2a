#!/usr/bin/env python3
"""Load-step evaluation of a trained checkpoint.

Points at a checkpoint (pass a path as argv[1], or train the short demo
first), replays the 15 ohm -> 1 ohm load step with the deterministic
policy, prints the waveform metrics, and renders the stacked figure:
gate/effective duty, inductor current, output voltage with the reference.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from buckdgc import SCENARIOS, compute_metrics, run_scenario

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

default = OUT / "short_run" / "checkpoint_final.txt"
ckpt = Path(sys.argv[1]) if len(sys.argv) > 1 else default
if not ckpt.exists():
    raise SystemExit(f"no checkpoint at {ckpt}; run 03_train_short.py first or pass a path")

trace = run_scenario(ckpt, SCENARIOS["loadstep-nominal"], seed=0)
m = compute_metrics(trace)
rec = f"{m.recovery_s * 1e6:.0f} us" if m.recovered else "not recovered"
print(f"dip {m.v_min:.2f} V, recovery {rec}, overshoot {m.overshoot * 1e3:.0f} mV, "
      f"ripple {m.ripple_pp * 1e3:.0f} mV p-p, mean|err| {m.mean_abs_err * 1e3:.0f} mV")

ms = trace.time_s * 1e3
fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
axes[0].step(ms, trace.gate, lw=0.4, where="post", label="gate")
axes[0].plot(ms, trace.duty, lw=1.2, label="effective duty")
axes[0].set_ylabel("gate / duty")
axes[0].legend(loc="lower right")
axes[1].plot(ms, trace.i_l, lw=0.8, color="tab:orange")
axes[1].set_ylabel("i_L [A]")
axes[2].plot(ms, trace.v_out, lw=0.8, label="v_out")
axes[2].axhline(trace.v_ref, color="r", ls=":", label="reference")
axes[2].set_ylabel("v_out [V]")
axes[2].set_xlabel("time from load step [ms]")
axes[2].legend(loc="lower right")
fig.suptitle(f"Load step 15 -> 1 ohm under {ckpt.name}")
fig.savefig(OUT / "04_load_step.png", dpi=120)
print(f"wrote {OUT / '04_load_step.png'}")
trace.to_csv(OUT / "04_load_step_trace.csv")
print(f"wrote {OUT / '04_load_step_trace.csv'}")
