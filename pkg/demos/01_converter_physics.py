#!/usr/bin/env python3
"""Open-loop tour of the converter simulator.

Walks through the basic physics the control problem lives on: startup into
a fixed duty cycle, the discontinuous-conduction corner at light load, and
the energy balance the integrator maintains.  Writes waveform figures into
demos/output/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from buckdgc import CircuitParams, CircuitState, dc_duty_for_target, open_loop_trace, step

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# --- 1. startup under the averaged-model duty ratio --------------------
params = CircuitParams()  # 20 V in, 47 uH, 470 uF, ESRs, 15 ohm load
duty = dc_duty_for_target(params, v_ref=15.0)
print(f"averaged-model duty for 15 V at 15 ohm: {duty:.4f}")

trace = open_loop_trace(params, horizon_s=5e-3, duty=duty)
final = trace.v_out[trace.time_s > 4e-3]
print(f"mean v_out over the final ms: {final.mean():.3f} V (target 15 V)")

fig, axes = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
axes[0].plot(trace.time_s * 1e3, trace.v_out, lw=0.7)
axes[0].axhline(15.0, color="r", ls=":", label="15 V reference")
axes[0].set_ylabel("v_out [V]")
axes[0].legend()
axes[1].plot(trace.time_s * 1e3, trace.i_l, lw=0.7, color="tab:orange")
axes[1].set_ylabel("i_L [A]")
axes[1].set_xlabel("time [ms]")
fig.suptitle("Open-loop startup at the averaged-model duty ratio")
fig.savefig(OUT / "01_startup.png", dpi=120)
print(f"wrote {OUT / '01_startup.png'}")

# --- 2. discontinuous conduction at light load --------------------------
light = params.with_load(50.0)
dcm = open_loop_trace(light, horizon_s=2e-3, duty=0.3)
settled = dcm.i_l[dcm.time_s > 1.8e-3]
print(f"\nlight load, duty 0.3: settled i_L range [{settled.min():.3f}, {settled.max():.3f}] A "
      f"(inductor empties every cycle -> discontinuous conduction)")

fig, ax = plt.subplots(figsize=(9, 3))
window = dcm.time_s * 1e6 > 1900
ax.plot(dcm.time_s[window] * 1e6, dcm.i_l[window], lw=0.9)
ax.set_xlabel("time [us]")
ax.set_ylabel("i_L [A]")
ax.set_title("Inductor current pinned at zero between pulses (DCM)")
fig.savefig(OUT / "01_dcm.png", dpi=120)
print(f"wrote {OUT / '01_dcm.png'}")

# --- 3. energy balance ---------------------------------------------------
rng = np.random.default_rng(0)
state = CircuitState(0.0, 0.0)
src = diss = 0.0
e0 = 0.0
for gate in (rng.random(2000) < 0.6).astype(int):
    state, telem = step(state, int(gate), 1e-6, params)
    src += telem.source_energy
    diss += telem.dissipated_energy
stored = 0.5 * params.L * state.i_L**2 + 0.5 * params.C * state.v_C**2 - e0
print(f"\nrandom 2 ms pattern: source {src * 1e3:.4f} mJ = "
      f"stored {stored * 1e3:.4f} mJ + dissipated {diss * 1e3:.4f} mJ "
      f"(residual {abs(src - stored - diss) / src:.2e} relative)")
