#!/usr/bin/env python3
"""What the agent sees and what it is paid.

Plots the per-step reward surface, then runs a hand-written hysteresis
controller through the gate-level environment as a baseline for what a
sensible policy earns per episode.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from buckdgc import DirectGateEnv, RewardParams, dgc_config, regulation_reward

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

rp = RewardParams()
errs = np.linspace(-3, 3, 601)
hold = [regulation_reward(e, 1, 1, rp) for e in errs]
toggle = [regulation_reward(e, 1, 0, rp) for e in errs]

fig, ax = plt.subplots(figsize=(8, 4))
ax.plot(errs, hold, label="steady gate")
ax.plot(errs, toggle, label="gate toggled (switching penalty)")
ax.set_xlabel("voltage error [V]")
ax.set_ylabel("per-step reward")
ax.legend()
ax.set_title("Regulation reward: hyperbolic bonus, linear cost, toggle penalty")
fig.savefig(OUT / "02_reward.png", dpi=120)
print(f"wrote {OUT / '02_reward.png'}")

# Hysteresis baseline: drive the gate from the sign of the newest error.
env = DirectGateEnv(dgc_config(), seed=0)
returns = []
for ep in range(5):
    obs = env.reset()
    total, done = 0.0, False
    while not done:
        newest_err = obs[-3]  # normalized; sign is all the controller uses
        obs, r, done, info = env.step(1 if newest_err < 0 else 0)
        total += r
    returns.append(total)
    print(f"episode {ep}: load={env.params.R:6.2f} ohm  return={total:8.1f}  "
          f"final v_out={info['v_out']:.2f} V")
print(f"hysteresis controller mean return: {np.mean(returns):.1f} "
      f"(a trained policy should do better by switching less)")
