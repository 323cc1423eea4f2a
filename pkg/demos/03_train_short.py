#!/usr/bin/env python3
"""Short training run with a learning-curve plot.

Trains the gate-level agent for 200k steps (a fifth of the full budget,
a couple of minutes on a laptop) and plots episode reward per update.
The full-budget run is `buckdgc train dgc --seed <n> --out runs/dgc`.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from buckdgc import DirectGateEnv, PpoConfig, dgc_config
from buckdgc.ppo import train

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cfg = PpoConfig(gamma=0.999, total_steps=200_000, entropy_coef=0.01)
ac, records = train(
    lambda ss: DirectGateEnv(dgc_config(), seed=ss),
    cfg,
    "dgc",
    seed=0,
    out_dir=OUT / "short_run",
    verbose=True,
)

rewards = [r.mean_ep_reward for r in records]
fig, ax = plt.subplots(figsize=(8, 4))
ax.plot([r.env_steps for r in records], rewards)
ax.set_xlabel("environment steps")
ax.set_ylabel("mean episode reward")
ax.set_title("Gate-level PPO learning curve (200k steps)")
fig.savefig(OUT / "03_learning_curve.png", dpi=120)
print(f"wrote {OUT / '03_learning_curve.png'}")
print(f"checkpoint: {OUT / 'short_run' / 'checkpoint_final.txt'}")
print(f"reward first 5 updates {np.nanmean(rewards[:5]):.0f} -> last 5 {np.nanmean(rewards[-5:]):.0f}")
