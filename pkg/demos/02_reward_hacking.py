"""
Reward hacking with direct reward finetuning
============================================

A score network is fit to the two-mode toy data, then finetuned by
backpropagating a two-bump reward through the last sampler step.  The tall
bump wins: every sample ends up on it and coverage of the base distribution
collapses.

Pass a smaller step count as the first argument for a quicker (rougher) run,
e.g. ``python3 demos/02_reward_hacking.py 4000``.
"""

import sys

from pathlib import Path

import numpy as np

from aiglab.config import RunConfig
from aiglab.experiment import prepare_models, sample_net
from aiglab.metrics import generalized_recall

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

steps = sys.argv[1] if len(sys.argv) > 1 else "20000"
cfg = RunConfig.from_file(CONFIGS / "toy1d.cfg", **{"train.steps": steps})
print(f"training base net for {steps} steps, then {cfg['finetune.steps']} finetuning iterations")
m = prepare_models(cfg)

base = m.base_samples.points
tuned = sample_net(m.draft, cfg, m.latents, "finetuned").points

print("\n              mean reward   share at +1   spread")
for name, x in (("base", base), ("finetuned", tuned)):
    print(f"{name:>10}     {np.mean(m.reward(x)):.4f}       {np.mean(x > 0):.3f}     {x.std():.4f}")
print("\nrecall of base samples under the finetuned manifold:",
      generalized_recall(base, tuned, 10))
print("reward trace (every 100 iterations):", np.round(m.draft_rewards[::100], 3))
