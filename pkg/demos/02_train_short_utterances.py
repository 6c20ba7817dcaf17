# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Training on 0.5 s utterances
#
# A small run: 64 clips per class, mixed channel conditions, at most five
# epochs. Takes a minute or two on one core.

# %%
import time

import numpy as np

from smgaa.corpus import degrade_clip, feature_matrix, mixed_conditions
from smgaa.features import CONDITIONS
from smgaa.metrics import compute_eer
from smgaa.model import ModelConfig, SMGAANet
from smgaa.synth import SynthConfig, generate
from smgaa.training import TrainConfig, evaluate_scores, fit

train_clips = generate(SynthConfig(n_per_class=64, seed=7), durations=(0.5,))
test_clips = generate(SynthConfig(n_per_class=32, seed=8), durations=(0.5,))
x, y = feature_matrix(mixed_conditions(train_clips, seed=7))
print("training tensor", x.shape, "spoof share", y.mean())

# %%
net = SMGAANet(ModelConfig(), n_frames=16, seed=0)
start = time.perf_counter()
result = fit(net, x, y, TrainConfig(seed=0))
print(f"{time.perf_counter() - start:.0f} s")
for row in result.history:
    print(f"epoch {row['epoch']}  loss {row['train_loss']:.4f}  val EER {row['val_eer']:.3f}  lr {row['lr']:.2e}")

# %% [markdown]
# ## EER per condition on held-out clips

# %%
for cond in CONDITIONS:
    xt, yt = feature_matrix([degrade_clip(c, cond) for c in test_clips])
    eer, threshold = compute_eer(evaluate_scores(net, xt), yt)
    print(f"{cond}: EER {eer:6.2%}  threshold {threshold:8.3f}")
