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
# # Parameters, FLOPs and real-time factor
#
# Only the classifier depends on the input length, so parameter counts grow
# slowly with duration while FLOPs grow with the number of frames.

# %%
from smgaa.features import DURATIONS, FRAMES_PER_DURATION
from smgaa.metrics import measure_rtf
from smgaa.model import ModelConfig, SMGAANet, count_flops, count_params

cfg = ModelConfig()
print(f"{'dur':>4} {'T':>3} {'params':>8} {'GFLOPs':>7} {'RTF':>6}")
for d in DURATIONS:
    net = SMGAANet(cfg, FRAMES_PER_DURATION[d])
    rtf = measure_rtf(net, d, n_trials=5)
    print(f"{d:>4} {FRAMES_PER_DURATION[d]:>3} {count_params(net):>8} {count_flops(cfg, d) / 1e9:>7.3f} {rtf:>6.3f}")

# %% [markdown]
# ## Architecture switches

# %%
variants = {
    "full": {},
    "no MGAA": dict(use_mgaa=False),
    "no PCEM": dict(use_pcem=False),
    "no FCEM": dict(use_fcem=False),
    "deep only": dict(placement="deep"),
    "shallow only": dict(placement="shallow"),
}
for name, switches in variants.items():
    v = ModelConfig(**switches)
    print(f"{name:13s} {count_params(SMGAANet(v, 16)):>8} params  {count_flops(v, 0.5) / 1e9:.3f} GFLOPs at 0.5 s")
