"""Why the pathwise estimator is biased on programs with conditionals.

For ``E_z[-theta^2/2 + [z >= 0]]`` with ``z ~ N(theta, 1)`` the true
gradient is ``-theta + pdf(theta)``, but differentiating each sample gives
``-theta``.
"""
# %%
import numpy as np
from scipy import stats

from smoothppl import SmoothingConfig
from smoothppl.estimators import draw_traces, reparam_samples, score_samples, smooth_samples
from smoothppl.models import Model, builtin
from smoothppl.quadrature import quadrature_gradient

m = Model.from_program(builtin("example1").program)
rng = np.random.default_rng(1)

# %%
print(f"{'theta':>6} {'true':>8} {'reparam':>8} {'smooth':>8} {'score':>8}")
for theta in (-1.0, -0.5, 0.0, 0.5, 1.0):
    tr = draw_traces(m.program, 100_000, rng)
    true = quadrature_gradient(m.program, [theta]).value[0]
    rp = reparam_samples(m, [theta], tr).mean[0]
    sm = smooth_samples(m, [theta], tr, SmoothingConfig(0.05)).mean[0]
    sc = score_samples(m, [theta], tr).mean[0]
    print(f"{theta:6.2f} {true:8.4f} {rp:8.4f} {sm:8.4f} {sc:8.4f}")
print("closed form at 0:", stats.norm.pdf(0.0))

# %% [markdown]
# Per-sample variance at theta = 0.

# %%
tr = draw_traces(m.program, 100_000, rng)
for eta in (0.05, 0.15, 0.3):
    print(f"smooth eta={eta}: {smooth_samples(m, [0.0], tr, SmoothingConfig(eta)).gradients.var():.4f}")
print(f"score          : {score_samples(m, [0.0], tr).gradients.var():.4f}")
