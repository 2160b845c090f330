"""SGD and Adam on smoothed objectives."""
# %%
from smoothppl import AdamConfig, SmoothingConfig, StepSchedule, run_adam, run_sgd
from smoothppl.estimators import Estimator
from smoothppl.models import builtin
from smoothppl.quadrature import stationary_point

# %% [markdown]
# On the constant-guard program smoothing moves the minimiser from 1 to
# 1/2 for every eta: the smoothed objective is the average of both branches.

# %%
b = builtin("ex0g")
for est in (Estimator("smooth", 0.1), Estimator("reparam")):
    tr = run_sgd(b.model, [0.0], StepSchedule.parse("rm:0.5"), est, 2000)
    print(f"{est.label:11s} -> {tr.final[0]:.4f}")

# %% [markdown]
# On example1 (minimising the negated objective) Adam with the smoothed
# estimator settles near the stationary point of the smoothed objective,
# while the pathwise estimator drifts to 0.

# %%
b = builtin("example1")
cfg = AdamConfig(lr=0.001, iters=5000, seed=1)
for est in (Estimator("smooth", 0.15), Estimator("score"), Estimator("reparam")):
    print(f"{est.label:11s} -> {run_adam(b.model, b.theta0, cfg, est).final[0]:.4f}")
print("smoothed stationary point:", round(stationary_point(b.model.program, 0.0, 1.0, SmoothingConfig(0.15)), 4))
