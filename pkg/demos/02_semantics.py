"""Measurable, smoothed and weighted evaluation of one program."""
# %%
import numpy as np

from smoothppl import SmoothingConfig, eval_measurable, eval_operational, eval_smoothed
from smoothppl.models import builtin
from smoothppl.semantics import evaluate

# %% [markdown]
# The constant-guard program ``if 0 then theta^2 + 1 else (theta - 1)^2``
# always takes the else branch, but its smoothing averages both branches
# with weight 1/2 whatever eta is.

# %%
p = builtin("ex0g").program
print("measurable at 0.5:", eval_measurable(p, [0.5], []))
for eta in (0.5, 0.1, 0.01):
    print(f"smoothed eta={eta}:", eval_smoothed(p, [0.5], [], SmoothingConfig(eta)))

# %% [markdown]
# For ``if (s + theta) 0 1`` the smoothed value is a logistic function of
# the guard; it approaches the step as eta shrinks.

# %%
q = builtin("nconv").program
s = np.linspace(-1, 1, 5)[:, None]
print("hard  ", evaluate(q, [0.0], s))
for eta in (0.3, 0.05):
    print(f"eta={eta}", np.round(evaluate(q, [0.0], s, cfg=SmoothingConfig(eta), smooth=True), 4))

# %% [markdown]
# The operational evaluator returns the value together with the density
# of the trace it consumed.

# %%
v, w, lw = eval_operational(builtin("example1").program, [0.3], [0.2])
print(f"value {v}, weight {w:.6f}, log weight {lw:.6f}")
