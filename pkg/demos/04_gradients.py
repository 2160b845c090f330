"""Forward-mode gradients of the smoothed semantics."""
# %%
import numpy as np

from smoothppl import SmoothingConfig, finite_diff_grad, grad_measurable, grad_smoothed
from smoothppl.models import builtin

# %% [markdown]
# The gradient is taken for a whole batch of traces at once; each row is
# the gradient for one trace.

# %%
p = builtin("example1").program
traces = np.array([[-0.5], [0.0], [0.3], [2.0]])
cfg = SmoothingConfig(0.1)
v, g = grad_smoothed(p, [0.2], traces, cfg)
print("values  ", np.round(v, 4))
print("AD      ", np.round(g[:, 0], 6))
print("central ", np.round(finite_diff_grad(p, [0.2], traces, cfg)[:, 0], 6))

# %% [markdown]
# Differentiating the hard semantics ignores the jump: every trace gets
# the derivative of the branch it took, here ``-theta``.

# %%
print("pathwise", grad_measurable(p, [0.2], traces)[1][:, 0])
