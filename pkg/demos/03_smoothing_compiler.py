"""Compiling conditionals away.

The compiler rewrites ``if L M N`` into a sigmoid-weighted sum, so the
ordinary evaluator on the output agrees with the smoothed evaluator on
the input.
"""
# %%
import numpy as np

from smoothppl import SmoothingConfig, smooth_compile
from smoothppl.models import builtin
from smoothppl.semantics import evaluate
from smoothppl.syntax import node_count

# %%
p = builtin("example1").program
out = smooth_compile(p)
print(out)
print("nodes:", node_count(p.body), "->", node_count(out.body))

# %%
traces = np.random.default_rng(0).standard_normal((5, 1))
cfg = SmoothingConfig(0.1)
print(evaluate(out.program, [0.4], traces, cfg=cfg))
print(evaluate(p, [0.4], traces, cfg=cfg, smooth=True))
