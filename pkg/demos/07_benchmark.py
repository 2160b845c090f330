"""The estimator comparison protocol on a built-in model.

Writes ``elbo.csv``, ``variance.csv`` and ``wnv.csv`` to ``bench-demo/``;
the same run is available as ``smoothppl bench --model example1``.
"""
# %%
import sys

from smoothppl import AdamConfig
from smoothppl.experiments import bench
from smoothppl.models import builtin

name = sys.argv[1] if len(sys.argv) > 1 else "example1"
cfg = AdamConfig(lr=0.001, iters=2000, mc_samples=16, seed=1)
report = bench(builtin(name), ["smooth:0.1", "smooth:0.15", "reparam", "score"], cfg,
               k=200, variance_k=1000, time_budget=1.0, out_dir="bench-demo")

# %%
for label in report.elbo_series:
    st = report.variance_stats[label]
    print(f"{label:12s} objective {report.final_objective(label):9.4f}"
          f"  variance {st.component_variance:9.4f}")
print()
print(report.wnv_csv())
