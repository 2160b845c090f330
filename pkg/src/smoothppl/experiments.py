"""Objective trajectories, gradient variance and work-normalised variance.

The objective at a checkpoint and the gradient variance at a checkpoint are
estimated from traces keyed only on ``(seed, checkpoint)``, so every
estimator is measured on the same random numbers.
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .estimators import Estimator, draw_traces
from .models import BuiltinModel, Model
from .optim import AdamConfig, Trajectory, run_adam
from .semantics import SmoothingConfig, evaluate

CHECKPOINT_EVERY = 100
DEFAULT_K = 200
DEFAULT_VARIANCE_K = 1000
DEFAULT_EVAL_ETA = 0.15

# stream tags keep checkpoint draws apart from the optimiser's draws
_OBJECTIVE_STREAM = 1
_VARIANCE_STREAM = 2


def fmt(x: float) -> str:
    """Float with 17 significant digits."""
    return format(float(x), ".17g")


def checkpoint_stream(seed: int, tag: int, c: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, int(c)]))


@dataclass
class ObjectivePoint:
    iter: int
    measurable: float
    measurable_se: float
    smoothed: float
    smoothed_se: float


@dataclass
class VarianceStats:
    component_variance: float  # mean over components, then over checkpoints
    norm_variance: float  # variance of the L2 norm, averaged over checkpoints


@dataclass
class WnvRow:
    estimator: str
    iterations: int
    cost_ratio: float
    variance: float
    wnv: float


@dataclass
class ExperimentReport:
    model_name: str
    checkpoints: np.ndarray
    trajectories: Dict[str, Trajectory] = field(default_factory=dict)
    elbo_series: Dict[str, List[ObjectivePoint]] = field(default_factory=dict)
    variance_stats: Dict[str, VarianceStats] = field(default_factory=dict)
    wnv: List[WnvRow] = field(default_factory=list)

    def final_objective(self, label: str) -> float:
        return self.elbo_series[label][-1].measurable

    def elbo_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "iter", "objective_measurable", "se_measurable",
                    "objective_smoothed", "se_smoothed"])
        for label, pts in self.elbo_series.items():
            for pt in pts:
                w.writerow([label, pt.iter, fmt(pt.measurable), fmt(pt.measurable_se),
                            fmt(pt.smoothed), fmt(pt.smoothed_se)])
        return buf.getvalue()

    def variance_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "component_variance", "norm_variance"])
        for label, st in self.variance_stats.items():
            w.writerow([label, fmt(st.component_variance), fmt(st.norm_variance)])
        return buf.getvalue()

    def wnv_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "iterations", "cost_ratio", "variance", "wnv"])
        for r in self.wnv:
            w.writerow([r.estimator, r.iterations, fmt(r.cost_ratio), fmt(r.variance), fmt(r.wnv)])
        return buf.getvalue()

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in (("elbo.csv", self.elbo_csv()), ("variance.csv", self.variance_csv()),
                           ("wnv.csv", self.wnv_csv())):
            if name == "wnv.csv" and not self.wnv:
                continue
            with open(os.path.join(out_dir, name), "w", newline="") as fh:
                fh.write(text)


def _model_of(model) -> Model:
    return model.model if isinstance(model, BuiltinModel) else model


def _estimators(estimators) -> List[Estimator]:
    out = []
    for e in estimators:
        out.append(e if isinstance(e, Estimator) else Estimator.parse(e))
    labels = [e.label for e in out]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate estimator")
    return out


def objective_at(model: Model, theta, traces, eta: float):
    """Mean and standard error of the hard and smoothed objectives on ``traces``."""
    p = model.program
    hard = evaluate(p, theta, traces)
    soft = evaluate(p, theta, traces, cfg=SmoothingConfig(eta), smooth=True)
    k = len(traces)
    se = lambda v: float(v.std(ddof=1) / np.sqrt(k)) if k > 1 else float("nan")
    return float(hard.mean()), se(hard), float(soft.mean()), se(soft)


def elbo_experiment(model, estimators: Sequence, cfg: AdamConfig, theta0=None,
                    k: int = DEFAULT_K, eval_eta: float = DEFAULT_EVAL_ETA,
                    every: int = CHECKPOINT_EVERY, out_dir: Optional[str] = None) -> ExperimentReport:
    """Optimise with every estimator and track the objective at checkpoints.

    The smoothed column uses the estimator's own eta for smoothing
    estimators and ``eval_eta`` otherwise.  With ``out_dir`` the series
    finished so far are written even if a later estimator fails.
    """
    name = getattr(model, "name", "")
    if theta0 is None:
        if not isinstance(model, BuiltinModel):
            raise ValueError("theta0 is required for a plain model")
        theta0 = model.theta0
    m = _model_of(model)
    ests = _estimators(estimators)
    if k < 2:
        raise ValueError("need at least two objective samples per checkpoint")
    checkpoints = np.arange(0, cfg.iters + 1, every)
    report = ExperimentReport(name, checkpoints)
    streams = {int(c): draw_traces(m.program, k, checkpoint_stream(cfg.seed, _OBJECTIVE_STREAM, c))
               for c in checkpoints}
    try:
        for est in ests:
            traj = run_adam(m, theta0, cfg, est)
            eta = est.eta if est.kind == "smooth" else eval_eta
            pts = []
            for c in checkpoints:
                vals = objective_at(m, traj.thetas[c], streams[int(c)], eta)
                pts.append(ObjectivePoint(int(c), *vals))
            report.trajectories[est.label] = traj
            report.elbo_series[est.label] = pts
    except Exception:
        if out_dir is not None:
            report.write(out_dir)
        raise
    return report


def gradient_variance(model: Model, est: Estimator, theta, traces):
    g = est.samples(model, theta, traces).gradients
    comp = float(g.var(axis=0, ddof=1).mean())
    norm = float(np.linalg.norm(g, axis=1).var(ddof=1))
    return comp, norm


def variance_report(model, thetas, estimators: Sequence, k: int = DEFAULT_VARIANCE_K,
                    seed: int = 0) -> Dict[str, VarianceStats]:
    """Per-sample gradient variance averaged over checkpoints.

    ``thetas`` is either one array of checkpoint parameters shared by all
    estimators or a mapping from estimator label to its own checkpoints.
    """
    if k < 2:
        raise ValueError("variance needs at least two samples")
    m = _model_of(model)
    out = {}
    for est in _estimators(estimators):
        pts = thetas[est.label] if isinstance(thetas, Mapping) else thetas
        pts = np.asarray(pts, dtype=float).reshape(-1, m.nparams)
        comps, norms = [], []
        for c, th in enumerate(pts):
            traces = draw_traces(m.program, k, checkpoint_stream(seed, _VARIANCE_STREAM, c))
            a, b = gradient_variance(m, est, th, traces)
            comps.append(a)
            norms.append(b)
        out[est.label] = VarianceStats(float(np.mean(comps)), float(np.mean(norms)))
    return out


def iterations_in_budget(model: Model, est: Estimator, theta, budget: float,
                         n: int = 16, seed: int = 0) -> int:
    """Gradient estimates completed within ``budget`` seconds."""
    from .optim import substream

    end = time.perf_counter() + budget
    it = 0
    while time.perf_counter() < end:
        est(model, theta, n, substream(seed, it + 1))
        it += 1
    return it


def work_normalised_variance(model, estimators: Sequence, time_budget: float,
                             variances: Mapping[str, VarianceStats], theta=None,
                             n: int = 16, seed: int = 0) -> List[WnvRow]:
    """Cost relative to the score estimator times the component variance.

    Cost is the reciprocal of the iterations finished within the budget.
    Without a score estimator the first estimator is the reference.
    """
    if time_budget < 1.0:
        raise ValueError("time budget must be at least one second")
    m = _model_of(model)
    if theta is None:
        theta = model.theta0 if isinstance(model, BuiltinModel) else np.zeros(m.nparams)
    ests = _estimators(estimators)
    iters = {e.label: max(1, iterations_in_budget(m, e, theta, time_budget, n, seed)) for e in ests}
    ref = "score" if "score" in iters else ests[0].label
    rows = []
    for e in ests:
        ratio = iters[ref] / iters[e.label]
        var = variances[e.label].component_variance
        rows.append(WnvRow(e.label, iters[e.label], ratio, var, ratio * var))
    return rows


def bench(model: BuiltinModel, estimators: Sequence, cfg: AdamConfig, k: int = DEFAULT_K,
          variance_k: int = DEFAULT_VARIANCE_K, time_budget: Optional[float] = 1.0,
          out_dir: Optional[str] = None) -> ExperimentReport:
    """Full protocol: trajectories, variance along them and the WNV table."""
    report = elbo_experiment(model, estimators, cfg, k=k, out_dir=out_dir)
    try:
        thetas = {lab: tr.thetas[report.checkpoints] for lab, tr in report.trajectories.items()}
        report.variance_stats = variance_report(model, thetas, estimators, variance_k, cfg.seed)
        if time_budget:
            report.wnv = work_normalised_variance(model, estimators, time_budget,
                                                  report.variance_stats, seed=cfg.seed)
    finally:
        if out_dir is not None:
            report.write(out_dir)
    return report
