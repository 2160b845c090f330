"""Monte Carlo gradient estimators for ``grad E[[M]](theta)``.

* ``reparam``: average of the pathwise gradient with hard conditionals
  (biased when the integrand jumps).
* ``smooth``: the same on the smoothed semantics.
* ``score``: ``f(theta; z) * grad log q(z) + grad f(theta; z)`` with the
  transformed samples ``z`` held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dual as D
from . import syntax as S
from .models import Model
from .semantics import (EvaluationError, Evaluator, SmoothingConfig, _prepare,
                        grad_eval, is_function, trace_type)


class EstimatorError(RuntimeError):
    pass


@dataclass
class EstimatorSample:
    """Per-trace gradients and integrand values from one estimator call."""
    gradients: np.ndarray  # (N, m)
    values: np.ndarray  # (N,)
    tag: str = ""

    @property
    def mean(self) -> np.ndarray:
        return self.gradients.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        n = len(self.gradients)
        return self.gradients.std(axis=0, ddof=1) / np.sqrt(n)


def draw_traces(p: S.Program, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` traces drawn from the program's trace type, shape ``(n, |Sigma|)``."""
    dists = [s.dist for s in trace_type(p)]
    out = np.empty((n, len(dists)))
    for j, d in enumerate(dists):
        out[:, j] = S.draw(d, rng, n)
    return out


def _finite(sample: EstimatorSample) -> EstimatorSample:
    if not np.all(np.isfinite(sample.gradients)):
        raise EstimatorError("non-finite gradient sample")
    return sample


def smooth_samples(model: Model, theta, traces, cfg: SmoothingConfig) -> EstimatorSample:
    v, g = grad_eval(model.program, theta, traces, cfg=cfg, smooth=True)
    return _finite(EstimatorSample(g, v, f"smooth:{cfg.eta:g}"))


def reparam_samples(model: Model, theta, traces) -> EstimatorSample:
    v, g = grad_eval(model.program, theta, traces, smooth=False)
    return _finite(EstimatorSample(g, v, "reparam"))


def score_samples(model: Model, theta, traces) -> EstimatorSample:
    if model.score_support is None:
        raise EstimatorError("score estimator unavailable: non-affine transform")
    p = model.program
    theta, traces = _prepare(p, theta, traces)
    m = len(theta)
    ev = Evaluator(D.variables(theta), traces, smooth=False, score=True)
    f = ev.run(p.body)
    if is_function(f):
        raise EvaluationError("program value is a function")
    f = D.lift(f, m)
    lq = D.lift(ev.logq, m)
    shape = traces.shape[:-1]
    fv = np.broadcast_to(f.value, shape)
    grad = fv[..., None] * np.broadcast_to(lq.grad, shape + (m,)) + np.broadcast_to(f.grad, shape + (m,))
    return _finite(EstimatorSample(np.array(grad), np.array(fv), "score"))


def estimate_smooth(model: Model, theta, n: int, cfg: SmoothingConfig, rng) -> np.ndarray:
    """Mean smoothed pathwise gradient over ``n`` fresh traces."""
    return smooth_samples(model, theta, draw_traces(model.program, n, rng), cfg).mean


def estimate_reparam(model: Model, theta, n: int, rng) -> np.ndarray:
    """Mean pathwise gradient with hard conditionals over ``n`` fresh traces."""
    return reparam_samples(model, theta, draw_traces(model.program, n, rng)).mean


def estimate_score(model: Model, theta, n: int, rng) -> np.ndarray:
    """Mean score-function gradient over ``n`` fresh traces."""
    return score_samples(model, theta, draw_traces(model.program, n, rng)).mean


@dataclass(frozen=True)
class Estimator:
    """A named estimator: ``reparam``, ``score`` or ``smooth`` with its eta."""
    kind: str
    eta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("reparam", "smooth", "score"):
            raise ValueError(f"unknown estimator {self.kind!r}")
        if self.kind == "smooth" and not (self.eta and self.eta > 0):
            raise ValueError("smooth estimator needs eta > 0")

    @classmethod
    def parse(cls, text: str, default_eta: float = 0.15) -> "Estimator":
        """``reparam``, ``score``, ``smooth`` or ``smooth:ETA``."""
        kind, _, eta = text.strip().partition(":")
        if kind == "smooth":
            return cls(kind, float(eta) if eta else default_eta)
        if eta:
            raise ValueError(f"estimator {kind!r} takes no argument")
        return cls(kind)

    @property
    def label(self) -> str:
        return f"smooth:{self.eta:g}" if self.kind == "smooth" else self.kind

    def samples(self, model: Model, theta, traces) -> EstimatorSample:
        if self.kind == "smooth":
            return smooth_samples(model, theta, traces, SmoothingConfig(self.eta))
        if self.kind == "reparam":
            return reparam_samples(model, theta, traces)
        return score_samples(model, theta, traces)

    def __call__(self, model: Model, theta, n: int, rng) -> np.ndarray:
        return self.samples(model, theta, draw_traces(model.program, n, rng)).mean
