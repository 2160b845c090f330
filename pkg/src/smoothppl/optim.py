"""Stochastic gradient descent and Adam with domain projection.

Iteration ``k`` draws its traces from a generator seeded by
``SeedSequence([seed, k])``, so a run is reproducible from its seed and
iteration ``k`` does not depend on how earlier iterations consumed numbers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .estimators import Estimator
from .models import Model, project_domain


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepSchedule:
    """``robbins_monro`` gives ``c / k``; ``constant`` gives ``c``."""
    kind: str
    c: float

    def __post_init__(self):
        if self.kind not in ("robbins_monro", "constant"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not self.c > 0:
            raise ValueError("step constant must be positive")

    @classmethod
    def parse(cls, text: str) -> "StepSchedule":
        """``rm:C`` or ``const:G``."""
        kind, _, val = text.partition(":")
        kinds = {"rm": "robbins_monro", "const": "constant"}
        if kind not in kinds or not val:
            raise ValueError(f"schedule must be rm:C or const:G, got {text!r}")
        return cls(kinds[kind], float(val))

    def step(self, k: int) -> float:
        return self.c / k if self.kind == "robbins_monro" else self.c


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iters: int = 10000
    mc_samples: int = 16
    eta: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


@dataclass
class Trajectory:
    thetas: np.ndarray  # (iters + 1, m), row 0 is the start
    grads: np.ndarray  # (iters, m)
    elapsed_ns: np.ndarray  # (iters,) cumulative wall-clock time

    @property
    def final(self) -> np.ndarray:
        return self.thetas[-1]


def substream(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


GradFn = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def _grad_fn(model: Model, estimator, n: int) -> GradFn:
    if isinstance(estimator, Estimator):
        return lambda th, rng: estimator(model, th, n, rng)
    if callable(estimator):
        return estimator
    raise TypeError("estimator must be an Estimator or a callable (theta, rng) -> grad")


def _start(model, theta0):
    theta = np.asarray(theta0, dtype=float).reshape(-1)
    if theta.shape != (model.nparams,):
        raise ValueError("theta0 has the wrong length")
    if np.any(theta < np.asarray(model.lower)) or np.any(theta > np.asarray(model.upper)):
        raise ValueError("theta0 lies outside the domain")
    return theta


def _check(theta):
    if not np.all(np.isfinite(theta)):
        raise DivergenceError("diverged: non-finite iterate")


def run_sgd(model: Model, theta0, schedule: StepSchedule, estimator, iters: int,
            n: int = 16, seed: int = 0) -> Trajectory:
    """``theta_{k+1} = proj(theta_k - gamma_k * g_k)`` for ``k = 1..iters``."""
    grad = _grad_fn(model, estimator, n)
    theta = _start(model, theta0)
    thetas = [theta.copy()]
    grads, times = [], []
    t0 = time.perf_counter_ns()
    for k in range(1, iters + 1):
        g = np.asarray(grad(theta, substream(seed, k)), dtype=float)
        theta = project_domain(model, theta - schedule.step(k) * g)
        _check(theta)
        thetas.append(theta.copy())
        grads.append(g)
        times.append(time.perf_counter_ns() - t0)
    m = model.nparams
    return Trajectory(np.array(thetas), np.array(grads).reshape(-1, m), np.array(times, dtype=np.int64))


def run_adam(model: Model, theta0, cfg: AdamConfig, estimator) -> Trajectory:
    """Adam with bias correction, projecting onto the domain after each step."""
    grad = _grad_fn(model, estimator, cfg.mc_samples)
    theta = _start(model, theta0)
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    thetas = [theta.copy()]
    grads, times = [], []
    t0 = time.perf_counter_ns()
    for k in range(1, cfg.iters + 1):
        g = np.asarray(grad(theta, substream(cfg.seed, k)), dtype=float)
        m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * g
        m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * g * g
        mhat = m1 / (1 - cfg.beta1 ** k)
        vhat = m2 / (1 - cfg.beta2 ** k)
        theta = project_domain(model, theta - cfg.lr * mhat / (np.sqrt(vhat) + cfg.epsilon))
        _check(theta)
        thetas.append(theta.copy())
        grads.append(g)
        times.append(time.perf_counter_ns() - t0)
    m = model.nparams
    return Trajectory(np.array(thetas), np.array(grads).reshape(-1, m), np.array(times, dtype=np.int64))
