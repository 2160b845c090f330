"""Gradients of program values with respect to the parameters."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import syntax as S
from .dual import Dual, DomainError, dual_apply, lift, sigma_eta, variables  # noqa: F401
from .semantics import (EvaluationError, SmoothingConfig, check_theta, evaluate,
                        grad_eval)


def grad_smoothed(p: S.Program, theta, trace, cfg: SmoothingConfig):
    """Value and gradient of the smoothed semantics (forward mode)."""
    return grad_eval(p, theta, trace, cfg=cfg, smooth=True)


def grad_measurable(p: S.Program, theta, trace, cfg: Optional[SmoothingConfig] = None):
    """Value and gradient with hard branch selection.

    Guards contribute no derivative; a guard of exactly 0 takes the else
    branch.  This is the pathwise estimator that ignores discontinuities.
    """
    return grad_eval(p, theta, trace, cfg=cfg, smooth=False)


def finite_diff_grad(p: S.Program, theta, trace, cfg: Optional[SmoothingConfig] = None,
                     h: float = 1e-5):
    """Central differences of the smoothed (``cfg`` given) or measurable value."""
    theta = check_theta(p, theta)
    smooth = cfg is not None
    trace = np.asarray(trace, dtype=float)
    out = []
    for i, (name, b) in enumerate(p.params):
        if b == "preal" and theta[i] - h <= 0:
            raise EvaluationError("domain violation near boundary")
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        fu = evaluate(p, up, trace, cfg=cfg, smooth=smooth)
        fd = evaluate(p, down, trace, cfg=cfg, smooth=smooth)
        out.append((fu - fd) / (2.0 * h))
    if not out:
        return np.zeros(trace.shape[:-1] + (0,))
    return np.stack(out, axis=-1)
