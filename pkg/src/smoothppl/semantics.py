"""Measurable, smoothed and operational evaluators.

Traces are arrays of shape ``(n,)`` or ``(B, n)``; a batch of traces is
evaluated in one pass since the order in which samples are consumed is the
same for every trace (both branches of a conditional are always evaluated).
Numbers flowing through the evaluator are floats, arrays or :class:`Dual`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dual as D
from . import syntax as S
from .checker import affine_parts, infer_basic
from .types import Base


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    eta: float
    kind: str = "logistic"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.kind != "logistic":
            raise ValueError(f"unsupported smoothing kind {self.kind!r}")


def sigma_eta(x, cfg: SmoothingConfig):
    """Logistic sigmoid with accuracy coefficient ``cfg.eta``."""
    return D.sigma_eta(x, cfg.eta)


@dataclass
class Closure:
    binder: str
    body: S.Term
    env: dict


@dataclass
class Combo:
    """Pointwise convex combination ``w1 * v1 + w2 * v2`` of functions."""
    w1: object
    v1: object
    w2: object
    v2: object


@dataclass
class Choice:
    """Per-trace selection between two functions (batched measurable if)."""
    mask: np.ndarray
    v1: object
    v2: object


_FUNCTIONS = (Closure, Combo, Choice)


def is_function(v) -> bool:
    return isinstance(v, _FUNCTIONS)


def combine_safe(w1, v1, w2, v2):
    """``w1 * v1 + w2 * v2`` at base type, pointwise at function type."""
    f1, f2 = is_function(v1), is_function(v2)
    if f1 != f2:
        raise EvaluationError("type mismatch in combination")
    a, b = np.asarray(D.value_of(w1)), np.asarray(D.value_of(w2))
    if np.any(a < 0) or np.any(b < 0) or np.any(a > 1) or np.any(b > 1) \
            or np.any(np.abs(a + b - 1.0) > 1e-12):
        raise EvaluationError("combination weights must lie in [0,1] and sum to 1")
    if f1:
        return Combo(w1, v1, w2, v2)
    return w1 * v1 + w2 * v2


def select(mask, v1, v2):
    """Take ``v1`` where ``mask`` holds and ``v2`` elsewhere."""
    f1, f2 = is_function(v1), is_function(v2)
    if f1 != f2:
        raise EvaluationError("branch values of different kinds")
    mask = np.asarray(mask)
    if f1:
        # keep both so later applications evaluate both bodies, as the eager
        # semantics does; guard recording relies on a data-independent order
        return Choice(mask, v1, v2)
    if mask.ndim == 0:
        return v1 if bool(mask) else v2
    return D.where(mask, v1, v2)


class TraceCursor:
    """Reads samples left to right from a trace (or a batch of traces)."""

    def __init__(self, trace):
        self.trace = trace
        self.position = 0

    @property
    def length(self) -> int:
        return self.trace.shape[-1]

    def next(self):
        if self.position >= self.length:
            raise EvaluationError("trace length mismatch: trace exhausted")
        v = self.trace[..., self.position]
        self.position += 1
        return v


_DESUGAR_CACHE: dict = {}
_AFFINE_CACHE: dict = {}


def _desugared(t):
    key = id(t)
    hit = _DESUGAR_CACHE.get(key)
    if hit is None or hit[0] is not t:
        hit = (t, S.desugar_arith(t))
        _DESUGAR_CACHE[key] = hit
    return hit[1]


def _affine(t):
    key = id(t)
    hit = _AFFINE_CACHE.get(key)
    if hit is None or hit[0] is not t:
        hit = (t, affine_parts(t.map))
        _AFFINE_CACHE[key] = hit
    return hit[1]


def dual_log_pdf(dist: S.Distribution, u):
    """Log density of ``dist`` at a dual argument."""
    if dist.tag == "normal":
        return -0.5 * (u * u) - 0.5 * math.log(2.0 * math.pi)
    if dist.tag == "exponential":
        return -u
    if dist.tag == "logistic":
        return -u - 2.0 * D.softplus(-u)
    if dist.tag == "cauchy":
        return -math.log(math.pi) - D.log(1.0 + u * u)
    raise ValueError(dist.tag)


class Evaluator:
    """Tree-walking evaluator shared by all denotational modes.

    ``smooth`` selects the smoothed conditional; ``cfg`` supplies eta for
    conditionals and for explicit ``sigma`` nodes.  With ``score=True``
    transforms return their value with partials removed and accumulate the
    log density of the variational family in ``self.logq``.
    """

    def __init__(self, theta, trace, smooth=False, cfg=None, guards=None, score=False):
        self.theta = theta
        self.cursor = TraceCursor(trace)
        self.smooth = smooth
        self.cfg = cfg
        self.guards = guards
        self.score = score
        self.logq = 0.0

    def run(self, body):
        v = self.eval(body, {})
        if self.cursor.position != self.cursor.length:
            raise EvaluationError(
                f"trace length mismatch: consumed {self.cursor.position} of {self.cursor.length}")
        return v

    def eval(self, t, env):
        tt = type(t)
        if tt is S.Const:
            return t.value
        if tt is S.Var:
            return env[t.name]
        if tt is S.Param:
            return self.theta[t.index]
        if tt is S.Add:
            return self.eval(t.left, env) + self.eval(t.right, env)
        if tt is S.Mul:
            return self.eval(t.left, env) * self.eval(t.right, env)
        if tt is S.Neg:
            return -self.eval(t.arg, env)
        if tt is S.Inv:
            return D.inv(self.eval(t.arg, env))
        if tt is S.Exp:
            return D.exp(self.eval(t.arg, env))
        if tt is S.Log:
            return D.log(self.eval(t.arg, env))
        if tt is S.SigmaEta:
            if self.cfg is None:
                raise EvaluationError("sigma node requires a smoothing configuration")
            return D.sigma_eta(self.eval(t.arg, env), self.cfg.eta)
        if tt is S.If:
            g = self.eval(t.guard, env)
            if is_function(g):
                raise EvaluationError("guard is not a real")
            if self.guards is not None:
                self.guards.append(D.value_of(g))
            m = self.eval(t.then, env)
            n = self.eval(t.else_, env)
            if self.smooth:
                if self.cfg is None:
                    raise EvaluationError("smoothed evaluation requires eta")
                eta = self.cfg.eta
                return combine_safe(D.sigma_eta(-g, eta), m, D.sigma_eta(g, eta), n)
            return select(np.asarray(D.value_of(g)) < 0, m, n)
        if tt is S.Sample:
            return self.cursor.next()
        if tt is S.Transform:
            if self.score:
                return self._score_transform(t, env)
            f = self.eval(t.map, env)
            return self.apply(f, self.cursor.next())
        if tt is S.Lam:
            return Closure(t.binder, t.body, env)
        if tt is S.App:
            f = self.eval(t.fn, env)
            a = self.eval(t.arg, env)
            return self.apply(f, a)
        if tt is S.Times or tt is S.Pow:
            return self.eval(_desugared(t), env)
        raise EvaluationError(f"cannot evaluate {t!r}")

    def apply(self, f, a):
        if isinstance(f, Closure):
            return self.eval(f.body, {**f.env, f.binder: a})
        if isinstance(f, Combo):
            return combine_safe(f.w1, self.apply(f.v1, a), f.w2, self.apply(f.v2, a))
        if isinstance(f, Choice):
            return select(f.mask, self.apply(f.v1, a), self.apply(f.v2, a))
        raise EvaluationError("application of a non-function")

    def _score_transform(self, t, env):
        parts = _affine(t)
        if parts is None:
            raise EvaluationError("score estimator unavailable: non-affine transform")
        a = self.eval(parts.scale, env) if parts.scale is not None else 1.0
        b = self.eval(parts.shift, env) if parts.shift is not None else 0.0
        s = self.cursor.next()
        z = D.value_of(a) * s + D.value_of(b)
        u = (z - b) * D.inv(a) if parts.scale is not None else z - b
        lq = dual_log_pdf(t.dist, u)
        if parts.scale is not None:
            lq = lq - D.log(a)
        self.logq = self.logq + lq
        return z


# ---------------------------------------------------------------------------
# Program-level entry points

_TRACE_CACHE: dict = {}


def trace_type(p: S.Program):
    """Trace type of a program under the basic system (cached)."""
    key = id(p)
    hit = _TRACE_CACHE.get(key)
    if hit is None or hit[0] is not p:
        tr, ty = infer_basic({}, p.body, p.param_types)
        hit = (p, tr, ty)
        _TRACE_CACHE[key] = hit
    return hit[1]


def body_type(p: S.Program):
    trace_type(p)
    return _TRACE_CACHE[id(p)][2]


def check_theta(p: S.Program, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (len(p.params),):
        raise EvaluationError(f"expected {len(p.params)} parameter values, got {theta.size}")
    for v, (name, b) in zip(theta, p.params):
        if b == "preal" and not v > 0:
            raise EvaluationError(f"domain violation: parameter {name} must be positive")
    return theta


def _prepare(p, theta, trace):
    theta = check_theta(p, theta)
    trace = np.asarray(trace, dtype=float)
    if trace.ndim == 0 or trace.ndim > 2:
        raise EvaluationError("trace must be a vector or a batch of vectors")
    n = len(trace_type(p))
    if trace.shape[-1] != n:
        raise EvaluationError(f"trace length mismatch: expected {n}, got {trace.shape[-1]}")
    return theta, trace


def eval_measurable(p: S.Program, theta, trace, cfg: Optional[SmoothingConfig] = None):
    """Value of the program with hard conditionals (``guard < 0`` takes then)."""
    theta, trace = _prepare(p, theta, trace)
    return Evaluator(list(theta), trace, smooth=False, cfg=cfg).run(p.body)


def eval_smoothed(p: S.Program, theta, trace, cfg: SmoothingConfig):
    """Value of the program with sigmoid-smoothed conditionals."""
    theta, trace = _prepare(p, theta, trace)
    return Evaluator(list(theta), trace, smooth=True, cfg=cfg).run(p.body)


def evaluate(p, theta, trace, cfg=None, smooth=False, guards=None):
    """Batch evaluation returning an array broadcast to the batch shape."""
    theta, trace = _prepare(p, theta, trace)
    v = Evaluator(list(theta), trace, smooth=smooth, cfg=cfg, guards=guards).run(p.body)
    if is_function(v):
        raise EvaluationError("program value is a function")
    return np.broadcast_to(np.asarray(v, dtype=float), trace.shape[:-1]).copy()


def grad_eval(p, theta, trace, cfg=None, smooth=False, guards=None):
    """Value and parameter gradient by forward-mode AD, batched."""
    theta, trace = _prepare(p, theta, trace)
    m = len(theta)
    v = Evaluator(D.variables(theta), trace, smooth=smooth, cfg=cfg, guards=guards).run(p.body)
    if is_function(v):
        raise EvaluationError("program value is a function")
    v = D.lift(v, m)
    shape = trace.shape[:-1]
    val = np.broadcast_to(v.value, shape).copy()
    grad = np.broadcast_to(v.grad, shape + (m,)).copy()
    return val, grad


# ---------------------------------------------------------------------------
# Operational semantics


def _op_num(v):
    if not isinstance(v, S.Const):
        raise EvaluationError("expected a real value")
    return v.value


class _Operational:
    def __init__(self, theta, trace, cfg):
        self.theta = theta
        self.trace = trace
        self.pos = 0
        self.cfg = cfg
        self.logw = 0.0

    def sample(self, dist):
        if self.pos >= len(self.trace):
            raise EvaluationError("trace length mismatch: trace exhausted")
        s = float(self.trace[self.pos])
        self.pos += 1
        self.logw += float(S.log_pdf(dist, s))
        return S.Const(s)

    def run(self, t):
        if isinstance(t, (S.Const, S.Lam)):
            return t
        if isinstance(t, S.Param):
            return S.Const(float(self.theta[t.index]))
        if isinstance(t, S.Var):
            raise EvaluationError(f"free variable {t.name}")
        if isinstance(t, S.Add):
            a = _op_num(self.run(t.left))
            return S.Const(a + _op_num(self.run(t.right)))
        if isinstance(t, S.Mul):
            a = _op_num(self.run(t.left))
            return S.Const(a * _op_num(self.run(t.right)))
        if isinstance(t, S.Neg):
            return S.Const(-_op_num(self.run(t.arg)))
        if isinstance(t, S.Inv):
            return S.Const(float(D.inv(_op_num(self.run(t.arg)))))
        if isinstance(t, S.Exp):
            return S.Const(float(D.exp(_op_num(self.run(t.arg)))))
        if isinstance(t, S.Log):
            return S.Const(float(D.log(_op_num(self.run(t.arg)))))
        if isinstance(t, S.SigmaEta):
            if self.cfg is None:
                raise EvaluationError("sigma node requires a smoothing configuration")
            return S.Const(float(D.sigma_eta(_op_num(self.run(t.arg)), self.cfg.eta)))
        if isinstance(t, S.If):
            r = _op_num(self.run(t.guard))
            m = self.run(t.then)
            n = self.run(t.else_)
            return m if r < 0 else n
        if isinstance(t, S.Sample):
            return self.sample(t.dist)
        if isinstance(t, S.Transform):
            f = self.run(t.map)
            a = self.sample(t.dist)
            return self._beta(f, a)
        if isinstance(t, S.App):
            f = self.run(t.fn)
            a = self.run(t.arg)
            return self._beta(f, a)
        if isinstance(t, (S.Times, S.Pow)):
            return self.run(S.desugar_arith(t))
        raise EvaluationError(f"cannot evaluate {t!r}")

    def _beta(self, f, a):
        if not isinstance(f, S.Lam):
            raise EvaluationError("application of a non-function")
        return self.run(S.substitute(f.body, f.binder, a))


def eval_operational(p: S.Program, theta, trace, cfg: Optional[SmoothingConfig] = None):
    """Big-step evaluation by substitution, returning ``(value, weight, log_weight)``.

    The value is a float or, at function type, a ``lam`` term.  The weight is
    the product of the densities of the drawn samples.
    """
    theta = check_theta(p, theta)
    trace = np.asarray(trace, dtype=float).reshape(-1)
    n = len(trace_type(p))
    if trace.shape[0] != n:
        raise EvaluationError(f"trace length mismatch: expected {n}, got {trace.shape[0]}")
    ev = _Operational(theta, trace, cfg)
    v = ev.run(p.body)
    if ev.pos != n:
        raise EvaluationError("trace length mismatch")
    value = v.value if isinstance(v, S.Const) else v
    return value, math.exp(ev.logw), ev.logw
