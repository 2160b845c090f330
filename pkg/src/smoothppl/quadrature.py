"""Quadrature oracle for expectations over traces of length at most 2.

Each axis is truncated to a fixed interval and split at the points where a
guard changes sign (located by bisection), and composite Simpson is applied
on every piece.  Two-dimensional integrals are iterated, with inner
breakpoints found separately for every outer node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from . import syntax as S
from .semantics import SmoothingConfig, _prepare, evaluate, grad_eval, trace_type

TRUNCATION = {"normal": (-10.0, 10.0), "logistic": (-30.0, 30.0), "exponential": (0.0, 40.0)}
# probe values of the other coordinate used to find outer breakpoints in 2-D
_PROBES = {"normal": (-0.7, 0.3, 1.3), "logistic": (-0.7, 0.3, 1.3), "exponential": (0.3, 1.3, 2.1)}
GRID = 2001
CHUNK = 200_000
NUDGE = 1e-9


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureResult:
    value: object  # float, or array for gradients
    widening_delta: float

    def __float__(self):
        return float(self.value)


def support(dist: S.Distribution, scale: float = 1.0):
    if dist.tag not in TRUNCATION:
        raise QuadratureError(f"no truncation for heavy-tailed distribution {dist.tag}")
    lo, hi = TRUNCATION[dist.tag]
    return lo * scale, hi * scale


def simpson_nodes(lo: float, hi: float, breaks, nodes: int):
    """Nodes and weights of piecewise composite Simpson on ``[lo, hi]``."""
    pts = [lo] + sorted(b for b in breaks if lo < b < hi) + [hi]
    cuts = [pts[0]]
    for p in pts[1:]:
        if p - cuts[-1] > 1e-13 * max(1.0, abs(p)):
            cuts.append(p)
    if len(cuts) == 1:
        cuts.append(hi)
    total = hi - lo
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(2, int(np.ceil((nodes - 1) * (b - a) / total / 2.0)))
        n = 2 * k + 1
        x = np.linspace(a, b, n)
        h = (b - a) / (n - 1)
        # the integrand may jump at a breakpoint: take one-sided limits
        x[0] += NUDGE * h
        x[-1] -= NUDGE * h
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        xs.append(x)
        ws.append(w * h / 3.0)
    return np.concatenate(xs), np.concatenate(ws)


def _guard_values(p, theta, traces, cfg):
    guards: list = []
    evaluate(p, theta, traces, cfg=cfg, smooth=False, guards=guards)
    shape = traces.shape[:-1]
    return [np.broadcast_to(np.asarray(g, dtype=float), shape) for g in guards]


def _breakpoints(p, theta, rows, j, lo, hi, cfg, grid=GRID):
    """Guard sign changes along axis ``j`` for each row of ``rows``."""
    R, n = rows.shape
    xs = np.linspace(lo, hi, grid)
    tr = np.repeat(rows[:, None, :], grid, axis=1)
    tr[:, :, j] = xs
    gs = _guard_values(p, theta, tr.reshape(-1, n), cfg)
    out = [[] for _ in range(R)]
    if not gs:
        return out
    br_rows, br_k, br_a, br_b = [], [], [], []
    for k, g in enumerate(gs):
        g = g.reshape(R, grid)
        neg = g < 0
        r, i = np.nonzero(neg[:, 1:] != neg[:, :-1])
        br_rows.append(r)
        br_k.append(np.full(r.shape, k))
        br_a.append(xs[i])
        br_b.append(xs[i + 1])
    r = np.concatenate(br_rows)
    if r.size == 0:
        return out
    k = np.concatenate(br_k)
    a = np.concatenate(br_a)
    b = np.concatenate(br_b)
    base = rows[r]

    def gk(x):
        t = base.copy()
        t[:, j] = x
        vals = _guard_values(p, theta, t, cfg)
        return np.stack(vals)[k, np.arange(len(k))]

    neg_a = gk(a) < 0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if np.all((mid == a) | (mid == b)):
            break
        same = (gk(mid) < 0) == neg_a
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    for row, x in zip(r, 0.5 * (a + b)):
        out[row].append(float(x))
    return out


def _integrate(p, theta, integrand, cfg, nodes, scale):
    """Integral of ``integrand(traces) * density`` over the truncated box."""
    dists = [s.dist for s in trace_type(p)]
    n = len(dists)
    if n == 0:
        val = integrand(np.zeros((1, 0)))
        return np.asarray(val, dtype=float).reshape(1, -1)[0]
    if n > 2:
        raise QuadratureError("trace dimension too high for oracle")
    if n == 1:
        lo, hi = support(dists[0], scale)
        br = _breakpoints(p, theta, np.zeros((1, 1)), 0, lo, hi, cfg)[0]
        x, w = simpson_nodes(lo, hi, br, nodes)
        f = _chunked(integrand, x[:, None])
        return (w * S.pdf(dists[0], x)) @ f
    lo0, hi0 = support(dists[0], scale)
    lo1, hi1 = support(dists[1], scale)
    probes = np.array([[0.0, v] for v in _PROBES[dists[1].tag]])
    br0 = sorted(set(b for row in _breakpoints(p, theta, probes, 0, lo0, hi0, cfg) for b in row))
    x0, w0 = simpson_nodes(lo0, hi0, br0, nodes)
    rows = np.column_stack([x0, np.zeros_like(x0)])
    br1 = _breakpoints(p, theta, rows, 1, lo1, hi1, cfg)
    flat, owner, weight = [], [], []
    for r, brs in enumerate(br1):
        x1, w1 = simpson_nodes(lo1, hi1, brs, nodes)
        flat.append(np.column_stack([np.full_like(x1, x0[r]), x1]))
        owner.append(np.full(x1.shape, r))
        weight.append(w1 * S.pdf(dists[1], x1))
    tr = np.concatenate(flat)
    owner = np.concatenate(owner)
    weight = np.concatenate(weight)
    f = _chunked(integrand, tr)
    inner = np.zeros((len(x0), f.shape[1]))
    np.add.at(inner, owner, weight[:, None] * f)
    return (w0 * S.pdf(dists[0], x0)) @ inner


def _chunked(integrand, traces):
    parts = []
    for i in range(0, len(traces), CHUNK):
        v = np.asarray(integrand(traces[i:i + CHUNK]), dtype=float)
        parts.append(v.reshape(v.shape[0], -1))
    return np.concatenate(parts)


def quadrature_integral(p: S.Program, theta, fn: Callable, cfg: Optional[SmoothingConfig] = None,
                        nodes: int = 4001, scale: float = 1.0) -> np.ndarray:
    """``E_s[fn(s)]`` for a batched integrand ``fn(traces) -> (B,) or (B, k)``.

    ``scale`` multiplies every truncation interval; guard breakpoints are
    taken from ``p`` (evaluated with ``cfg`` if it has sigma nodes).
    """
    theta, _ = _prepare(p, theta, np.zeros(len(trace_type(p))))
    for s in trace_type(p):
        support(s.dist)
    return _integrate(p, theta, fn, cfg, nodes, scale)


def _run(p, theta, integrand, cfg, nodes, widen):
    for s in trace_type(p):
        support(s.dist)
    v = _integrate(p, theta, integrand, cfg, nodes, 1.0)
    delta = float("nan")
    if widen:
        v2 = _integrate(p, theta, integrand, cfg, nodes, 1.5)
        delta = float(np.max(np.abs(v2 - v)))
    return v, delta


def quadrature_expectation(p: S.Program, theta, cfg: Optional[SmoothingConfig] = None,
                           nodes: int = 4001, widen: bool = True) -> QuadratureResult:
    """``E_s[[M](theta, s)]`` (smoothed when ``cfg`` is given)."""
    theta, _ = _prepare(p, theta, np.zeros(len(trace_type(p))))
    smooth = cfg is not None

    def f(tr):
        return evaluate(p, theta, tr, cfg=cfg, smooth=smooth)

    v, delta = _run(p, theta, f, cfg, nodes, widen)
    return QuadratureResult(float(v[0]), delta)


def quadrature_gradient(p: S.Program, theta, cfg: Optional[SmoothingConfig] = None,
                        nodes: int = 4001, h: float = 1e-4, widen: bool = False) -> QuadratureResult:
    """Gradient of the expectation.

    With ``cfg`` the smoothed integrand is differentiable and its AD gradient
    is integrated.  Without it the expectation of the hard program is
    differentiated by central differences, which accounts for the moving
    discontinuities that the pathwise gradient misses.
    """
    theta, _ = _prepare(p, theta, np.zeros(len(trace_type(p))))
    if cfg is not None:
        def f(tr):
            return grad_eval(p, theta, tr, cfg=cfg, smooth=True)[1]
        v, delta = _run(p, theta, f, cfg, nodes, widen)
        return QuadratureResult(np.asarray(v, dtype=float), delta)
    out, deltas = [], []
    for i in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        a = quadrature_expectation(p, up, None, nodes, widen)
        b = quadrature_expectation(p, dn, None, nodes, widen)
        out.append((a.value - b.value) / (2 * h))
        deltas.append(max(a.widening_delta, b.widening_delta) / h if widen else float("nan"))
    return QuadratureResult(np.array(out), max(deltas) if deltas else 0.0)


def stationary_point(p: S.Program, lo: float, hi: float, cfg: Optional[SmoothingConfig] = None,
                     nodes: int = 4001, index: int = 0, theta=None, xtol: float = 1e-8) -> float:
    """Root of one coordinate of the quadrature gradient inside ``[lo, hi]``."""
    base = np.zeros(len(p.params)) if theta is None else np.asarray(theta, dtype=float).copy()

    def g(x):
        t = base.copy()
        t[index] = x
        return float(quadrature_gradient(p, t, cfg, nodes).value[index])

    return float(optimize.brentq(g, lo, hi, xtol=xtol))
