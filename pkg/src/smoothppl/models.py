"""Model bundles and the built-in models.

The optimisers minimise ``E[[M]](theta)``.  Built-ins whose source term is
an ELBO-style quantity to maximise (``example1``, ``prop2``) keep that term
as ``BuiltinModel.program`` and minimise its negation in
``BuiltinModel.model``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import syntax as S
from .checker import affine_parts, is_diffeomorphic_transform

EPS_POS = 1e-6
DEFAULT_BOX = (-100.0, 100.0)
SCORE_BASES = ("normal", "logistic", "exponential")


class UnknownModel(KeyError):
    pass


@dataclass(frozen=True)
class ScoreSlot:
    """Affine transform ``s -> scale * s + shift`` of one base distribution."""
    dist: S.Distribution
    scale: Optional[S.Term]
    shift: Optional[S.Term]


def score_support(p: S.Program):
    """Per-transform affine data, or None if some transform is unsuitable."""
    out = []
    for node in S.iter_nodes(p.body):
        if isinstance(node, S.Transform):
            if node.dist.tag not in SCORE_BASES:
                return None
            if not is_diffeomorphic_transform(node.map, p.param_types):
                return None
            parts = affine_parts(node.map)
            out.append(ScoreSlot(node.dist, parts.scale, parts.shift))
    return tuple(out)


@dataclass(frozen=True)
class Model:
    """Integrand of the minimisation problem plus the parameter domain."""
    program: S.Program
    lower: tuple
    upper: tuple
    score_support: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        if len(self.lower) != len(self.program.params) or len(self.upper) != len(self.program.params):
            raise ValueError("domain bounds must match the parameter count")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise ValueError("domain box must be nonempty")

    @classmethod
    def from_program(cls, p: S.Program, box=DEFAULT_BOX, eps_pos: float = EPS_POS, name: str = ""):
        lower, upper = [], []
        for _, b in p.params:
            if b == "preal":
                lower.append(eps_pos)
                upper.append(math.inf)
            else:
                lower.append(float(box[0]))
                upper.append(float(box[1]))
        return cls(p, tuple(lower), tuple(upper), score_support(p), name)

    @property
    def nparams(self) -> int:
        return len(self.program.params)


def project_domain(model: Model, theta) -> np.ndarray:
    """Clip each coordinate into the model's domain box."""
    return np.clip(np.asarray(theta, dtype=float), model.lower, model.upper)


@dataclass(frozen=True)
class RunConfig:
    """Recommended optimiser settings for a built-in model."""
    lr: float = 0.001
    iters: int = 5000
    mc_samples: int = 16
    eta: float = 0.15


@dataclass(frozen=True)
class BuiltinModel:
    name: str
    program: S.Program
    model: Model
    theta0: tuple
    run_config: RunConfig = field(default_factory=RunConfig)
    description: str = ""


def _prog(params: str, body: str) -> S.Program:
    return S.parse_program(f"(program (params {params}) (body {body}))")


def _negated(p: S.Program) -> S.Program:
    return S.Program(p.params, S.Neg(p.body))


SQRT_2PI = math.sqrt(2.0 * math.pi)

EXAMPLE1 = """
(app (lam z (add (mul -0.5 (mul theta theta)) (if z 0 1)))
     (transform normal (lam s (add s theta))))
"""

EX0G = "(if 0 (add (mul theta theta) 1) (mul (add theta -1) (add theta -1)))"

NCONV = "(if (transform normal (lam s (add s theta))) 0 1)"

# density of N(m, s^2) at x
NORMAL_PDF = f"""
(lam (x real) (lam (m real) (lam (s preal)
  (mul (inv (mul {SQRT_2PI!r} s))
       (exp (mul -0.5 (pow (mul (add x (neg m)) (inv s)) 2)))))))
"""

PROP2 = f"""
(app (lam n
  (app (lam z
    (add (add (log (app (app (app n z) 0) 1))
              (if z (log (app (app (app n 0) -2) 1))
                    (log (app (app (app n 0) 5) 1))))
         (neg (log (app (app (app n z) theta) 1)))))
   (transform normal (lam s (add s theta)))))
 {NORMAL_PDF})
"""

TEXTMSG_COUNTS = (13, 24, 8, 24, 7)
TEXTMSG_PRIOR_RATE = math.log(15.0)
TEXTMSG_PRIOR_SWITCH = (3.0, 1.5)


def _textmsg_body() -> str:
    """Negated single-sample ELBO of a change-point Poisson model.

    Latents: log-rates ``l1``, ``l2`` and switch day ``tau``; each has a
    normal variational family with mean ``mu_k`` and log-scale ``om_k``.
    Day ``i`` uses ``l1`` when ``i - tau < 0`` and ``l2`` otherwise.
    """
    loglik = []
    for i, c in enumerate(TEXTMSG_COUNTS, start=1):
        rate = f"(if (add {i} (neg tau)) l1 l2)"
        loglik.append(f"(app (lam r (add (mul {c} r) (neg (exp r)))) {rate})")
    lp = TEXTMSG_PRIOR_RATE
    m, sd = TEXTMSG_PRIOR_SWITCH
    prior = [
        f"(mul -0.5 (pow (add l1 (neg {lp!r})) 2))",
        f"(mul -0.5 (pow (add l2 (neg {lp!r})) 2))",
        f"(mul -0.5 (pow (mul (add tau (neg {m!r})) {1 / sd!r}) 2))",
    ]
    # log q up to constants: -0.5 ((z - mu) exp(-om))^2 - om
    logq = [
        f"(add (mul -0.5 (pow (mul (add {z} (neg {mu})) (exp (neg {om}))) 2)) (neg {om}))"
        for z, mu, om in (("l1", "mu1", "om1"), ("l2", "mu2", "om2"), ("tau", "mu3", "om3"))
    ]

    def total(terms):
        out = terms[0]
        for t in terms[1:]:
            out = f"(add {out} {t})"
        return out

    elbo = f"(add {total(loglik + prior)} (neg {total(logq)}))"
    body = f"(neg {elbo})"
    for z, mu, om in (("tau", "mu3", "om3"), ("l2", "mu2", "om2"), ("l1", "mu1", "om1")):
        body = f"(app (lam {z} {body}) (transform normal (lam s (add (mul (exp {om}) s) {mu}))))"
    return body


XOR_POINTS = ((0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0))
XOR_PRIOR = 0.01


def _xornet_body() -> str:
    """Expected squared error of a 2-2-1 step-activation network.

    Weights ``w1..w9`` are independent normals centred at ``mu1..mu9``;
    unit ``j`` fires (value 1) when its pre-activation is nonnegative.
    """
    def unit(pre):
        return f"(if {pre} 0 1)"

    def lin(ws, xs, b):
        out = b
        for w, x in zip(ws, xs):
            out = f"(add (mul {w} {x!r}) {out})"
        return out

    errs = []
    for x1, x2, y in XOR_POINTS:
        h1 = unit(lin(("w1", "w2"), (x1, x2), "w3"))
        h2 = unit(lin(("w4", "w5"), (x1, x2), "w6"))
        o = unit(f"(add (mul w7 {h1}) (add (mul w8 {h2}) w9))")
        errs.append(f"(pow (add {o} {-y!r}) 2)")
    loss = errs[0]
    for e in errs[1:]:
        loss = f"(add {loss} {e})"
    reg_terms = [f"(mul w{k} w{k})" for k in range(1, 10)]
    reg = reg_terms[0]
    for t in reg_terms[1:]:
        reg = f"(add {reg} {t})"
    body = f"(add {loss} (mul {XOR_PRIOR!r} {reg}))"
    for k in range(9, 0, -1):
        body = f"(app (lam w{k} {body}) (transform normal (lam s (add s mu{k}))))"
    return body


def _build(name: str) -> BuiltinModel:
    if name == "example1":
        p = _prog("(theta real)", EXAMPLE1)
        return BuiltinModel(name, p, Model.from_program(_negated(p), name=name), (-1.0,),
                            description="step objective with a normal variational family")
    if name == "prop2":
        p = _prog("(theta real)", PROP2)
        return BuiltinModel(name, p, Model.from_program(_negated(p), name=name), (0.0,),
                            description="ELBO of a model whose likelihood switches at z = 0")
    if name == "ex0g":
        p = _prog("(theta real)", EX0G)
        return BuiltinModel(name, p, Model.from_program(p, name=name), (0.0,),
                            description="constant guard: smoothing moves the minimiser")
    if name == "nconv":
        p = _prog("(theta real)", NCONV)
        return BuiltinModel(name, p, Model.from_program(p, name=name), (0.0,),
                            description="indicator of a shifted normal")
    if name == "textmsg-mini":
        params = " ".join(f"(mu{k} real) (om{k} real)" for k in (1, 2, 3))
        p = _prog(params, _textmsg_body())
        theta0 = (TEXTMSG_PRIOR_RATE, 0.0, TEXTMSG_PRIOR_RATE, 0.0, 3.0, 0.0)
        return BuiltinModel(name, p, Model.from_program(p, name=name), theta0,
                            description="Poisson change point over five daily counts")
    if name == "xornet-mini":
        params = " ".join(f"(mu{k} real)" for k in range(1, 10))
        p = _prog(params, _xornet_body())
        theta0 = (1.0, 1.0, -0.5, -1.0, -1.0, 1.5, 1.0, 1.0, -1.5)
        return BuiltinModel(name, p, Model.from_program(p, name=name), theta0,
                            description="2-2-1 step network on the XOR points")
    raise UnknownModel(f"unknown model {name!r}")


BUILTIN_NAMES = ("example1", "prop2", "ex0g", "nconv", "textmsg-mini", "xornet-mini")

_CACHE: dict = {}


def builtin(name: str) -> BuiltinModel:
    """Look up a built-in model by name."""
    if name not in _CACHE:
        _CACHE[name] = _build(name)
    return _CACHE[name]
