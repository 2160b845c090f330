"""Abstract syntax, s-expression parser, pretty printer and distributions.

Terms are immutable dataclasses.  Binder names are made unique when a
program is parsed, so later passes may treat names as global identifiers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np


class ParseError(ValueError):
    """Raised for malformed source text."""

    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"{msg} (line {line}, column {col})" if line else msg)


class SubstitutionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class Distribution:
    tag: str

    def __post_init__(self):
        if self.tag not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution: {self.tag}")

    @property
    def has_finite_moments(self) -> bool:
        return self.tag != "cauchy"

    def __str__(self):
        return self.tag


DISTRIBUTIONS = ("normal", "exponential", "logistic", "cauchy")

NORMAL = Distribution("normal")
EXPONENTIAL = Distribution("exponential")
LOGISTIC = Distribution("logistic")
CAUCHY = Distribution("cauchy")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def log_pdf(d: Distribution, x):
    """Log density; ``-inf`` outside the support.  Vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    if d.tag == "normal":
        return -0.5 * x * x - _LOG_SQRT_2PI
    if d.tag == "exponential":
        with np.errstate(invalid="ignore"):
            return np.where(x >= 0, -x, -np.inf)
    if d.tag == "logistic":
        a = np.abs(x)
        return -a - 2.0 * np.log1p(np.exp(-a))
    if d.tag == "cauchy":
        return -np.log(math.pi) - np.log1p(x * x)
    raise ValueError(f"unknown distribution: {d.tag}")


def pdf(d: Distribution, x):
    """Standard density of ``d`` at ``x`` (0 outside the support)."""
    out = np.exp(log_pdf(d, x))
    return float(out) if out.ndim == 0 else out


def draw(d: Distribution, rng: np.random.Generator, size=None):
    """Draw from ``d`` using an explicitly seeded generator."""
    if d.tag == "normal":
        return rng.standard_normal(size)
    if d.tag == "exponential":
        return rng.standard_exponential(size)
    if d.tag == "logistic":
        return rng.logistic(0.0, 1.0, size)
    if d.tag == "cauchy":
        return rng.standard_cauchy(size)
    raise ValueError(f"unknown distribution: {d.tag}")


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    index: int
    name: str = ""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Neg:
    arg: "Term"


@dataclass(frozen=True)
class Inv:
    arg: "Term"


@dataclass(frozen=True)
class Exp:
    arg: "Term"


@dataclass(frozen=True)
class Log:
    arg: "Term"


@dataclass(frozen=True)
class If:
    guard: "Term"
    then: "Term"
    else_: "Term"


@dataclass(frozen=True)
class Sample:
    dist: Distribution


@dataclass(frozen=True)
class Transform:
    dist: Distribution
    map: "Term"


@dataclass(frozen=True)
class Lam:
    binder: str
    body: "Term"
    hint: Optional[object] = field(default=None, compare=False)


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"


@dataclass(frozen=True)
class Times:
    k: int
    arg: "Term"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("times requires k >= 1")


@dataclass(frozen=True)
class Pow:
    arg: "Term"
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("pow requires k >= 1")


@dataclass(frozen=True)
class SigmaEta:
    arg: "Term"


Term = Union[Var, Param, Const, Add, Mul, Neg, Inv, Exp, Log, If, Sample,
             Transform, Lam, App, Times, Pow, SigmaEta]

UNARY = (Neg, Inv, Exp, Log, SigmaEta)
BINARY = (Add, Mul)


@dataclass(frozen=True)
class Program:
    params: tuple  # ((name, "real" | "preal"), ...)
    body: Term

    def __post_init__(self):
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be distinct")
        for _, b in self.params:
            if b not in ("real", "preal"):
                raise ValueError(f"unknown parameter type {b!r}")
        fv = free_vars(self.body)
        if fv:
            raise ValueError(f"free variables in body: {sorted(fv)}")

    @property
    def param_names(self):
        return tuple(n for n, _ in self.params)

    @property
    def param_types(self):
        return tuple(b for _, b in self.params)

    def __str__(self):
        return pretty_program(self)


def children(t: Term) -> tuple:
    if isinstance(t, BINARY):
        return (t.left, t.right)
    if isinstance(t, UNARY):
        return (t.arg,)
    if isinstance(t, If):
        return (t.guard, t.then, t.else_)
    if isinstance(t, Transform):
        return (t.map,)
    if isinstance(t, Lam):
        return (t.body,)
    if isinstance(t, App):
        return (t.fn, t.arg)
    if isinstance(t, (Times, Pow)):
        return (t.arg,)
    return ()


def iter_nodes(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def node_count(t: Term) -> int:
    return sum(1 for _ in iter_nodes(t))


def free_vars(t: Term) -> frozenset:
    if isinstance(t, Var):
        return frozenset([t.name])
    if isinstance(t, Lam):
        return free_vars(t.body) - {t.binder}
    out = frozenset()
    for c in children(t):
        out |= free_vars(c)
    return out


def draws_samples(t: Term) -> bool:
    """True if evaluating ``t`` itself (not a lambda body) consumes samples."""
    if isinstance(t, (Sample, Transform)):
        return True
    if isinstance(t, Lam):
        return False
    return any(draws_samples(c) for c in children(t))


def _rebuild(t: Term, kids: list) -> Term:
    if isinstance(t, BINARY):
        return type(t)(kids[0], kids[1])
    if isinstance(t, UNARY):
        return type(t)(kids[0])
    if isinstance(t, If):
        return If(*kids)
    if isinstance(t, Transform):
        return Transform(t.dist, kids[0])
    if isinstance(t, Lam):
        return Lam(t.binder, kids[0], t.hint)
    if isinstance(t, App):
        return App(kids[0], kids[1])
    if isinstance(t, Times):
        return Times(t.k, kids[0])
    if isinstance(t, Pow):
        return Pow(kids[0], t.k)
    return t


def _fresh(base: str, avoid) -> str:
    stem = base.split("_")[0] if "_" in base else base
    i = 1
    while f"{stem}_{i}" in avoid:
        i += 1
    return f"{stem}_{i}"


def substitute(m: Term, x: str, v: Term) -> Term:
    """Capture-avoiding substitution ``m[v/x]``.

    ``v`` must draw no samples when evaluated; abstractions whose bodies
    sample are values and are accepted.
    """
    if draws_samples(v):
        raise SubstitutionError("substituting sampling term")
    fv = free_vars(v)
    return _subst(m, x, v, fv)


def _subst(m, x, v, fv):
    if isinstance(m, Var):
        return v if m.name == x else m
    if isinstance(m, Lam):
        if m.binder == x:
            return m
        if m.binder in fv:
            new = _fresh(m.binder, fv | free_vars(m.body) | {x})
            body = _subst(m.body, m.binder, Var(new), frozenset([new]))
            return Lam(new, _subst(body, x, v, fv), m.hint)
        return Lam(m.binder, _subst(m.body, x, v, fv), m.hint)
    kids = children(m)
    if not kids:
        return m
    return _rebuild(m, [_subst(c, x, v, fv) for c in kids])


def desugar_arith(m: Term) -> Term:
    """Expand ``times``/``pow`` into right-nested ``add``/``mul`` chains."""
    if isinstance(m, Times):
        a = desugar_arith(m.arg)
        out = a
        for _ in range(m.k - 1):
            out = Add(a, out)
        return out
    if isinstance(m, Pow):
        a = desugar_arith(m.arg)
        out = a
        for _ in range(m.k - 1):
            out = Mul(a, out)
        return out
    kids = children(m)
    if not kids:
        return m
    return _rebuild(m, [desugar_arith(c) for c in kids])


def alpha_equal(a: Term, b: Term) -> bool:
    return _alpha(a, b, {}, {}, [0])


def _alpha(a, b, ea, eb, ctr):
    if type(a) is not type(b):
        return False
    if isinstance(a, Var):
        la, lb = ea.get(a.name), eb.get(b.name)
        if la is None and lb is None:
            return a.name == b.name
        return la == lb
    if isinstance(a, Lam):
        ctr[0] += 1
        k = ctr[0]
        return _alpha(a.body, b.body, {**ea, a.binder: k}, {**eb, b.binder: k}, ctr)
    if isinstance(a, Param):
        return a.index == b.index
    if isinstance(a, Const):
        return a.value == b.value
    if isinstance(a, (Sample, Transform)) and a.dist != b.dist:
        return False
    if isinstance(a, (Times, Pow)) and a.k != b.k:
        return False
    ka, kb = children(a), children(b)
    return len(ka) == len(kb) and all(_alpha(x, y, ea, eb, ctr) for x, y in zip(ka, kb))


# ---------------------------------------------------------------------------
# Concrete syntax

_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|(\()|(\))|([^\s()]+))")
IDENT = re.compile(r"^[a-zA-Z][a-zA-Z0-9_]*$")
INTERNAL_IDENT = re.compile(r"^%[a-zA-Z][a-zA-Z0-9_]*$")
NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
POSINT = re.compile(r"^\+?\d+$")

KEYWORDS = {"add", "mul", "neg", "inv", "exp", "log", "if", "sample", "transform",
            "lam", "app", "times", "pow", "const", "sigma", "program", "params", "body"}


@dataclass
class _Atom:
    text: str
    line: int
    col: int


@dataclass
class _List:
    items: list
    line: int
    col: int


def _read(text: str):
    pos, line, line_start = 0, 1, 0
    stack: list = [_List([], 1, 1)]
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        # line bookkeeping
        nl = text.count("\n", pos, start)
        if nl:
            line += nl
            line_start = text.rfind("\n", 0, start) + 1
        col = start - line_start + 1
        if m.group(2):
            stack.append(_List([], line, col))
        elif m.group(3):
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            stack[-1].items.append(done)
        elif m.group(4):
            stack[-1].items.append(_Atom(m.group(4), line, col))
        seg = text[start:m.end()]
        nl = seg.count("\n")
        if nl:
            line += nl
            line_start = start + seg.rfind("\n") + 1
        pos = m.end()
    if len(stack) != 1:
        top = stack[-1]
        raise ParseError("unbalanced '('", top.line, top.col)
    return stack[0].items


class _Parser:
    def __init__(self, params, internal: bool):
        self.params = {n: i for i, (n, _) in enumerate(params)}
        self.internal = internal

    def err(self, msg, node):
        raise ParseError(msg, node.line, node.col)

    def ident(self, node, what="identifier"):
        if not isinstance(node, _Atom):
            self.err(f"expected {what}", node)
        if not self.internal and INTERNAL_IDENT.match(node.text):
            self.err(f"reserved internal form {node.text!r}", node)
        ok = IDENT.match(node.text) or (self.internal and INTERNAL_IDENT.match(node.text))
        if not ok or node.text in KEYWORDS:
            self.err(f"invalid {what} {node.text!r}", node)
        return node.text

    def dist(self, node):
        if not isinstance(node, _Atom):
            self.err("expected distribution", node)
        if node.text not in DISTRIBUTIONS:
            self.err(f"unknown distribution {node.text!r}", node)
        return Distribution(node.text)

    def posint(self, node):
        if not isinstance(node, _Atom) or not POSINT.match(node.text) or int(node.text) < 1:
            self.err("expected positive integer", node)
        return int(node.text)

    def term(self, node, scope):
        if isinstance(node, _Atom):
            t = node.text
            if NUMBER.match(t):
                return Const(float(t))
            name = self.ident(node, "variable")
            if name in scope:
                return Var(name)
            if name in self.params:
                return Param(self.params[name], name)
            self.err(f"unbound identifier {name!r}", node)
        if not node.items:
            self.err("empty form", node)
        head = node.items[0]
        if not isinstance(head, _Atom):
            self.err("expected form name", node)
        args = node.items[1:]
        h = head.text

        def arity(n):
            if len(args) != n:
                self.err(f"'{h}' expects {n} argument(s), got {len(args)}", node)

        if h == "const":
            arity(1)
            if not isinstance(args[0], _Atom) or not NUMBER.match(args[0].text):
                self.err("expected number", args[0])
            return Const(float(args[0].text))
        if h in ("add", "mul"):
            arity(2)
            cls = Add if h == "add" else Mul
            return cls(self.term(args[0], scope), self.term(args[1], scope))
        if h in ("neg", "inv", "exp", "log"):
            arity(1)
            cls = {"neg": Neg, "inv": Inv, "exp": Exp, "log": Log}[h]
            return cls(self.term(args[0], scope))
        if h == "sigma":
            if not self.internal:
                self.err("reserved internal form 'sigma'", node)
            arity(1)
            return SigmaEta(self.term(args[0], scope))
        if h == "if":
            arity(3)
            return If(*(self.term(a, scope) for a in args))
        if h == "sample":
            arity(1)
            return Sample(self.dist(args[0]))
        if h == "transform":
            arity(2)
            return Transform(self.dist(args[0]), self.term(args[1], scope))
        if h == "lam":
            arity(2)
            b = args[0]
            hint = None
            if isinstance(b, _List):
                if len(b.items) != 2:
                    self.err("binder must be IDENT or (IDENT type)", b)
                name = self.ident(b.items[0], "binder")
                hint = parse_type_node(b.items[1], self)
            else:
                name = self.ident(b, "binder")
            return Lam(name, self.term(args[1], scope | {name}), hint)
        if h == "app":
            arity(2)
            return App(self.term(args[0], scope), self.term(args[1], scope))
        if h == "times":
            arity(2)
            return Times(self.posint(args[0]), self.term(args[1], scope))
        if h == "pow":
            arity(2)
            return Pow(self.term(args[0], scope), self.posint(args[1]))
        self.err(f"unknown form {h!r}", node)


def parse_type_node(node, parser: _Parser):
    """Binder hint: ``real`` / ``preal@{e=1}`` / ``(fun A (trace d ...) B)``."""
    from .types import parse_base_hint, Fun, Slot
    if isinstance(node, _Atom):
        try:
            return parse_base_hint(node.text)
        except ValueError as exc:
            parser.err(str(exc), node)
    items = node.items
    if len(items) != 4 or not isinstance(items[0], _Atom) or items[0].text != "fun":
        parser.err("expected (fun ARG (trace DIST...) RES)", node)
    tr = items[2]
    if not isinstance(tr, _List) or not tr.items or not isinstance(tr.items[0], _Atom) \
            or tr.items[0].text != "trace":
        parser.err("expected (trace DIST...)", tr)
    dists = [parser.dist(d) for d in tr.items[1:]]
    slots = tuple(Slot(("hint", j), d) for j, d in enumerate(dists))
    return Fun(parse_type_node(items[1], parser), slots, parse_type_node(items[3], parser))


def _collect_names(t: Term, out: set):
    for n in iter_nodes(t):
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Lam):
            out.add(n.binder)


def alpha_rename(t: Term, reserved=()) -> Term:
    """Rename binders so every binder name in ``t`` is unique."""
    used = set(reserved)
    _collect_names(t, used)
    seen: set = set()

    def go(m, env):
        if isinstance(m, Var):
            return Var(env.get(m.name, m.name))
        if isinstance(m, Lam):
            name = m.binder
            if name in seen or name in reserved:
                name = _fresh(name, used | seen)
                used.add(name)
            seen.add(name)
            return Lam(name, go(m.body, {**env, m.binder: name}), m.hint)
        kids = children(m)
        if not kids:
            return m
        return _rebuild(m, [go(c, env) for c in kids])

    return go(t, {})


def parse_program(text: str, internal: bool = False) -> Program:
    """Parse ``(program (params (x real) ...) (body TERM))``."""
    forms = _read(text)
    if len(forms) != 1 or not isinstance(forms[0], _List):
        raise ParseError("expected a single (program ...) form", 1, 1)
    top = forms[0]
    items = top.items
    if len(items) != 3 or not isinstance(items[0], _Atom) or items[0].text != "program":
        raise ParseError("expected (program (params ...) (body ...))", top.line, top.col)
    ps, bd = items[1], items[2]
    if not isinstance(ps, _List) or not ps.items or getattr(ps.items[0], "text", None) != "params":
        raise ParseError("expected (params ...)", ps.line, ps.col)
    if not isinstance(bd, _List) or len(bd.items) != 2 or getattr(bd.items[0], "text", None) != "body":
        raise ParseError("expected (body TERM)", bd.line, bd.col)
    probe = _Parser((), internal)
    params = []
    for decl in ps.items[1:]:
        if not isinstance(decl, _List) or len(decl.items) != 2:
            probe.err("parameter declaration must be (IDENT real|preal)", decl)
        name = probe.ident(decl.items[0], "parameter")
        ty = decl.items[1]
        if not isinstance(ty, _Atom) or ty.text not in ("real", "preal"):
            probe.err("parameter type must be real or preal", ty)
        params.append((name, ty.text))
    if len({n for n, _ in params}) != len(params):
        raise ParseError("duplicate parameter name", ps.line, ps.col)
    body = _Parser(params, internal).term(bd.items[1], frozenset())
    body = alpha_rename(body, reserved={n for n, _ in params})
    return Program(tuple(params), body)


def parse_term(text: str, params=(), free=(), internal: bool = False) -> Term:
    """Parse a bare term.

    ``params`` is a sequence of (name, type) pairs; names in ``free`` are
    read as free variables.
    """
    forms = _read(text)
    if len(forms) != 1:
        raise ParseError("expected exactly one term", 1, 1)
    body = _Parser(tuple(params), internal).term(forms[0], frozenset(free))
    return alpha_rename(body, reserved={n for n, _ in params} | set(free))


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x)) if x != 0 or math.copysign(1, x) > 0 else "-0.0"
    return repr(x)


def pretty(t: Term, param_names=None) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Param):
        if param_names is not None:
            return param_names[t.index]
        return t.name or f"theta{t.index + 1}"
    if isinstance(t, Const):
        return _num(t.value)
    p = lambda s: pretty(s, param_names)  # noqa: E731
    if isinstance(t, Add):
        return f"(add {p(t.left)} {p(t.right)})"
    if isinstance(t, Mul):
        return f"(mul {p(t.left)} {p(t.right)})"
    if isinstance(t, Neg):
        return f"(neg {p(t.arg)})"
    if isinstance(t, Inv):
        return f"(inv {p(t.arg)})"
    if isinstance(t, Exp):
        return f"(exp {p(t.arg)})"
    if isinstance(t, Log):
        return f"(log {p(t.arg)})"
    if isinstance(t, SigmaEta):
        return f"(sigma {p(t.arg)})"
    if isinstance(t, If):
        return f"(if {p(t.guard)} {p(t.then)} {p(t.else_)})"
    if isinstance(t, Sample):
        return f"(sample {t.dist})"
    if isinstance(t, Transform):
        return f"(transform {t.dist} {p(t.map)})"
    if isinstance(t, Lam):
        if t.hint is not None:
            from .types import show_type
            return f"(lam ({t.binder} {show_type(t.hint, hint=True)}) {p(t.body)})"
        return f"(lam {t.binder} {p(t.body)})"
    if isinstance(t, App):
        return f"(app {p(t.fn)} {p(t.arg)})"
    if isinstance(t, Times):
        return f"(times {t.k} {p(t.arg)})"
    if isinstance(t, Pow):
        return f"(pow {p(t.arg)} {t.k})"
    raise TypeError(f"not a term: {t!r}")


def pretty_program(p: Program) -> str:
    ps = " ".join(f"({n} {b})" for n, b in p.params)
    return f"(program (params {ps}) (body {pretty(p.body, p.param_names)}))"
