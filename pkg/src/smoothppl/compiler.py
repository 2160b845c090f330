"""Source-to-source smoothing of first-order programs.

Every conditional ``(if L M N)`` becomes
``(app (lam w (add (mul (sigma (neg w)) M) (mul (sigma w) N))) L)`` so the
guard is evaluated once and the output grows by a fixed number of nodes per
conditional.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import syntax as S
from .checker import Checker, System, TypeCheckError
from .types import Base


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class CompiledProgram:
    """A program whose body may contain ``sigma`` nodes and no conditionals."""
    program: S.Program

    @property
    def body(self) -> S.Term:
        return self.program.body

    def __str__(self):
        return S.pretty_program(self.program)


def is_first_order(m: S.Term, params=(), ctx=None) -> bool:
    """True iff binders, application arguments and conditionals are all real-typed.

    Terms that fail basic type checking are not first-order.
    """
    seen = []

    def observer(kind, node, ty):
        seen.append(ty)

    try:
        Checker(System(), params, observer=observer).infer(dict(ctx or {}), m)
    except TypeCheckError:
        return False
    return all(isinstance(t, Base) for t in seen)


def _count_ifs(m) -> int:
    return sum(1 for n in S.iter_nodes(m) if isinstance(n, S.If))


def smooth_term(m: S.Term, counter=None) -> S.Term:
    """Rewrite every conditional of ``m`` (no first-order check)."""
    counter = counter if counter is not None else [0]

    def go(t):
        if isinstance(t, S.If):
            guard, then, else_ = go(t.guard), go(t.then), go(t.else_)
            w = f"%w{counter[0]}"
            counter[0] += 1
            v = S.Var(w)
            body = S.Add(S.Mul(S.SigmaEta(S.Neg(v)), then), S.Mul(S.SigmaEta(v), else_))
            return S.App(S.Lam(w, body), guard)
        kids = S.children(t)
        if not kids:
            return t
        return S._rebuild(t, [go(c) for c in kids])

    return go(m)


def smooth_compile(p):
    """Compile a first-order program into explicit sigmoid form.

    A bare term (free variables read as reals) compiles to a bare term.
    """
    if isinstance(p, S.Program):
        if not is_first_order(p.body, p.param_types):
            raise CompileError("not first-order")
        return CompiledProgram(S.Program(p.params, smooth_term(p.body)))
    ctx = {v: Base("R") for v in S.free_vars(p)}
    if not is_first_order(p, (), ctx):
        raise CompileError("not first-order")
    return smooth_term(p)
