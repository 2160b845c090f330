"""Trace-type inference for the basic system and its annotated refinements.

One inference engine is parameterised by a :class:`System`.  The basic
system assigns plain base types; the poly, SGD and unif systems refine base
types with annotations and add side conditions.

Binder types are found bidirectionally: a ``lam`` in function position takes
its binder type from the argument, a binder hint fixes it otherwise, and a
bare binder defaults to ``R`` (rejected if the body applies it).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from . import syntax as S
from .types import (ALL, BASES, R, RPOS, Base, Fun, HintAnn, PolyAnn, SgdAnn,
                    Slot, UnifAnn, ann_sub, base_join, base_meet, base_sub,
                    deps_disjoint, deps_inter, deps_union, erase, inner_slots,
                    is_safe_type, rename_slots, subtype, trace_dists)


class TypeCheckError(Exception):
    """A failed typing rule, with the path of the offending node."""

    def __init__(self, rule: str, path=(), detail: str = ""):
        self.rule = rule
        self.path = tuple(path)
        self.detail = detail
        where = "/".join(self.path) or "<root>"
        msg = f"{rule} at {where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


def core_prim(op: str, bases) -> Optional[str]:
    """Result base type of a primitive in the basic system, or None."""
    if op in ("add", "mul"):
        return base_join(*bases)
    if op == "neg":
        return R
    if op == "inv":
        return RPOS if bases[0] == RPOS else None
    if op == "exp":
        return RPOS
    if op == "log":
        return R if bases[0] == RPOS else None
    if op == "sigma":
        return R
    raise ValueError(op)


_OPS = {S.Add: "add", S.Mul: "mul", S.Neg: "neg", S.Inv: "inv", S.Exp: "exp",
        S.Log: "log", S.SigmaEta: "sigma"}


# ---------------------------------------------------------------------------
# Systems


class System:
    """The basic trace-based system (no annotations)."""
    name = "basic"

    def const(self, value: float) -> Base:
        return Base(RPOS if value > 0 else R, self.zero())

    def zero(self):
        return None

    def param(self, base: str) -> Base:
        return Base(base, self.zero())

    def sample(self, dist, slot, path) -> Base:
        return Base(R, self.zero())

    def default_ann(self):
        return self.zero()

    def hint_ann(self, ann: HintAnn, names: dict, path):
        return self.zero()

    def prim(self, op, args, core_base, path) -> Base:
        return Base(core_base, self.zero())

    def guard(self, t: Base, path):
        pass

    def join_ann(self, b1, a1, b2, a2, path):
        return base_join(b1, b2), a1

    def meet_ann(self, b1, a1, b2, a2, path):
        return base_meet(b1, b2), a1

    def transform(self, chk, ctx, t, path, stack):
        return chk.infer_app(ctx, t.map, S.Sample(t.dist), path, stack, ("map", "sample"))

    def pow_times(self, chk, ctx, t, path, stack):
        return chk.infer(ctx, S.desugar_arith(t), path, stack)


class PolySystem(System):
    name = "poly"

    def zero(self):
        return PolyAnn()

    def sample(self, dist, slot, path):
        if not dist.has_finite_moments:
            raise TypeCheckError("distribution lacks finite moments", path, str(dist))
        return Base(R, self.zero())

    def prim(self, op, args, core_base, path):
        if op in ("inv", "exp", "log"):
            raise TypeCheckError("primitive not in poly fragment", path, op)
        return Base(core_base, self.zero())


_SGD_ORDER = [(RPOS, 0), (RPOS, 1), (R, 0), (R, 1)]


def _sgd_le(b1, e1, b2, e2) -> bool:
    return ann_sub(SgdAnn(e1), SgdAnn(e2), b1, b2)


class SgdSystem(System):
    name = "sgd"

    def zero(self):
        return SgdAnn(0)

    def hint_ann(self, ann, names, path):
        return SgdAnn(ann.get("e", 0))

    def sample(self, dist, slot, path):
        if not dist.has_finite_moments:
            raise TypeCheckError("distribution lacks finite moments", path, str(dist))
        return Base(R, SgdAnn(0))

    def _least(self, args, allowed):
        for b, e in _SGD_ORDER:
            if (b, e) in allowed and all(_sgd_le(a.base, a.ann.e, b, e) for a in args):
                return b, e
        return None

    def prim(self, op, args, core_base, path):
        if op == "add":
            got = self._least(args, {(RPOS, 0), (R, 0)})
        elif op == "mul":
            got = self._least(args, set(_SGD_ORDER))
        elif op in ("neg", "sigma"):
            got = self._least(args, {(R, 0)})
            got = got and (R, 0)
        elif op == "inv":
            got = self._least(args, {(RPOS, 0), (RPOS, 1)})
        elif op == "exp":
            got = self._least(args, {(R, 0)}) and (RPOS, 1)
        elif op == "log":
            got = self._least(args, {(RPOS, 0), (RPOS, 1)}) and (R, 0)
        else:
            raise ValueError(op)
        if not got:
            shown = ", ".join(f"{a.base}^({a.ann.e})" for a in args)
            raise TypeCheckError("annotation mismatch", path, f"{op} applied to {shown}")
        return Base(got[0], SgdAnn(got[1]))

    def guard(self, t, path):
        if not _sgd_le(t.base, t.ann.e, R, 0):
            raise TypeCheckError("annotation mismatch", path, "guard must have annotation 0")

    def join_ann(self, b1, a1, b2, a2, path):
        for b, e in _SGD_ORDER:
            if _sgd_le(b1, a1.e, b, e) and _sgd_le(b2, a2.e, b, e):
                return b, SgdAnn(e)
        raise TypeCheckError("annotation mismatch", path, "branches have no common type")

    def meet_ann(self, b1, a1, b2, a2, path):
        for b, e in reversed(_SGD_ORDER):
            if _sgd_le(b, e, b1, a1.e) and _sgd_le(b, e, b2, a2.e):
                return b, SgdAnn(e)
        raise TypeCheckError("annotation mismatch", path, "branches have no common type")


class UnifSystem(System):
    name = "unif"

    def zero(self):
        return UnifAnn(False, frozenset())

    def default_ann(self):
        return UnifAnn(False, ALL)

    def hint_ann(self, ann, names, path):
        g = ann.get("g", False)
        deps = ann.get("deps", ALL)
        if deps is not ALL:
            try:
                deps = frozenset(names[d] for d in deps)
            except KeyError as exc:
                raise TypeCheckError("ill-typed", path, f"unknown slot {exc.args[0]} in hint")
        return UnifAnn(bool(g), deps)

    def sample(self, dist, slot, path):
        return Base(R, UnifAnn(True, frozenset([slot.name])))

    def prim(self, op, args, core_base, path):
        if op in ("add", "mul"):
            a1, a2 = args[0].ann, args[1].ann
            deps = deps_union(a1.deps, a2.deps)
            if a1.g and a2.g:
                if deps_disjoint(a1.deps, a2.deps):
                    return Base(core_base, UnifAnn(True, deps))
                return Base(core_base, UnifAnn(False, deps, "overlap"))
            why = "overlap" if "overlap" in (a1.why, a2.why) else None
            return Base(core_base, UnifAnn(False, deps, why))
        return Base(core_base, args[0].ann)

    def guard(self, t, path):
        if not t.ann.g:
            if t.ann.why == "overlap":
                raise TypeCheckError("overlapping dependencies in guard arithmetic", path)
            raise TypeCheckError("guard not guard-safe", path)

    def join_ann(self, b1, a1, b2, a2, path):
        return base_join(b1, b2), UnifAnn(a1.g and a2.g, deps_union(a1.deps, a2.deps))

    def meet_ann(self, b1, a1, b2, a2, path):
        return base_meet(b1, b2), UnifAnn(a1.g or a2.g, deps_inter(a1.deps, a2.deps))

    def transform(self, chk, ctx, t, path, stack):
        if not is_diffeomorphic_transform(t.map, chk.params):
            raise TypeCheckError("transform not diffeomorphic", path + ("map",))
        trace, ty = System.transform(self, chk, ctx, t, path, ())
        if not isinstance(ty, Base):
            raise TypeCheckError("ill-typed", path, "transform must yield a real")
        return trace, Base(R, UnifAnn(True, frozenset(s.name for s in trace)))

    def pow_times(self, chk, ctx, t, path, stack):
        saved = chk.next_id
        sub_trace, sub_ty = chk.infer(ctx, t.arg, path + ("arg",), ())
        chk.next_id = saved
        trace, ty = chk.infer(ctx, S.desugar_arith(t), path, stack)
        if not sub_trace and isinstance(sub_ty, Base) and sub_ty.ann.g:
            return trace, Base(ty.base, sub_ty.ann)
        return trace, ty


SYSTEMS = {"basic": System, "poly": PolySystem, "sgd": SgdSystem, "unif": UnifSystem}


def get_system(name: str) -> System:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ValueError(f"unknown type system {name!r}") from None


# ---------------------------------------------------------------------------
# Inference engine


def _applies(body, name) -> bool:
    for n in S.iter_nodes(body):
        if isinstance(n, S.App) and n.fn == S.Var(name):
            return True
        if isinstance(n, S.Transform) and n.map == S.Var(name):
            return True
    return False


_BASE_NAMES = {"real": R, "preal": RPOS}


class Checker:
    def __init__(self, system: System, params=(), hint_names=None, observer=None):
        self.system = system
        self.params = tuple(_BASE_NAMES.get(b, b) for b in params)
        self.hint_names = hint_names or {}
        self.observer = observer
        self.next_id = 1

    def fresh(self, dist) -> Slot:
        s = Slot(self.next_id, dist)
        self.next_id += 1
        return s

    def mismatch(self, got, want, path, what):
        rule = "ill-typed" if not subtype(erase(got), erase(want)) else "annotation mismatch"
        from .types import show_type
        raise TypeCheckError(rule, path, f"{what}: {show_type(got)} is not a subtype of {show_type(want)}")

    def resolve(self, t, path):
        if isinstance(t, Base):
            if isinstance(t.ann, HintAnn):
                return Base(t.base, self.system.hint_ann(t.ann, self.hint_names, path))
            return t
        tr = tuple(self.fresh(s.dist) for s in t.trace)
        mapping = {a.name: b.name for a, b in zip(t.trace, tr)}
        return Fun(self.resolve(t.arg, path), tr,
                   rename_slots(self.resolve(t.res, path), mapping))

    def instantiate(self, t: Fun) -> Fun:
        tr = tuple(self.fresh(s.dist) for s in t.trace)
        mapping = {a.name: b.name for a, b in zip(t.trace, tr)}
        return Fun(t.arg, tr, rename_slots(t.res, mapping))

    def join(self, t1, t2, path):
        if isinstance(t1, Base) and isinstance(t2, Base):
            b, a = self.system.join_ann(t1.base, t1.ann, t2.base, t2.ann, path)
            return Base(b, a)
        if isinstance(t1, Fun) and isinstance(t2, Fun) and not t1.trace and not t2.trace:
            return Fun(self.meet(t1.arg, t2.arg, path), (), self.join(t1.res, t2.res, path))
        raise TypeCheckError("ill-typed", path, "branches have incompatible types")

    def meet(self, t1, t2, path):
        if isinstance(t1, Base) and isinstance(t2, Base):
            b, a = self.system.meet_ann(t1.base, t1.ann, t2.base, t2.ann, path)
            return Base(b, a)
        if isinstance(t1, Fun) and isinstance(t2, Fun) and not t1.trace and not t2.trace:
            return Fun(self.join(t1.arg, t2.arg, path), (), self.meet(t1.res, t2.res, path))
        raise TypeCheckError("ill-typed", path, "branches have incompatible types")

    def observe(self, kind, node, ty):
        if self.observer is not None:
            self.observer(kind, node, ty)

    def infer_app(self, ctx, fn, arg, path, stack, labels=("fn", "arg")):
        ta_trace, ta = self.infer(ctx, arg, path + (labels[1],), ())
        self.observe("arg", arg, ta)
        tf_trace, tf = self.infer(ctx, fn, path + (labels[0],), (ta,) + tuple(stack))
        if not isinstance(tf, Fun):
            raise TypeCheckError("ill-typed", path, "application of a non-function")
        tf = self.instantiate(tf)
        if not subtype(ta, tf.arg):
            self.mismatch(ta, tf.arg, path + (labels[1],), "argument")
        return tf_trace + ta_trace + tf.trace, tf.res

    def infer(self, ctx, t, path=(), stack=()):
        sysm = self.system
        if isinstance(t, S.Var):
            if t.name not in ctx:
                raise TypeCheckError("ill-typed", path, f"unbound variable {t.name}")
            return (), ctx[t.name]
        if isinstance(t, S.Param):
            if t.index >= len(self.params):
                raise TypeCheckError("ill-typed", path, f"undeclared parameter {t.index}")
            return (), sysm.param(self.params[t.index])
        if isinstance(t, S.Const):
            return (), sysm.const(t.value)
        if type(t) in _OPS:
            op = _OPS[type(t)]
            kids = S.children(t)
            labels = ("left", "right") if len(kids) == 2 else ("arg",)
            trace, args = (), []
            for k, lab in zip(kids, labels):
                tr, ty = self.infer(ctx, k, path + (lab,), ())
                if not isinstance(ty, Base):
                    raise TypeCheckError("ill-typed", path + (lab,), f"{op} expects a real")
                trace += tr
                args.append(ty)
            core = core_prim(op, [a.base for a in args])
            if core is None:
                raise TypeCheckError("ill-typed", path, f"{op} requires a positive argument")
            return trace, sysm.prim(op, args, core, path)
        if isinstance(t, S.If):
            tg_tr, tg = self.infer(ctx, t.guard, path + ("guard",), ())
            if not isinstance(tg, Base):
                raise TypeCheckError("ill-typed", path + ("guard",), "guard must be a real")
            sysm.guard(tg, path + ("guard",))
            tm_tr, tm = self.infer(ctx, t.then, path + ("then",), ())
            tn_tr, tn = self.infer(ctx, t.else_, path + ("else",), ())
            for ty, lab in ((tm, "then"), (tn, "else")):
                if not is_safe_type(ty):
                    raise TypeCheckError("branch not safe type", path + (lab,))
            out = self.join(tm, tn, path)
            self.observe("if", t, out)
            return tg_tr + tm_tr + tn_tr, out
        if isinstance(t, S.Sample):
            slot = self.fresh(t.dist)
            return (slot,), sysm.sample(t.dist, slot, path)
        if isinstance(t, S.Transform):
            return sysm.transform(self, ctx, t, path, stack)
        if isinstance(t, (S.Times, S.Pow)):
            return sysm.pow_times(self, ctx, t, path, stack)
        if isinstance(t, S.Lam):
            hint = self.resolve(t.hint, path) if t.hint is not None else None
            if stack:
                bt = stack[0]
                if hint is not None:
                    if not subtype(bt, hint):
                        self.mismatch(bt, hint, path, "argument against binder hint")
                    bt = hint
                rest = stack[1:]
            else:
                if hint is not None:
                    bt = hint
                else:
                    if _applies(t.body, t.binder):
                        raise TypeCheckError("unannotated higher-order binder", path, t.binder)
                    bt = Base(R, sysm.default_ann())
                rest = ()
            self.observe("binder", t, bt)
            tr, res = self.infer({**ctx, t.binder: bt}, t.body, path + ("body",), rest)
            return (), Fun(bt, tr, res)
        if isinstance(t, S.App):
            return self.infer_app(ctx, t.fn, t.arg, path, stack)
        raise TypeCheckError("ill-typed", path, f"unknown node {t!r}")


def _finish(trace, ty):
    names = {}
    for s in trace:
        names[s.name] = f"s{len(names) + 1}"
    for s in inner_slots(ty):
        if s.name not in names:
            names[s.name] = f"s{len(names) + 1}"
    out_trace = tuple(Slot(names[s.name], s.dist) for s in trace)
    return out_trace, rename_slots(ty, names), names


def _hint_names(ctx, term, params) -> dict:
    needs = any(isinstance(n, S.Lam) and n.hint is not None and _hint_has_deps(n.hint)
                for n in S.iter_nodes(term))
    if not needs:
        return {}
    chk = Checker(System(), params)
    trace, ty = chk.infer({k: erase(v) for k, v in ctx.items()}, term)
    _, _, names = _finish(trace, ty)
    return {v: k for k, v in names.items()}


def _hint_has_deps(t) -> bool:
    if isinstance(t, Base):
        return isinstance(t.ann, HintAnn) and t.ann.get("deps") not in (None, ALL)
    return _hint_has_deps(t.arg) or _hint_has_deps(t.res)


def infer(system, ctx, term, params=(), observer=None):
    """Infer ``(trace, type)`` for ``term`` with slots named ``s1, s2, ...``."""
    if isinstance(system, str):
        system = get_system(system)
    names = _hint_names(ctx, term, params)
    chk = Checker(system, params, names, observer)
    trace, ty = chk.infer(dict(ctx), term)
    trace, ty, _ = _finish(trace, ty)
    return trace, ty


def infer_basic(ctx, term, params=()):
    """Trace type and minimal core type of ``term`` under ``ctx``."""
    return infer("basic", {k: erase(v) for k, v in dict(ctx).items()}, term, params)


def check_program(p: S.Program, system="basic"):
    return infer(system, {}, p.body, p.param_types)


def check_poly(p: S.Program):
    return check_program(p, "poly")


def check_sgd(p: S.Program):
    return check_program(p, "sgd")


def check_unif(p: S.Program):
    return check_program(p, "unif")


# ---------------------------------------------------------------------------
# Transforms


@dataclass(frozen=True)
class Affine:
    """``s -> scale * s + shift``; either part may be absent."""
    scale: Optional[S.Term]
    shift: Optional[S.Term]


def _closed_param_term(t, binder) -> bool:
    for n in S.iter_nodes(t):
        if isinstance(n, (S.Var, S.Sample, S.Transform, S.If, S.Lam, S.App)):
            return False
    return True


def affine_parts(T: S.Term) -> Optional[Affine]:
    """Decompose a transform map into scale and shift terms, if affine."""
    if not isinstance(T, S.Lam):
        return None
    s = S.Var(T.binder)
    body = T.body

    def scaled(m):
        if m == s:
            return S.Const(1.0), True
        if isinstance(m, S.Mul):
            if m.right == s and _closed_param_term(m.left, T.binder):
                return m.left, False
            if m.left == s and _closed_param_term(m.right, T.binder):
                return m.right, False
        return None

    got = scaled(body)
    if got is not None:
        return Affine(None if got[1] else got[0], None)
    if isinstance(body, S.Add):
        for lin, rest in ((body.left, body.right), (body.right, body.left)):
            got = scaled(lin)
            if got is not None and _closed_param_term(rest, T.binder):
                return Affine(None if got[1] else got[0], rest)
    return None


def is_diffeomorphic_transform(T: S.Term, params=()) -> bool:
    """Whitelist of affine maps ``s -> A*s + B`` with ``A`` positive."""
    parts = affine_parts(T)
    if parts is None:
        return False
    if parts.scale is not None:
        try:
            _, ty = infer_basic({}, parts.scale, params)
            ty = erase(ty)
        except TypeCheckError:
            return False
        if ty != Base(RPOS):
            return False
    if parts.shift is not None:
        try:
            _, ty = infer_basic({}, parts.shift, params)
        except TypeCheckError:
            return False
        if not isinstance(ty, Base):
            return False
    return True
