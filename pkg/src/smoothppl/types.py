"""Trace-indexed types, annotations and subtyping.

A type is either ``Base(base, ann)`` or ``Fun(arg, trace, res)``.  ``ann``
is ``None`` in the basic system and one of the annotation classes below
for the annotated systems.  Trace types are tuples of :class:`Slot`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .syntax import Distribution

R = "R"
RPOS = "Rpos"
BASES = (R, RPOS)


@dataclass(frozen=True)
class Slot:
    """One entry ``s_j ~ D`` of a trace type."""
    name: object
    dist: Distribution

    def __str__(self):
        return f"{self.name}~{self.dist}"


@dataclass(frozen=True)
class PolyAnn:
    def __str__(self):
        return "*"


@dataclass(frozen=True)
class SgdAnn:
    e: int

    def __post_init__(self):
        if self.e not in (0, 1):
            raise ValueError("SGD annotation must be 0 or 1")

    def __str__(self):
        return f"({self.e})"


class _AllSlots:
    """Dependency set containing every slot (top of the subset lattice)."""
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "ALL"

    def __reduce__(self):
        return (_AllSlots, ())


ALL = _AllSlots()


def deps_union(a, b):
    if a is ALL or b is ALL:
        return ALL
    return a | b


def deps_inter(a, b):
    if a is ALL:
        return b
    if b is ALL:
        return a
    return a & b


def deps_subset(a, b) -> bool:
    if b is ALL:
        return True
    if a is ALL:
        return False
    return a <= b


def deps_disjoint(a, b) -> bool:
    if a is ALL:
        return not b
    if b is ALL:
        return not a
    return not (a & b)


@dataclass(frozen=True)
class UnifAnn:
    g: bool
    deps: object = frozenset()
    # provenance of a false flag, used only for error messages
    why: Optional[str] = field(default=None, compare=False)

    def __str__(self):
        return f"({str(self.g).lower()},{show_deps(self.deps)})"


@dataclass(frozen=True)
class HintAnn:
    """Annotation fields written in a source binder hint, resolved per system."""
    fields: tuple = ()

    def get(self, key, default=None):
        return dict(self.fields).get(key, default)


@dataclass(frozen=True)
class Base:
    base: str
    ann: object = None

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base type {self.base!r}")


@dataclass(frozen=True)
class Fun:
    arg: "Type"
    trace: tuple
    res: "Type"


Type = Union[Base, Fun]


def base_sub(b1: str, b2: str) -> bool:
    return b1 == b2 or (b1 == RPOS and b2 == R)


def base_join(b1: str, b2: str) -> str:
    return RPOS if b1 == RPOS and b2 == RPOS else R


def base_meet(b1: str, b2: str) -> str:
    return R if b1 == R and b2 == R else RPOS


def trace_dists(trace) -> tuple:
    return tuple(s.dist for s in trace)


def erase(t: Type) -> Type:
    if isinstance(t, Base):
        return Base(t.base)
    return Fun(erase(t.arg), t.trace, erase(t.res))


def rename_slots(t: Type, mapping: dict) -> Type:
    """Rename slot names in traces and dependency sets of ``t``."""
    if isinstance(t, Base):
        a = t.ann
        if isinstance(a, UnifAnn) and a.deps is not ALL:
            a = replace(a, deps=frozenset(mapping.get(d, d) for d in a.deps))
            return Base(t.base, a)
        return t
    tr = tuple(Slot(mapping.get(s.name, s.name), s.dist) for s in t.trace)
    return Fun(rename_slots(t.arg, mapping), tr, rename_slots(t.res, mapping))


def inner_slots(t: Type) -> list:
    """Slots of every function trace nested in ``t`` (outermost first)."""
    if isinstance(t, Base):
        return []
    return list(t.trace) + inner_slots(t.arg) + inner_slots(t.res)


# ---------------------------------------------------------------------------
# Subtyping


def ann_sub(a1, a2, b1: str, b2: str) -> bool:
    """Subtyping on annotated base types ``b1^a1 <= b2^a2``."""
    if not base_sub(b1, b2):
        return False
    if a1 is None or a2 is None or isinstance(a1, PolyAnn):
        return True
    if isinstance(a1, SgdAnn):
        if a1.e == a2.e:
            return True
        return b1 == RPOS and b2 == RPOS and a1.e <= a2.e
    if isinstance(a1, UnifAnn):
        g_ok = a1.g or not a2.g  # true below false
        return g_ok and deps_subset(a1.deps, a2.deps)
    raise TypeError(f"unknown annotation {a1!r}")


def subtype(t1: Type, t2: Type) -> bool:
    """Subtyping for core and annotated types alike."""
    if isinstance(t1, Base) and isinstance(t2, Base):
        return ann_sub(t1.ann, t2.ann, t1.base, t2.base)
    if isinstance(t1, Fun) and isinstance(t2, Fun):
        if trace_dists(t1.trace) != trace_dists(t2.trace):
            return False
        mapping = {b.name: a.name for a, b in zip(t1.trace, t2.trace)}
        res2 = rename_slots(t2.res, mapping)
        return subtype(t2.arg, t1.arg) and subtype(t1.res, res2)
    return False


def subtype_annotated(system: str, t1: Type, t2: Type) -> bool:
    """Subtyping in a named system; ``poly`` reduces to core subtyping."""
    if system in ("basic", "poly"):
        return subtype(erase(t1), erase(t2))
    return subtype(t1, t2)


def is_safe_type(t: Type) -> bool:
    """Base types, or function types with empty trace and safe components.

    Under the SGD annotation only ``e = 0`` base types are safe.
    """
    if isinstance(t, Base):
        return not (isinstance(t.ann, SgdAnn) and t.ann.e != 0)
    return not t.trace and is_safe_type(t.arg) and is_safe_type(t.res)


# ---------------------------------------------------------------------------
# Surface syntax


def show_deps(deps) -> str:
    if deps is ALL:
        return "*"
    return "{" + ",".join(str(d) for d in sorted(deps, key=_slot_key)) + "}"


def _slot_key(name):
    m = re.match(r"^s(\d+)$", str(name))
    return (0, int(m.group(1)), "") if m else (1, 0, str(name))


def show_trace(trace) -> str:
    return "[" + ", ".join(str(s.dist) for s in trace) + "]"


def _show_ann(a) -> str:
    if a is None or isinstance(a, PolyAnn):
        return ""
    if isinstance(a, SgdAnn):
        return f"@{{e={a.e}}}"
    if isinstance(a, UnifAnn):
        return f"@{{g={str(a.g).lower()},deps={show_deps(a.deps)}}}"
    if isinstance(a, HintAnn):
        if not a.fields:
            return ""
        parts = []
        for k, v in a.fields:
            if k == "deps":
                v = show_deps(v)
            elif isinstance(v, bool):
                v = str(v).lower()
            parts.append(f"{k}={v}")
        return "@{" + ",".join(parts) + "}"
    return ""


def show_type(t: Type, hint: bool = False) -> str:
    """Render a type in the surface syntax used for binder hints."""
    if isinstance(t, Base):
        name = "real" if t.base == R else "preal"
        return name + _show_ann(t.ann)
    tr = " ".join(str(s.dist) for s in t.trace)
    tr = f"(trace {tr})" if tr else "(trace)"
    return f"(fun {show_type(t.arg, hint)} {tr} {show_type(t.res, hint)})"


_HINT = re.compile(r"^(real|preal)(?:@\{(.*)\})?$")


def parse_base_hint(text: str) -> Base:
    """Parse ``real``, ``preal@{e=1}`` or ``real@{g=true,deps={s1,s2}}``."""
    m = _HINT.match(text)
    if m is None:
        raise ValueError(f"invalid type {text!r}")
    base = R if m.group(1) == "real" else RPOS
    body = m.group(2)
    if body is None:
        return Base(base, HintAnn())
    fields = []
    for key, val in re.findall(r"(\w+)=(\{[^}]*\}|[^,{}]+)", body):
        if key == "e":
            if val not in ("0", "1"):
                raise ValueError("annotation e must be 0 or 1")
            fields.append(("e", int(val)))
        elif key == "g":
            if val not in ("true", "false"):
                raise ValueError("annotation g must be true or false")
            fields.append(("g", val == "true"))
        elif key == "deps":
            if val == "*":
                fields.append(("deps", ALL))
                continue
            inner = val.strip("{}").strip()
            names = [x.strip() for x in inner.split(",") if x.strip()]
            fields.append(("deps", frozenset(names)))
        else:
            raise ValueError(f"unknown annotation field {key!r}")
    if not fields and body.strip():
        raise ValueError(f"invalid annotation {body!r}")
    return Base(base, HintAnn(tuple(fields)))
