"""Belief formulas, pattern unification and canonical rendering.

Formulas and their patterns share one representation; a pattern is a formula
that still contains MetaVar nodes. Times inside formulas are time expressions,
scoped times, or MetaVars.
"""

from dataclasses import dataclass, fields, is_dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from core.messages import (
    Atom,
    Enc,
    Hash,
    KeyMsg,
    KeyTerm,
    MetaVar,
    Pair,
    PartyId,
    dual_key,
    render_key,
    render_msg,
)
from core.timing import Eq, Le, MaxOf, Plus, ScopedTime, plus, render_atom, render_time, time_value


@dataclass(frozen=True)
class Dual:
    """Pattern node for the decryption counterpart of a key not yet known."""

    key: Any


@dataclass(frozen=True)
class CanProve:
    agent: Any
    body: Any


@dataclass(frozen=True)
class Sent:
    agent: Any
    msg: Any
    at: Any


@dataclass(frozen=True)
class Possesses:
    agent: Any
    msg: Any
    at: Any = None


@dataclass(frozen=True)
class Received:
    agent: Any
    msg: Any
    at: Any


@dataclass(frozen=True)
class PubKeyOf:
    key: Any
    agent: Any


@dataclass(frozen=True)
class SharedKeyOf:
    key: Any
    a: Any
    b: Any


@dataclass(frozen=True)
class Conj:
    parts: Tuple[Any, ...]


Formula = Union[CanProve, Sent, Possesses, Received, PubKeyOf, SharedKeyOf, Conj]

MESSAGE_FORMULAS = (Sent, Possesses, Received)


def conj(*parts) -> Any:
    """Flattened, deduplicated, order-insensitive conjunction."""
    flat: Dict[str, Any] = {}
    for part in parts:
        members = part.parts if isinstance(part, Conj) else (part,)
        for member in members:
            flat.setdefault(render_term(member), member)
    if len(flat) == 1:
        return next(iter(flat.values()))
    return Conj(tuple(flat[key] for key in sorted(flat)))


def can_prove(agent, body) -> CanProve:
    """CanProve with redundant nesting for the same agent collapsed."""
    while isinstance(body, CanProve) and body.agent == agent:
        body = body.body
    return CanProve(agent, body)


# ---- Generic traversal ----

def _rebuild(t, fn: Callable[[Any], Any]):
    if isinstance(t, tuple):
        return tuple(fn(item) for item in t)
    if is_dataclass(t) and not isinstance(t, type):
        values = {f.name: fn(getattr(t, f.name)) for f in fields(t)}
        return type(t)(**values)
    return t


def map_metavars(t, fn: Callable[[MetaVar], Any]):
    if isinstance(t, MetaVar):
        return fn(t)

    def recurse(child):
        return map_metavars(child, fn)

    return _rebuild(t, recurse)


def metavars(t) -> List[str]:
    """MetaVar names in first-occurrence order."""
    seen: List[str] = []

    def visit(node):
        if isinstance(node, MetaVar):
            if node.name not in seen:
                seen.append(node.name)
            return
        if isinstance(node, tuple):
            for item in node:
                visit(item)
        elif is_dataclass(node) and not isinstance(node, type):
            for f in fields(node):
                visit(getattr(node, f.name))

    visit(t)
    return seen


def is_ground(t) -> bool:
    return not metavars(t) and not _has_dual(t)


def _has_dual(t) -> bool:
    if isinstance(t, Dual):
        return True
    if isinstance(t, tuple):
        return any(_has_dual(item) for item in t)
    if is_dataclass(t) and not isinstance(t, type):
        return any(_has_dual(getattr(t, f.name)) for f in fields(t))
    return False


def rename(t, suffix: str):
    """Rename every MetaVar apart with a suffix."""
    return map_metavars(t, lambda v: MetaVar(f"{v.name}#{suffix}"))


def anonymize(t):
    """Canonical variant: MetaVars renumbered by first occurrence."""
    order = {name: index for index, name in enumerate(metavars(t))}
    return map_metavars(t, lambda v: MetaVar(f"_{order[v.name]}"))


# ---- Substitution and unification ----

Subst = Dict[str, Any]

_TIME_NODES = (MaxOf, Le, Eq, Plus)


def walk(t, subst: Subst):
    while isinstance(t, MetaVar) and t.name in subst:
        t = subst[t.name]
    return t


def substitute(t, subst: Subst, in_time: bool = False):
    """Resolve MetaVars, collapse Dual on ground keys, and rebuild normal forms."""
    if isinstance(t, MetaVar):
        value = walk(t, subst)
        if value is t:
            return t
        return substitute(value, subst, in_time)
    if isinstance(t, Dual):
        key = substitute(t.key, subst)
        if isinstance(key, KeyTerm) and is_ground(key):
            return dual_key(key)
        return Dual(key)
    if isinstance(t, ScopedTime):
        if in_time:
            return substitute(time_value(t), subst, True)
        bound = None if t.bound is None else substitute(t.bound, subst, True)
        return ScopedTime(substitute(t.var, subst, True), bound, t.value)
    if isinstance(t, Plus):
        return plus(substitute(t.base, subst, True), *t.delays)
    if isinstance(t, _TIME_NODES):
        return _rebuild(t, lambda child: substitute(child, subst, True))
    if isinstance(t, Conj):
        return conj(*(substitute(part, subst) for part in t.parts))
    if isinstance(t, CanProve):
        return can_prove(substitute(t.agent, subst), substitute(t.body, subst))
    return _rebuild(t, lambda child: substitute(child, subst, in_time))


def _occurs(name: str, t, subst: Subst) -> bool:
    t = walk(t, subst)
    if isinstance(t, MetaVar):
        return t.name == name
    if isinstance(t, tuple):
        return any(_occurs(name, item, subst) for item in t)
    if is_dataclass(t) and not isinstance(t, type):
        return any(_occurs(name, getattr(t, f.name), subst) for f in fields(t))
    return False


def _bind(var: MetaVar, value, subst: Subst) -> Optional[Subst]:
    if _occurs(var.name, value, subst):
        return None
    extended = dict(subst)
    extended[var.name] = value
    return extended


def unify(a, b, subst: Optional[Subst] = None) -> Optional[Subst]:
    """Syntactic unification; returns an extended substitution or None."""
    subst = {} if subst is None else subst
    a, b = walk(a, subst), walk(b, subst)
    if a == b:
        return subst
    if isinstance(a, MetaVar):
        return _bind(a, b, subst)
    if isinstance(b, MetaVar):
        return _bind(b, a, subst)
    if isinstance(a, Dual) or isinstance(b, Dual):
        return _unify_dual(a, b, subst)
    if isinstance(a, Conj) and isinstance(b, Conj):
        return _unify_conj(a, b, subst)
    if isinstance(a, tuple) and isinstance(b, tuple):
        if len(a) != len(b):
            return None
        for x, y in zip(a, b):
            subst = unify(x, y, subst)
            if subst is None:
                return None
        return subst
    if type(a) is not type(b) or not is_dataclass(a):
        return None
    for f in fields(a):
        if not f.compare:
            continue
        subst = unify(getattr(a, f.name), getattr(b, f.name), subst)
        if subst is None:
            return None
    return subst


def _unify_dual(a, b, subst: Subst) -> Optional[Subst]:
    if isinstance(a, Dual) and isinstance(b, Dual):
        return unify(a.key, b.key, subst)
    pattern, target = (a, b) if isinstance(a, Dual) else (b, a)
    key = substitute(pattern.key, subst)
    if isinstance(target, KeyTerm) and is_ground(target):
        return unify(key, dual_key(target), subst)
    if isinstance(key, KeyTerm) and is_ground(key):
        return unify(dual_key(key), target, subst)
    return None


def _unify_conj(a: Conj, b: Conj, subst: Subst) -> Optional[Subst]:
    if len(a.parts) == len(b.parts):
        return unify(a.parts, b.parts, subst)
    short, long_ = (a, b) if len(a.parts) < len(b.parts) else (b, a)
    if len(short.parts) != 2:
        return None
    subst = unify(short.parts[0], long_.parts[0], subst)
    if subst is None:
        return None
    return unify(short.parts[1], conj(*long_.parts[1:]), subst)


def message_of(formula) -> Optional[Any]:
    """The message a Sent/Possesses/Received formula talks about, looking through CanProve."""
    while isinstance(formula, CanProve):
        formula = formula.body
    if isinstance(formula, MESSAGE_FORMULAS):
        return formula.msg
    return None


# ---- Rendering ----

def _party(p) -> str:
    return str(p)


def _time_suffix(at) -> str:
    if at is None:
        return ""
    return f" at {render_time(at)}"


def render_term(t) -> str:
    """Canonical DSL-syntax text for any formula, message, key or time node."""
    if t is None:
        return ""
    if isinstance(t, MetaVar):
        return str(t)
    if isinstance(t, PartyId):
        return t.name
    if isinstance(t, KeyTerm):
        return render_key(t)
    if isinstance(t, Dual):
        return f"dual({render_term(t.key)})"
    if isinstance(t, (Atom, Pair, Enc, Hash, KeyMsg)):
        if isinstance(t, KeyMsg) and isinstance(t.key, Dual):
            return f"key({render_term(t.key)})"
        return render_msg(t)
    if isinstance(t, CanProve):
        return f"{_party(t.agent)} proves {render_term(t.body)}"
    if isinstance(t, Sent):
        return f"{_party(t.agent)} sent {render_term(t.msg)}{_time_suffix(t.at)}"
    if isinstance(t, Possesses):
        return f"{_party(t.agent)} has {render_term(t.msg)}{_time_suffix(t.at)}"
    if isinstance(t, Received):
        return f"{_party(t.agent)} received {render_term(t.msg)}{_time_suffix(t.at)}"
    if isinstance(t, PubKeyOf):
        return f"pubkey {render_term(t.key)} of {_party(t.agent)}"
    if isinstance(t, SharedKeyOf):
        return f"shared {render_term(t.key)} between {_party(t.a)} {_party(t.b)}"
    if isinstance(t, Conj):
        return "(" + " and ".join(render_term(part) for part in t.parts) + ")"
    if isinstance(t, (Le, Eq)):
        return render_atom(t)
    return render_time(t)


def render_notation(t) -> str:
    """Belief-logic notation: ≻ for proves, → for sent, ∋ for has, ← for received."""
    if isinstance(t, CanProve):
        return f"{_party(t.agent)} ≻ {render_notation(t.body)}"
    if isinstance(t, Sent):
        return f"{_party(t.agent)} → {render_term(t.msg)}{_time_suffix(t.at)}"
    if isinstance(t, Possesses):
        return f"{_party(t.agent)} ∋ {render_term(t.msg)}{_time_suffix(t.at)}"
    if isinstance(t, Received):
        return f"{_party(t.agent)} ← {render_term(t.msg)}{_time_suffix(t.at)}"
    if isinstance(t, Conj):
        return "(" + " ∧ ".join(render_notation(part) for part in t.parts) + ")"
    return render_term(t)

