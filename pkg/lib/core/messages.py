"""Message term algebra: parties, keys, messages, decomposition and derivability.

Signatures are encryptions under a private key; verifying one is decrypting it
with the owner's public key. Hashes are never inverted.
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union


@dataclass(frozen=True)
class MetaVar:
    """Pattern variable; may stand for a party, key, message, time or formula."""

    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class PartyId:
    name: str
    is_ttp: bool = field(default=False, compare=False)

    def __str__(self) -> str:
        return self.name


PartyRef = Union[PartyId, MetaVar]

KEY_KINDS = ("public", "private", "shared", "session")


@dataclass(frozen=True)
class KeyTerm:
    """A key. `owner` is set for public/private keys, `name` for shared/session keys."""

    kind: str
    owner: Optional[PartyRef] = None
    name: str = ""
    endpoints: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KEY_KINDS:
            raise ValueError(f"unknown key kind {self.kind!r}")

    @property
    def asymmetric(self) -> bool:
        return self.kind in ("public", "private")


def public_key(owner: PartyRef) -> KeyTerm:
    return KeyTerm("public", owner=owner)


def private_key(owner: PartyRef) -> KeyTerm:
    return KeyTerm("private", owner=owner)


def shared_key(name: str, a: str, b: str) -> KeyTerm:
    return KeyTerm("shared", name=name, endpoints=tuple(sorted((a, b))))


def session_key(name: str) -> KeyTerm:
    return KeyTerm("session", name=name)


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Pair:
    left: "Msg"
    right: "Msg"


@dataclass(frozen=True)
class Enc:
    body: "Msg"
    key: Union[KeyTerm, MetaVar]


@dataclass(frozen=True)
class Hash:
    body: "Msg"


@dataclass(frozen=True)
class KeyMsg:
    key: Union[KeyTerm, MetaVar]


Msg = Union[Atom, Pair, Enc, Hash, KeyMsg]


def pair(*parts: Msg) -> Msg:
    """Right-nested pairing: pair(a, b, c) == Pair(a, Pair(b, c))."""
    if len(parts) < 2:
        raise ValueError("pair needs at least two components")
    result = parts[-1]
    for part in reversed(parts[:-1]):
        result = Pair(part, result)
    return result


def sign(body: Msg, owner: PartyRef) -> Enc:
    return Enc(body, private_key(owner))


def dual_key(key: KeyTerm) -> KeyTerm:
    """Decryption counterpart of `key`; symmetric keys are self-dual."""
    if key.kind == "public":
        return KeyTerm("private", owner=key.owner)
    if key.kind == "private":
        return KeyTerm("public", owner=key.owner)
    return key


def immediate_parts(m: Msg) -> FrozenSet[Msg]:
    if isinstance(m, Pair):
        return frozenset((m.left, m.right))
    return frozenset()


def flatten_pairs(m: Msg) -> List[Msg]:
    """Leaves of a pair tree, left to right."""
    if isinstance(m, Pair):
        return flatten_pairs(m.left) + flatten_pairs(m.right)
    return [m]


def analyze_closure(messages: Iterable[Msg]) -> FrozenSet[Msg]:
    """Smallest superset closed under pair splitting and decryption with held dual keys."""
    known: Set[Msg] = set()
    locked: Dict[KeyMsg, List[Msg]] = {}
    stack = list(messages)
    while stack:
        m = stack.pop()
        if m in known:
            continue
        known.add(m)
        if isinstance(m, Pair):
            stack.append(m.left)
            stack.append(m.right)
        elif isinstance(m, Enc):
            needed = KeyMsg(dual_key(m.key))
            if needed in known:
                stack.append(m.body)
            else:
                locked.setdefault(needed, []).append(m.body)
        elif isinstance(m, KeyMsg):
            stack.extend(locked.pop(m, ()))
    return frozenset(known)


class Knowledge:
    """A possession set with its closure computed once, for repeated queries."""

    def __init__(self, messages: Iterable[Msg]) -> None:
        self.messages = frozenset(messages)
        self.closure = analyze_closure(self.messages)

    def can_derive(self, goal: Msg) -> bool:
        if goal in self.closure:
            return True
        if isinstance(goal, Pair):
            return self.can_derive(goal.left) and self.can_derive(goal.right)
        if isinstance(goal, Hash):
            return self.can_derive(goal.body)
        if isinstance(goal, Enc):
            return self.can_derive(goal.body) and KeyMsg(goal.key) in self.closure
        return False


def can_derive(messages: Iterable[Msg], goal: Msg) -> bool:
    return Knowledge(messages).can_derive(goal)


def subterms(m: Msg) -> Set[Msg]:
    """All message subterms, plus KeyMsg for every key used in an encryption."""
    found: Set[Msg] = set()
    stack = [m]
    while stack:
        current = stack.pop()
        if current in found:
            continue
        found.add(current)
        if isinstance(current, Pair):
            stack.extend((current.left, current.right))
        elif isinstance(current, Enc):
            stack.append(current.body)
            if isinstance(current.key, KeyTerm):
                stack.append(KeyMsg(current.key))
        elif isinstance(current, Hash):
            stack.append(current.body)
    return found


def term_depth(m: Msg) -> int:
    if isinstance(m, Pair):
        return 1 + max(term_depth(m.left), term_depth(m.right))
    if isinstance(m, (Enc, Hash)):
        return 1 + term_depth(m.body)
    return 1


# ---- Canonical text ----

def render_party(p: PartyRef) -> str:
    return str(p)


def render_key(key: Union[KeyTerm, MetaVar]) -> str:
    if isinstance(key, MetaVar):
        return str(key)
    if key.kind == "public":
        return f"pk({render_party(key.owner)})"
    if key.kind == "private":
        return f"inv(pk({render_party(key.owner)}))"
    return key.name


def render_msg(m) -> str:
    if isinstance(m, MetaVar):
        return str(m)
    if isinstance(m, Atom):
        return m.name
    if isinstance(m, Pair):
        return f"pair({render_msg(m.left)},{render_msg(m.right)})"
    if isinstance(m, Enc):
        if isinstance(m.key, KeyTerm) and m.key.kind == "private":
            return f"sign({render_msg(m.body)},{render_party(m.key.owner)})"
        return f"enc({render_msg(m.body)},{render_key(m.key)})"
    if isinstance(m, Hash):
        return f"hash({render_msg(m.body)})"
    if isinstance(m, KeyMsg):
        if isinstance(m.key, MetaVar):
            return f"key({m.key})"
        return render_key(m.key)
    # Dual and other pattern nodes render through formulas.render_term
    from core.formulas import render_term

    return render_term(m)

