"""Seeded random instances for oracle agreement tests."""

import random
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Tuple

from core.messages import (
    Atom,
    Enc,
    Hash,
    KeyMsg,
    PartyId,
    pair,
    private_key,
    public_key,
    session_key,
    shared_key,
    sign,
)
from core.timing import ConstraintSystem, Const, DelaySym, Eq, Le, Var, plus
from services.protocol import ProtocolSpec, Step, Timeout

PARTIES = (PartyId("A"), PartyId("B"), PartyId("C"), PartyId("D"))
ATOMS = tuple(Atom(name) for name in ("a", "b", "c", "d"))
KEYS = (
    public_key(PARTIES[0]),
    private_key(PARTIES[0]),
    public_key(PARTIES[1]),
    private_key(PARTIES[1]),
    shared_key("Kab", "A", "B"),
    session_key("k"),
)


def random_message(rng: random.Random, depth: int = 4):
    if depth <= 1 or rng.random() < 0.3:
        if rng.random() < 0.25:
            return KeyMsg(rng.choice(KEYS))
        return rng.choice(ATOMS)
    kind = rng.choice(("pair", "enc", "hash", "enc"))
    if kind == "pair":
        return pair(random_message(rng, depth - 1), random_message(rng, depth - 1))
    if kind == "hash":
        return Hash(random_message(rng, depth - 1))
    return Enc(random_message(rng, depth - 1), rng.choice(KEYS))


def random_message_set(rng: random.Random, max_size: int = 6, depth: int = 4) -> List:
    return [random_message(rng, depth) for _ in range(rng.randint(0, max_size))]


def random_system(rng: random.Random, variables: int = 3, bound: int = 4, atoms: int = 4) -> ConstraintSystem:
    """Non-strict difference constraints over nonnegative delays, each bounded above by `bound`."""
    names = [DelaySym(f"d{i}") for i in range(variables)]
    out = [Le(d, Const(Fraction(bound))) for d in names]
    for _ in range(atoms):
        x, y = rng.sample(names, 2)
        c = Const(Fraction(rng.randint(0, bound)))
        if rng.random() < 0.5:
            out.append(Le(plus(c, x), plus(Const(Fraction(0)), y)))
        else:
            out.append(Le(plus(Const(Fraction(0)), x), plus(c, y)))
    return ConstraintSystem.of(out)


def _random_sum(rng: random.Random, names: List[DelaySym], bound: int):
    terms: List[DelaySym] = []
    for d in rng.sample(names, rng.randint(1, min(3, len(names)))):
        terms.extend([d] * rng.randint(0, 4))
    return plus(Const(Fraction(rng.randint(0, bound))), *terms)


def random_linear_system(rng: random.Random, variables: int = 5, bound: int = 4, atoms: int = 4) -> ConstraintSystem:
    """Strict, non-strict and equality atoms between sums of delays with coefficients 0..4."""
    names = [DelaySym(f"d{i}") for i in range(variables)]
    out: List = [Le(d, Const(Fraction(bound))) for d in names]
    for _ in range(atoms):
        left, right = _random_sum(rng, names, bound), _random_sum(rng, names, bound)
        kind = rng.choice(("le", "lt", "eq"))
        out.append(Eq(left, right) if kind == "eq" else Le(left, right, strict=kind == "lt"))
    return ConstraintSystem.of(out)


def _wrap(rng: random.Random, body, sender: PartyId, receiver: PartyId, keys: Dict[Tuple[str, str], str], spec: ProtocolSpec):
    kind = rng.choice(("plain", "shared", "signed", "public"))
    if kind == "shared":
        return Enc(body, spec.keys[keys[tuple(sorted((sender.name, receiver.name)))]])
    if kind == "signed":
        return sign(body, sender)
    if kind == "public":
        return Enc(body, public_key(receiver))
    return body


def random_spec(rng: random.Random, steps: int = 4, timeouts: int = 1, parties: int = 2) -> ProtocolSpec:
    """A relay of fresh atoms among 2-4 parties under shared, signature and public-key protection.

    Step i hands x_i and the fresh x_{i+1} to the next sender; a timeout waits for
    the next step delivered back to the party that sent.
    """
    members = list(PARTIES[:parties])
    spec = ProtocolSpec(name="generated", parties=members)
    keys: Dict[Tuple[str, str], str] = {}
    for a, b in combinations(members, 2):
        alias = f"K{a.name.lower()}{b.name.lower()}"
        keys[(a.name, b.name)] = alias
        spec.keys[alias] = shared_key(alias, a.name, b.name)
    for p in members:
        held = [KeyMsg(private_key(p))] + [KeyMsg(public_key(q)) for q in members]
        held.extend(KeyMsg(spec.keys[alias]) for ends, alias in keys.items() if p.name in ends)
        spec.initial_knowledge[p.name] = held
    spec.initial_knowledge[members[0].name].insert(0, Atom("x1"))
    sender = members[0]
    for i in range(1, steps + 1):
        receiver = rng.choice([p for p in members if p != sender])
        fresh = Atom(f"x{i + 1}")
        spec.fresh_decls[i] = [fresh]
        msg = _wrap(rng, pair(Atom(f"x{i}"), fresh), sender, receiver, keys, spec)
        spec.steps.append(Step(i, sender, receiver, msg, Var(f"T{i}")))
        sender = receiver
    candidates = list(spec.steps)
    rng.shuffle(candidates)
    for step in candidates:
        if len(spec.timeouts) >= timeouts:
            break
        party = step.sender
        reply = next((s.index for s in spec.steps[step.index:] if s.receiver == party), None)
        if party.name in spec.timeouts or reply is None:
            continue
        spec.timeouts[party.name] = Timeout(party, step.index, DelaySym(f"t{party.name}", "waiting_time"), reply)
    return spec
