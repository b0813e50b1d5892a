"""Naive reference checkers for small instances.

Nothing here calls the closure engine, the constraint solver or the prover;
run semantics (`services.protocol.run`, `timing_system`) are the model under
test and are shared.
"""

import logging
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import combinations, product
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple

from core.messages import Atom, Enc, Hash, KeyMsg, KeyTerm, Pair
from core.timing import ConstraintSystem, Const, DelaySym, Eq, Le, MaxOf, Plus, ScopedTime, Var
from services.logic import Derivation
from services.protocol import EvidenceSpec, ProtocolSpec, RunConfig, run, timing_system

logger = logging.getLogger(__name__)

Model = Dict[str, Fraction]


# ---- messages ----

def _inverse(key: KeyTerm) -> KeyTerm:
    if key.kind == "public":
        return KeyTerm("private", owner=key.owner)
    if key.kind == "private":
        return KeyTerm("public", owner=key.owner)
    return key


def bf_closure(messages: Iterable, depth_bound: int = 64) -> Set:
    """Repeat pair splitting and decryption over the whole set until nothing changes."""
    known = set(messages)
    for _ in range(depth_bound):
        added = set()
        for m in known:
            if isinstance(m, Pair):
                added.update((m.left, m.right))
            elif isinstance(m, Enc) and isinstance(m.key, KeyTerm) and KeyMsg(_inverse(m.key)) in known:
                added.add(m.body)
        if added <= known:
            break
        known |= added
    return known


def bf_derivable(goal, messages: Iterable, depth_bound: int = 64) -> bool:
    known = bf_closure(messages, depth_bound)

    def build(m) -> bool:
        if m in known:
            return True
        if isinstance(m, Pair):
            return build(m.left) and build(m.right)
        if isinstance(m, Enc):
            return isinstance(m.key, KeyTerm) and build(KeyMsg(m.key)) and build(m.body)
        if isinstance(m, Hash):
            return build(m.body)
        return False

    return build(goal)


# ---- time constraints ----

@dataclass(frozen=True)
class GridSpec:
    variables: Tuple[str, ...]
    low: Fraction = Fraction(0)
    high: Fraction = Fraction(12)
    step: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        if Fraction(self.step) <= 0:
            raise ValueError("grid step must be positive")
        if Fraction(self.high) < Fraction(self.low):
            raise ValueError("grid high must not be below low")

    def points(self) -> List[Fraction]:
        values = []
        value = Fraction(self.low)
        while value <= Fraction(self.high):
            values.append(value)
            value += Fraction(self.step)
        return values


def _value(t, model: Model) -> Optional[Fraction]:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, (Var, DelaySym)):
        return model.get(t.name)
    if isinstance(t, ScopedTime):
        return t.value if t.value is not None else _value(t.var, model)
    if isinstance(t, Plus):
        total = _value(t.base, model)
        for term in t.delays:
            if total is None:
                return None
            part = model.get(term.name) if isinstance(term, DelaySym) else term
            total = None if part is None else total + part
        return total
    if isinstance(t, MaxOf):
        a, b = _value(t.a, model), _value(t.b, model)
        return None if a is None or b is None else max(a, b)
    raise TypeError(f"not a time expression: {t!r}")


def _holds(atom, model: Model) -> bool:
    a, b = _value(atom.a, model), _value(atom.b, model)
    if a is None or b is None:
        return False
    if isinstance(atom, Eq):
        return a == b
    return a < b if atom.strict else a <= b


def _names(t, delays: Set[str], times: Set[str]) -> None:
    if isinstance(t, DelaySym):
        delays.add(t.name)
    elif isinstance(t, Var):
        times.add(t.name)
    elif isinstance(t, Plus):
        _names(t.base, delays, times)
        for term in t.delays:
            _names(term, delays, times)
    elif isinstance(t, MaxOf):
        _names(t.a, delays, times)
        _names(t.b, delays, times)
    elif isinstance(t, ScopedTime):
        _names(t.var, delays, times)
    elif isinstance(t, (Le, Eq)):
        _names(t.a, delays, times)
        _names(t.b, delays, times)


def system_names(sys: ConstraintSystem) -> Tuple[Set[str], Set[str]]:
    """(delay names, time-variable names) mentioned by a system, pins counted as delays."""
    delays: Set[str] = set(name for name, _ in sys.fixed)
    times: Set[str] = set()
    for atom in sys.atoms:
        _names(atom, delays, times)
    return delays, times - delays


def bf_model_ok(sys: ConstraintSystem, model: Model) -> bool:
    delays, _ = system_names(sys)
    if any(model.get(name, Fraction(-1)) < 0 for name in delays):
        return False
    if any(model.get(name) != value for name, value in sys.fixed):
        return False
    return all(_holds(atom, model) for atom in sys.atoms)


def _assignments(grid: GridSpec, pins: Dict[str, Fraction]) -> Iterator[Model]:
    points = grid.points()
    axes = [[pins[name]] if name in pins else points for name in grid.variables]
    for values in product(*axes):
        yield dict(zip(grid.variables, values))


def bf_sat(sys: ConstraintSystem, grid: GridSpec) -> Optional[Model]:
    """First grid point satisfying every atom; variables outside the grid default to 0."""
    delays, times = system_names(sys)
    rest = {name: Fraction(0) for name in (delays | times) if name not in grid.variables}
    for point in _assignments(grid, dict(sys.fixed)):
        model = {**rest, **point}
        if bf_model_ok(sys, model):
            return model
    return None


def bf_entails(sys: ConstraintSystem, atom, grid: GridSpec) -> bool:
    """No grid model of sys falsifies atom."""
    delays, times = system_names(sys)
    _names(atom, delays, times)
    rest = {name: Fraction(0) for name in (delays | times) if name not in grid.variables}
    for point in _assignments(grid, dict(sys.fixed)):
        model = {**rest, **point}
        if bf_model_ok(sys, model) and not _holds(atom, model):
            return False
    return True


def _settle_times(sys: ConstraintSystem, model: Model, times: Set[str], epsilon: Fraction) -> Model:
    """Raise time variables from 0 along lower bounds until every bound is met or no change."""
    out = dict(model)
    for name in times:
        out.setdefault(name, Fraction(0))
    for _ in range(len(times) + 2):
        changed = False
        for atom in sys.atoms:
            pairs = [(atom.b, atom.a)] if isinstance(atom, Le) else [(atom.a, atom.b), (atom.b, atom.a)]
            for target, source in pairs:
                if not (isinstance(target, Var) and target.name in times):
                    continue
                low = _value(source, out)
                if low is None:
                    continue
                if isinstance(atom, Le) and atom.strict:
                    low += epsilon
                if out[target.name] < low:
                    out[target.name] = low
                    changed = True
        if not changed:
            break
    return out


def bf_timed_model(sys: ConstraintSystem, grid: GridSpec) -> Optional[Model]:
    """Grid over delays only; time variables settle to their least values."""
    delays, times = system_names(sys)
    delay_grid = GridSpec(tuple(sorted(delays)), grid.low, grid.high, grid.step)
    epsilon = Fraction(grid.step) / 2
    for point in _assignments(delay_grid, dict(sys.fixed)):
        model = _settle_times(sys, point, times, epsilon)
        if bf_model_ok(sys, model):
            return model
    return None


def _complements(atom) -> List[Le]:
    if isinstance(atom, Eq):
        return [Le(atom.a, atom.b, strict=True), Le(atom.b, atom.a, strict=True)]
    return [Le(atom.b, atom.a, strict=not atom.strict)]


def bf_timed_refutation(sys: ConstraintSystem, atom, grid: GridSpec) -> Optional[Model]:
    """A delay-grid model of sys in which atom fails, or None when the grid holds none."""
    for negated in _complements(atom):
        model = bf_timed_model(sys.with_atoms(negated), grid)
        if model is not None:
            return model
    return None


# ---- runs ----

def _can_fire(spec: ProtocolSpec, party: str, t: int) -> bool:
    timeout = spec.timeouts.get(party)
    if timeout is None or t < timeout.after_step:
        return False
    for step in spec.steps:
        if timeout.after_step < step.index <= t and step.receiver.name == party:
            return False
    return True


def _recovered(spec: ProtocolSpec, t: int) -> bool:
    if t >= len(spec.steps):
        return False
    following = spec.steps[t]
    if not following.sender.is_ttp:
        return False
    if spec.channel(following.sender.name, following.receiver.name) != "recoverable":
        return False
    return any(step.receiver.name == following.sender.name for step in spec.steps[:t])


def enumerate_truncations(spec: ProtocolSpec) -> List[RunConfig]:
    """Every (truncation point, fired subset) the run semantics allows, by plain enumeration."""
    names = sorted(spec.timeouts)
    configs = []
    for t in range(len(spec.steps) + 1):
        if _recovered(spec, t):
            continue
        for size in range(len(names) + 1):
            for fired in combinations(names, size):
                if all(_can_fire(spec, p, t) for p in fired):
                    configs.append(RunConfig(t, frozenset(fired)))
    return configs


def _sides(spec: ProtocolSpec, evidence: EvidenceSpec, config: RunConfig) -> Dict[str, bool]:
    timelines = run(spec, config).timelines
    sides = {}
    for holder in evidence.holders():
        held = timelines[holder].terminal
        wanted = [item.msg for item in evidence.items if item.holder.name == holder]
        wanted.extend(m for m, owner in evidence.exchanged if owner.name == holder)
        sides[holder] = all(bf_derivable(m, held) for m in wanted)
    return sides


def bf_fairness(spec: ProtocolSpec, evidence: EvidenceSpec, grid: GridSpec) -> List[Tuple[RunConfig, Model]]:
    """Terminal states with a grid timing model in which the holders' sides differ."""
    found = []
    for config in enumerate_truncations(spec):
        sides = _sides(spec, evidence, config)
        if len(set(sides.values())) < 2:
            continue
        model = bf_timed_model(timing_system(spec, config), grid)
        if model is not None:
            logger.debug("oracle violation at %s", config.describe())
            found.append((config, model))
    return found


# ---- proof mutation ----

def _nodes(d: Derivation, path: Tuple[int, ...] = ()) -> List[Tuple[Tuple[int, ...], Derivation]]:
    out = [(path, d)]
    for i, child in enumerate(d.children):
        out.extend(_nodes(child, path + (i,)))
    return out


def _graft(d: Derivation, path: Tuple[int, ...], node: Derivation) -> Derivation:
    if not path:
        return node
    children = list(d.children)
    children[path[0]] = _graft(children[path[0]], path[1:], node)
    return replace(d, children=tuple(children))


MUTANT = Atom("__mutant__")


def _mutations(node: Derivation) -> List[Derivation]:
    options = [replace(node, rule=node.rule + "_mutant"), replace(node, goal=MUTANT)]
    if node.children:
        options.append(replace(node, children=node.children[:-1]))
    if node.bindings:
        options.extend(
            replace(node, bindings=tuple((n, MUTANT if n == name else v) for n, v in node.bindings))
            for name, _ in node.bindings
        )
    options.append(replace(node, emitted=node.emitted + (Le(Const(Fraction(1)), Const(Fraction(0))),)))
    return options


def mutate_derivation(d: Derivation, rng: random.Random) -> Derivation:
    """A copy of d with one node corrupted so that replay must reject it."""
    path, node = rng.choice(_nodes(d))
    return _graft(d, path, rng.choice(_mutations(node)))
