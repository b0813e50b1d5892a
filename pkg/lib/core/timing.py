"""Symbolic event times and a small exact linear-inequality solver.

Time expressions are built from constant elements, variable elements (T1, Te),
nonnegative delay symbols (t5, tC), sums, and max(). Systems of Le/Eq atoms are
decided over the rationals by Fourier-Motzkin elimination with strictness
tracking; satisfiable systems come back with a concrete rational model.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from core.errors import AnalysisError
from core.messages import MetaVar

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Var:
    name: str


DELAY_ROLES = ("step_delay", "waiting_time")


@dataclass(frozen=True)
class DelaySym:
    name: str
    role: str = field(default="step_delay", compare=False)

    def __post_init__(self) -> None:
        if self.role not in DELAY_ROLES:
            raise ValueError(f"delay {self.name}: role must be one of {', '.join(DELAY_ROLES)}, got {self.role!r}")


@dataclass(frozen=True)
class Plus:
    base: "TimeExpr"
    delays: Tuple[Union[DelaySym, Fraction], ...]


@dataclass(frozen=True)
class MaxOf:
    a: "TimeExpr"
    b: "TimeExpr"


TimeExpr = Union[Const, Var, DelaySym, Plus, MaxOf]


@dataclass(frozen=True)
class ScopedTime:
    """[X], [X | X <= bound] or the singleton [value]."""

    var: Union[Var, MetaVar]
    bound: Optional[object] = None
    value: Optional[Fraction] = None


@dataclass(frozen=True)
class Le:
    a: object
    b: object
    strict: bool = False


@dataclass(frozen=True)
class Eq:
    a: object
    b: object


ConstraintAtom = Union[Le, Eq]

TERMINAL = Var("Te")
ORIGIN = Var("T0")


def time_value(t):
    """The plain time expression behind a scoped time."""
    if isinstance(t, ScopedTime):
        if t.value is not None:
            return Const(t.value)
        return t.var
    return t


def plus(base, *terms) -> TimeExpr:
    """base + terms, flattened; numeric terms must be nonnegative."""
    base = time_value(base)
    delays: List[DelaySym] = []
    number = Fraction(0)
    if isinstance(base, Plus):
        for term in base.delays:
            if isinstance(term, DelaySym):
                delays.append(term)
            else:
                number += term
        base = base.base
    for term in terms:
        if isinstance(term, Plus):
            if not isinstance(term.base, Const):
                raise ValueError("cannot add two time variables")
            number += term.base.value
            for sub in term.delays:
                if isinstance(sub, DelaySym):
                    delays.append(sub)
                else:
                    number += sub
        elif isinstance(term, DelaySym):
            delays.append(term)
        else:
            value = Fraction(term.value if isinstance(term, Const) else term)
            if value < 0:
                raise ValueError("time delays must be nonnegative")
            number += value
    if isinstance(base, Const) and not delays:
        return Const(base.value + number)
    if not delays and number == 0:
        return base
    ordered: List[Union[DelaySym, Fraction]] = sorted(delays, key=lambda d: d.name)
    if number:
        ordered.append(number)
    return Plus(base, tuple(ordered))


# ---- Rendering ----

def format_fraction(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def render_time(t) -> str:
    if t is None:
        return "?"
    if isinstance(t, MetaVar):
        return str(t)
    if isinstance(t, Const):
        return format_fraction(t.value)
    if isinstance(t, (Var, DelaySym)):
        return t.name
    if isinstance(t, Plus):
        parts = [] if t.base == Const(Fraction(0)) else [render_time(t.base)]
        for term in t.delays:
            parts.append(term.name if isinstance(term, DelaySym) else format_fraction(term))
        return " + ".join(parts)
    if isinstance(t, MaxOf):
        return f"max({render_time(t.a)}, {render_time(t.b)})"
    if isinstance(t, ScopedTime):
        if t.value is not None:
            return f"[{format_fraction(t.value)}]"
        name = render_time(t.var)
        if t.bound is None:
            return f"[{name}]"
        return f"[{name} | {name} <= {render_time(t.bound)}]"
    raise TypeError(f"not a time expression: {t!r}")


def render_atom(atom: ConstraintAtom) -> str:
    if isinstance(atom, Eq):
        return f"{render_time(atom.a)} = {render_time(atom.b)}"
    op = "<" if atom.strict else "<="
    return f"{render_time(atom.a)} {op} {render_time(atom.b)}"


# ---- Traversal helpers ----

def _walk(t) -> Iterable[object]:
    yield t
    if isinstance(t, Plus):
        yield from _walk(t.base)
        for term in t.delays:
            if isinstance(term, DelaySym):
                yield term
    elif isinstance(t, MaxOf):
        yield from _walk(t.a)
        yield from _walk(t.b)
    elif isinstance(t, ScopedTime):
        yield from _walk(t.var)
        if t.bound is not None:
            yield from _walk(t.bound)
    elif isinstance(t, (Le, Eq)):
        yield from _walk(t.a)
        yield from _walk(t.b)


def delay_symbols(t) -> Set[str]:
    return {node.name for node in _walk(t) if isinstance(node, DelaySym)}


def variables_of(t) -> Set[str]:
    return {node.name for node in _walk(t) if isinstance(node, (Var, DelaySym))}


def contains_max(t) -> bool:
    return any(isinstance(node, MaxOf) for node in _walk(t))


def substitute_time(t, subst: Dict[str, object]):
    """Replace variables by name; works on expressions and atoms."""
    if isinstance(t, Var):
        return subst.get(t.name, t)
    if isinstance(t, Plus):
        return plus(substitute_time(t.base, subst), *t.delays)
    if isinstance(t, MaxOf):
        return MaxOf(substitute_time(t.a, subst), substitute_time(t.b, subst))
    if isinstance(t, Le):
        return Le(substitute_time(t.a, subst), substitute_time(t.b, subst), t.strict)
    if isinstance(t, Eq):
        return Eq(substitute_time(t.a, subst), substitute_time(t.b, subst))
    return t


def bind_first_occurrence(formula_times: Sequence[object]) -> Dict[str, object]:
    """Bind each variable at its first occurrence in a formula.

    Items are bare time expressions (a variable alone stays unbound, i.e. ranges
    over the full domain) or Eq(Var, expr) bindings. Later bindings of an already
    bound variable are checked for constant conflicts and otherwise ignored.
    """
    bindings: Dict[str, object] = {}
    for item in formula_times:
        if not isinstance(item, Eq):
            continue
        target, value = item.a, item.b
        if not isinstance(target, Var) and isinstance(value, Var):
            target, value = value, target
        if not isinstance(target, Var):
            continue
        value = substitute_time(value, bindings)
        if target.name not in bindings:
            bindings[target.name] = value
            continue
        existing = bindings[target.name]
        if isinstance(existing, Const) and isinstance(value, Const) and existing != value:
            raise AnalysisError(
                "E_CONFLICT",
                f"{target.name} bound to both {render_time(existing)} and {render_time(value)}",
            )
    return bindings


# ---- Constraint systems ----

@dataclass(frozen=True)
class ConstraintSystem:
    atoms: Tuple[ConstraintAtom, ...] = ()
    fixed: Tuple[Tuple[str, Fraction], ...] = ()

    @classmethod
    def of(cls, atoms: Iterable[ConstraintAtom] = (), fixed: Optional[Dict[str, Fraction]] = None) -> "ConstraintSystem":
        return cls().with_atoms(*atoms).with_pins(fixed or {})

    def with_atoms(self, *atoms: ConstraintAtom) -> "ConstraintSystem":
        merged = {render_atom(a): a for a in self.atoms}
        for atom in atoms:
            merged.setdefault(render_atom(atom), atom)
        ordered = tuple(merged[key] for key in sorted(merged))
        return ConstraintSystem(ordered, self.fixed)

    def with_pins(self, pins: Dict[str, Fraction]) -> "ConstraintSystem":
        merged = dict(self.fixed)
        merged.update({name: Fraction(value) for name, value in pins.items()})
        return ConstraintSystem(self.atoms, tuple(sorted(merged.items())))

    def merged(self, other: "ConstraintSystem") -> "ConstraintSystem":
        return self.with_atoms(*other.atoms).with_pins(dict(other.fixed))

    @property
    def pins(self) -> Dict[str, Fraction]:
        return dict(self.fixed)

    def delays(self) -> Set[str]:
        names: Set[str] = set(self.pins)
        for atom in self.atoms:
            names |= delay_symbols(atom)
        return names

    def variables(self) -> Set[str]:
        names: Set[str] = set(self.pins)
        for atom in self.atoms:
            names |= variables_of(atom)
        return names

    def has_max(self) -> bool:
        return any(contains_max(atom) for atom in self.atoms)

    def render_lines(self) -> List[str]:
        lines = [render_atom(atom) for atom in self.atoms]
        lines.extend(f"{name} = {format_fraction(value)}" for name, value in self.fixed)
        return lines


# ---- Max elimination ----

def _first_max(t) -> Optional[MaxOf]:
    for node in _walk(t):
        if isinstance(node, MaxOf):
            return node
    return None


def _replace(t, target: MaxOf, replacement):
    if t == target:
        return replacement
    if isinstance(t, Plus):
        return plus(_replace(t.base, target, replacement), *t.delays)
    if isinstance(t, MaxOf):
        return MaxOf(_replace(t.a, target, replacement), _replace(t.b, target, replacement))
    if isinstance(t, Le):
        return Le(_replace(t.a, target, replacement), _replace(t.b, target, replacement), t.strict)
    if isinstance(t, Eq):
        return Eq(_replace(t.a, target, replacement), _replace(t.b, target, replacement))
    return t


def eliminate_max(sys: ConstraintSystem) -> List[ConstraintSystem]:
    """Case-split every max(a, b): branch a >= b (max -> a) and branch a < b (max -> b)."""
    target = None
    for atom in sys.atoms:
        target = _first_max(atom)
        if target is not None:
            break
    if target is None:
        return [sys]
    branches: List[ConstraintSystem] = []
    for chosen, guard in ((target.a, Le(target.b, target.a)), (target.b, Le(target.a, target.b, strict=True))):
        atoms = [_replace(atom, target, chosen) for atom in sys.atoms]
        branch = ConstraintSystem((), sys.fixed).with_atoms(guard, *atoms)
        branches.extend(eliminate_max(branch))
    return branches


# ---- Linear forms and Fourier-Motzkin ----

def linearize(t) -> Tuple[Dict[str, Fraction], Fraction]:
    t = time_value(t)
    if isinstance(t, Const):
        return {}, t.value
    if isinstance(t, (Var, DelaySym)):
        return {t.name: Fraction(1)}, Fraction(0)
    if isinstance(t, Plus):
        coeffs, constant = linearize(t.base)
        coeffs = dict(coeffs)
        for term in t.delays:
            if isinstance(term, DelaySym):
                coeffs[term.name] = coeffs.get(term.name, Fraction(0)) + 1
            else:
                constant += term
        return coeffs, constant
    if isinstance(t, MaxOf):
        raise AnalysisError("E_MAXOF", "eliminate max() before solving")
    raise TypeError(f"not a time expression: {t!r}")


@dataclass(frozen=True)
class _Row:
    """sum(coeffs) + const <= 0, or < 0 when strict."""

    coeffs: Tuple[Tuple[str, Fraction], ...]
    const: Fraction
    strict: bool

    def coef(self, name: str) -> Fraction:
        for var, value in self.coeffs:
            if var == name:
                return value
        return Fraction(0)


def _make_row(coeffs: Dict[str, Fraction], constant: Fraction, strict: bool) -> _Row:
    items = sorted((name, value) for name, value in coeffs.items() if value != 0)
    if items:
        scale = abs(items[0][1])
        items = [(name, value / scale) for name, value in items]
        constant = constant / scale
    return _Row(tuple(items), constant, strict)


def _difference(a, b, strict: bool) -> _Row:
    left, lc = linearize(a)
    right, rc = linearize(b)
    coeffs = dict(left)
    for name, value in right.items():
        coeffs[name] = coeffs.get(name, Fraction(0)) - value
    return _make_row(coeffs, lc - rc, strict)


def _rows_of(atom: ConstraintAtom) -> List[_Row]:
    if isinstance(atom, Le):
        return [_difference(atom.a, atom.b, atom.strict)]
    return [_difference(atom.a, atom.b, False), _difference(atom.b, atom.a, False)]


def _system_rows(sys: ConstraintSystem) -> List[_Row]:
    rows: List[_Row] = []
    for atom in sys.atoms:
        rows.extend(_rows_of(atom))
    for name in sorted(sys.delays()):
        rows.append(_make_row({name: Fraction(-1)}, Fraction(0), False))
    for name, value in sys.fixed:
        rows.append(_make_row({name: Fraction(1)}, -value, False))
        rows.append(_make_row({name: Fraction(-1)}, value, False))
    return rows


def _constant_ok(row: _Row) -> bool:
    return row.const < 0 if row.strict else row.const <= 0


def _eliminate(rows: FrozenSet[_Row], name: str) -> FrozenSet[_Row]:
    keep, pos, neg = [], [], []
    for row in rows:
        c = row.coef(name)
        (pos if c > 0 else neg if c < 0 else keep).append(row)
    result = set(keep)
    for p in pos:
        cp = p.coef(name)
        for n in neg:
            cn = -n.coef(name)
            coeffs: Dict[str, Fraction] = {}
            for var, value in p.coeffs:
                coeffs[var] = coeffs.get(var, Fraction(0)) + value * cn
            for var, value in n.coeffs:
                coeffs[var] = coeffs.get(var, Fraction(0)) + value * cp
            coeffs.pop(name, None)
            result.add(_make_row(coeffs, p.const * cn + n.const * cp, p.strict or n.strict))
    return frozenset(result)


def _elimination_cost(rows: FrozenSet[_Row], name: str) -> int:
    pos = sum(1 for row in rows if row.coef(name) > 0)
    neg = sum(1 for row in rows if row.coef(name) < 0)
    return pos * neg - pos - neg


def _pick(lo: Optional[Fraction], lo_strict: bool, hi: Optional[Fraction], hi_strict: bool) -> Fraction:
    def admits(x: Fraction) -> bool:
        above = lo is None or (x > lo if lo_strict else x >= lo)
        below = hi is None or (x < hi if hi_strict else x <= hi)
        return above and below

    if admits(Fraction(0)):
        return Fraction(0)
    if lo is not None and not lo_strict and admits(lo):
        return lo
    if hi is not None and not hi_strict and admits(hi):
        return hi
    if lo is not None and hi is not None:
        return (lo + hi) / 2
    if lo is not None:
        return lo + 1
    return hi - 1


def _solve_rows(rows: List[_Row], names: Set[str]) -> Optional[Dict[str, Fraction]]:
    current = frozenset(rows)
    stages: List[Tuple[str, FrozenSet[_Row]]] = []
    pending = set(names)
    while True:
        constants = [row for row in current if not row.coeffs]
        if not all(_constant_ok(row) for row in constants):
            return None
        current = frozenset(row for row in current if row.coeffs)
        if not pending:
            break
        name = min(pending, key=lambda var: (_elimination_cost(current, var), var))
        pending.discard(name)
        stages.append((name, current))
        current = _eliminate(current, name)
        logger.debug("eliminated %s, %d rows remain", name, len(current))
    model: Dict[str, Fraction] = {}
    for name, stage_rows in reversed(stages):
        lo: Optional[Fraction] = None
        hi: Optional[Fraction] = None
        lo_strict = hi_strict = False
        for row in stage_rows:
            a = row.coef(name)
            if a == 0:
                continue
            rest = row.const + sum(value * model[var] for var, value in row.coeffs if var != name)
            bound = -rest / a
            if a > 0:
                if hi is None or bound < hi or (bound == hi and row.strict):
                    hi, hi_strict = bound, row.strict
            elif lo is None or bound > lo or (bound == lo and row.strict):
                lo, lo_strict = bound, row.strict
        model[name] = _pick(lo, lo_strict, hi, hi_strict)
    return model


def evaluate(t, model: Dict[str, Fraction]) -> Fraction:
    coeffs, constant = linearize(t)
    return constant + sum(value * model.get(name, Fraction(0)) for name, value in coeffs.items())


def satisfies(model: Dict[str, Fraction], atom: ConstraintAtom) -> bool:
    a, b = evaluate(atom.a, model), evaluate(atom.b, model)
    if isinstance(atom, Eq):
        return a == b
    return a < b if atom.strict else a <= b


def model_satisfies(model: Dict[str, Fraction], sys: ConstraintSystem) -> bool:
    if any(model.get(name, Fraction(0)) < 0 for name in sys.delays()):
        return False
    if any(model.get(name) != value for name, value in sys.fixed):
        return False
    return all(satisfies(model, atom) for atom in sys.atoms)


def is_satisfiable(sys: ConstraintSystem) -> Tuple[bool, Optional[Dict[str, Fraction]]]:
    """Decide a max-free system over the rationals; return a model when satisfiable."""
    if sys.has_max():
        raise AnalysisError("E_MAXOF", "eliminate max() before solving")
    model = _solve_rows(_system_rows(sys), sys.variables())
    if model is None:
        return False, None
    if not model_satisfies(model, sys):
        raise RuntimeError("solver produced a model that fails substitution: " + "; ".join(sys.render_lines()))
    return True, dict(sorted(model.items()))


def satisfiable_any(sys: ConstraintSystem) -> Tuple[bool, Optional[Dict[str, Fraction]]]:
    """Satisfiability allowing max(): true if some max-free branch is satisfiable."""
    for branch in eliminate_max(sys):
        ok, model = is_satisfiable(branch)
        if ok:
            return ok, model
    return False, None


def negations(atom: ConstraintAtom) -> List[Le]:
    if isinstance(atom, Le):
        return [Le(atom.b, atom.a, strict=not atom.strict)]
    return [Le(atom.a, atom.b, strict=True), Le(atom.b, atom.a, strict=True)]


def refuting_model(sys: ConstraintSystem, atom: ConstraintAtom) -> Optional[Dict[str, Fraction]]:
    """A model of sys in which atom is false, if one exists."""
    if contains_max(atom):
        raise AnalysisError("E_MAXOF", "entailment targets must be max-free")
    for branch in eliminate_max(sys):
        for negated in negations(atom):
            ok, model = is_satisfiable(branch.with_atoms(negated))
            if ok:
                return model
    return None


def entails(sys: ConstraintSystem, atom: ConstraintAtom) -> bool:
    return refuting_model(sys, atom) is None
