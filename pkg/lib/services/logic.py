"""Axioms, credible assumptions and a backward-chaining prover with replayable derivations."""

import logging
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from core.errors import AnalysisError
from core.formulas import (
    CanProve,
    Conj,
    Dual,
    Possesses,
    PubKeyOf,
    Received,
    Sent,
    SharedKeyOf,
    Subst,
    anonymize,
    conj,
    is_ground,
    message_of,
    metavars,
    rename,
    render_term,
    substitute,
    unify,
    walk,
)
from core.messages import Enc, KeyMsg, MetaVar, Pair, PartyId, private_key, public_key, subterms
from core.timing import ConstraintSystem, Le, MaxOf, ScopedTime, Var, render_atom, satisfiable_any

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_LIMIT = 12

RULE_KINDS = ("axiom", "meta", "assumption")

FACT = "fact"

FRESH_TIME_NAMES = (
    "Talpha",
    "Tbeta",
    "Tgamma",
    "Ttheta",
    "Tdelta",
    "Tepsilon",
    "Teta",
    "Tiota",
    "Tkappa",
    "Tlambda",
    "Tmu",
    "Tnu",
)

_PLACEHOLDER = "_f"


@dataclass(frozen=True)
class Implies:
    premise: Any
    conclusion: Any


@dataclass(frozen=True)
class Rule:
    """An inference rule over formula patterns.

    `fresh` names time metavariables bound to new time variables when the rule
    fires; `counterparts` pairs (target, source) bind target to the declared
    counterpart of the party bound to source.
    """

    name: str
    premises: Tuple[Any, ...]
    conclusion: Any
    side_constraints: Tuple[Any, ...] = ()
    fresh: Tuple[str, ...] = ()
    counterparts: Tuple[Tuple[str, str], ...] = ()
    kind: str = "axiom"
    description: str = field(default="", compare=False)

    @property
    def searchable(self) -> bool:
        return self.kind != "meta"


def check_rule(rule: Rule) -> Rule:
    if rule.kind not in RULE_KINDS:
        raise ValueError(f"unknown rule kind {rule.kind!r}")
    bound: Set[str] = set(metavars(rule.premises)) | set(rule.fresh)
    for target, source in rule.counterparts:
        if source not in bound and source not in metavars(rule.conclusion):
            raise AnalysisError("E_UNBOUND_METAVAR", f"rule {rule.name}: counterpart source ?{source} is never bound")
        bound.add(target)
    loose = [name for name in metavars((rule.conclusion, rule.side_constraints)) if name not in bound]
    if loose:
        names = ", ".join(f"?{name}" for name in loose)
        raise AnalysisError("E_UNBOUND_METAVAR", f"rule {rule.name}: {names} not bound by any premise")
    return rule


def render_rule(rule: Rule) -> str:
    """DSL text of a rule: premises => conclusion [where ...]."""

    def text(t: Any) -> str:
        if isinstance(t, Implies):
            return f"({text(t.premise)} implies {text(t.conclusion)})"
        return render_term(t)

    out = " and ".join(text(p) for p in rule.premises) + " => " + text(rule.conclusion)
    clauses = [f"?{target} counterpart ?{source}" for target, source in rule.counterparts]
    clauses.extend(render_atom(atom) for atom in rule.side_constraints)
    if clauses:
        out += " where " + " and ".join(clauses)
    return out


_A, _B, _P = MetaVar("A"), MetaVar("B"), MetaVar("P")
_m, _n, _K, _k = MetaVar("m"), MetaVar("n"), MetaVar("K"), MetaVar("k")
_T, _Tx, _Ty = MetaVar("T"), MetaVar("Tx"), MetaVar("Ty")
_x, _y = MetaVar("x"), MetaVar("y")


def _origin_rule(name: str, key_premise: Any, description: str, key=None) -> Rule:
    return Rule(
        name,
        (Possesses(_A, Enc(_m, key if key is not None else _K), _Tx), CanProve(_A, key_premise)),
        CanProve(_A, Sent(_B, _m, ScopedTime(_Ty, bound=_Tx))),
        side_constraints=(Le(_Ty, _Tx),),
        fresh=("Ty",),
        description=description,
    )


def _pair_rules(name: str, kind) -> List[Rule]:
    rules = []
    for part in (_m, _n):
        rules.append(Rule(name, (kind(_A, Pair(_m, _n), _T),), kind(_A, part, _T), description="pair component"))
    for part in (_m, _n):
        rules.append(
            Rule(
                name,
                (CanProve(_P, kind(_A, Pair(_m, _n), _T)),),
                CanProve(_P, kind(_A, part, _T)),
                description="pair component under proof",
            )
        )
    return rules


def builtin_rules() -> List[Rule]:
    """Axioms in search order, followed by the pair decomposition rules."""
    rules = [
        Rule("MP", (_x, Implies(_x, _y)), _y, kind="meta", description="modus ponens"),
        Rule(
            "A1",
            (CanProve(_A, _x), CanProve(_A, _y)),
            CanProve(_A, Conj((_x, _y))),
            description="proofs combine into a proof of the conjunction",
        ),
        Rule(
            "A2",
            (CanProve(_A, _x), Implies(_x, _y)),
            CanProve(_A, _y),
            kind="meta",
            description="proofs are closed under declared implications",
        ),
        _origin_rule(
            "A3",
            PubKeyOf(public_key(_B), _B),
            "a held signature proves its signer sent the body no later than it was held",
            key=private_key(_B),
        ),
        _origin_rule(
            "A3s",
            SharedKeyOf(_K, _A, _B),
            "a message under a key shared with B proves B sent the body",
        ),
        _origin_rule(
            "A3s",
            SharedKeyOf(_K, _B, _A),
            "a message under a key shared with B proves B sent the body",
        ),
        Rule(
            "A4",
            (CanProve(_A, Sent(_B, Enc(_m, _k), _Tx)), CanProve(_A, Sent(_B, KeyMsg(Dual(_k)), _Ty))),
            CanProve(_A, Sent(_B, _m, MaxOf(_Tx, _Ty))),
            description="sending a ciphertext and its key amounts to sending the plaintext",
        ),
        Rule("A5", (Received(_A, _m, _T),), Possesses(_A, _m, _T), description="received messages are held"),
        Rule(
            "A6",
            (Received(_A, Enc(_m, _K), _T), Possesses(_A, KeyMsg(Dual(_K)), _Tx)),
            Received(_A, _m, _T),
            description="a received ciphertext with a held key yields its plaintext",
        ),
        Rule(
            "A6p",
            (
                CanProve(_A, Possesses(_B, Enc(_m, _K), _Tx)),
                CanProve(_A, Possesses(_B, KeyMsg(Dual(_K)), _Ty)),
            ),
            CanProve(_A, Possesses(_B, _m, MaxOf(_Tx, _Ty))),
            description="proved possession of a ciphertext and its key proves possession of the plaintext",
        ),
    ]
    rules.extend(_pair_rules("PairSent", Sent))
    rules.extend(_pair_rules("PairRecv", Received))
    return rules


@dataclass(frozen=True)
class KnowledgeBase:
    facts: FrozenSet[Any]
    rules: Tuple[Rule, ...]
    counterparts: Tuple[Tuple[str, PartyId], ...] = ()

    def counterpart_of(self, party: str) -> Optional[PartyId]:
        for name, partner in self.counterparts:
            if name == party:
                return partner
        return None

    def assumptions(self) -> List[Rule]:
        return [rule for rule in self.rules if rule.kind == "assumption"]


def make_kb(
    facts: Iterable[Any],
    rules: Optional[Sequence[Rule]] = None,
    counterparts: Optional[Dict[str, PartyId]] = None,
) -> KnowledgeBase:
    facts = frozenset(facts)
    for fact in facts:
        if not is_ground(fact):
            raise AnalysisError("E_UNBOUND_METAVAR", f"fact is not ground: {render_term(fact)}")
    chosen = tuple(builtin_rules() if rules is None else rules)
    pairs = tuple(sorted((counterparts or {}).items()))
    return KnowledgeBase(facts, chosen, pairs)


def register_assumption(kb: KnowledgeBase, rule: Rule) -> KnowledgeBase:
    """A new knowledge base whose search also uses `rule`, after the existing rules."""
    check_rule(rule)
    logger.debug("registered assumption %s", rule.name)
    return KnowledgeBase(kb.facts, kb.rules + (rule,), kb.counterparts)


@dataclass(frozen=True)
class Derivation:
    goal: Any
    rule: str
    children: Tuple["Derivation", ...] = ()
    bindings: Tuple[Tuple[str, Any], ...] = ()
    emitted: Tuple[Any, ...] = ()

    def rules_used(self) -> Set[str]:
        used = {self.rule} if self.rule != FACT else set()
        for child in self.children:
            used |= child.rules_used()
        return used

    def leaves(self) -> List[Any]:
        if self.rule == FACT:
            return [self.goal]
        out: List[Any] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def all_emitted(self) -> List[Any]:
        out = list(self.emitted)
        for child in self.children:
            out.extend(child.all_emitted())
        return out


@dataclass(frozen=True)
class _Node:
    goal: Any
    rule: str
    children: Tuple["_Node", ...] = ()
    renaming: Tuple[Tuple[str, MetaVar], ...] = ()
    emitted: Tuple[Any, ...] = ()


def _map_vars(t: Any, names: Dict[str, str]) -> Any:
    if isinstance(t, Var):
        return Var(names.get(t.name, t.name))
    if isinstance(t, tuple):
        return tuple(_map_vars(item, names) for item in t)
    if isinstance(t, Conj):
        return conj(*(_map_vars(part, names) for part in t.parts))
    if is_dataclass(t) and not isinstance(t, type):
        return type(t)(**{f.name: _map_vars(getattr(t, f.name), names) for f in fields(t)})
    return t


def _placeholders(t: Any, found: Set[str]) -> None:
    if isinstance(t, Var):
        if t.name.startswith(_PLACEHOLDER):
            found.add(t.name)
    elif isinstance(t, tuple):
        for item in t:
            _placeholders(item, found)
    elif is_dataclass(t) and not isinstance(t, type):
        for f in fields(t):
            _placeholders(getattr(t, f.name), found)


def _signature(formula: Any) -> Tuple[str, str]:
    if isinstance(formula, CanProve):
        body = formula.body
        return "CanProve", "" if isinstance(body, MetaVar) else type(body).__name__
    return type(formula).__name__, ""


class Prover:
    """Depth-limited SLD search over a knowledge base.

    Iterative deepening from depth 1 keeps the first proof found shallow. After a
    call, `exhausted` is true when the search was cut by the depth limit without
    finding a proof.
    """

    def __init__(self, kb: KnowledgeBase, depth_limit: int = DEFAULT_DEPTH_LIMIT) -> None:
        if depth_limit < 1:
            raise ValueError("depth_limit must be at least 1")
        self.kb = kb
        self.depth_limit = depth_limit
        self.exhausted = False
        self._by_signature: Dict[Tuple[str, str], List[Any]] = {}
        for fact in sorted(kb.facts, key=render_term):
            self._by_signature.setdefault(_signature(fact), []).append(fact)
        self._relevant: List[Any] = []
        seen: Set[Any] = set()
        for fact in kb.facts:
            m = message_of(fact)
            if m is not None:
                for sub in sorted(subterms(m) - seen, key=render_term):
                    seen.add(sub)
                    self._relevant.append(sub)
        self._counter = 0
        self._cut = False
        self._loop_hits = 0
        self._failed: Dict[Any, Tuple[int, bool]] = {}
        self._limit = depth_limit

    def prove(self, goal: Any, sys: Optional[ConstraintSystem] = None) -> Optional[Tuple[Derivation, ConstraintSystem]]:
        sys = sys or ConstraintSystem()
        self.exhausted = False
        taken = sys.variables() | {node.name for node in _vars_in(goal)}
        for limit in range(1, self.depth_limit + 1):
            self._limit = limit
            self._cut = False
            self._failed = {}
            for subst, node in self._solve(goal, {}, 0, frozenset()):
                derivation, emitted = self._finalize(node, subst, set(taken))
                candidate = sys.with_atoms(*emitted)
                ok, _ = satisfiable_any(candidate)
                if ok:
                    logger.debug("proved %s at depth %d", render_term(derivation.goal), limit)
                    return derivation, candidate
            if not self._cut:
                break
        self.exhausted = self._cut
        logger.debug("no proof for %s (depth exhausted: %s)", render_term(goal), self.exhausted)
        return None

    # ---- search ----

    def _solve(self, goal: Any, subst: Subst, depth: int, ancestors: FrozenSet[Any]) -> Iterator[Tuple[Subst, _Node]]:
        resolved = substitute(goal, subst)
        key = anonymize(resolved)
        remaining = self._limit - depth
        failed = self._failed.get(key)
        if failed is not None and failed[0] >= remaining:
            self._cut = self._cut or failed[1]
            return
        if key in ancestors:
            self._loop_hits += 1
            return
        hits, cut_before = self._loop_hits, self._cut
        self._cut = False
        produced = False
        for item in self._expand(resolved, subst, depth, ancestors | {key}):
            produced = True
            yield item
        cut_here = self._cut
        self._cut = cut_before or cut_here
        if not produced and self._loop_hits == hits:
            self._failed[key] = (remaining, cut_here)

    def _solve_all(
        self, premises: Sequence[Any], subst: Subst, depth: int, ancestors: FrozenSet[Any]
    ) -> Iterator[Tuple[Subst, Tuple[_Node, ...]]]:
        if not premises:
            yield subst, ()
            return
        for first_subst, node in self._solve(premises[0], subst, depth, ancestors):
            for rest_subst, rest in self._solve_all(premises[1:], first_subst, depth, ancestors):
                yield rest_subst, (node,) + rest

    def _expand(self, goal: Any, subst: Subst, depth: int, ancestors: FrozenSet[Any]) -> Iterator[Tuple[Subst, _Node]]:
        for fact in self._candidate_facts(goal):
            matched = unify(goal, fact, subst)
            if matched is not None:
                yield matched, _Node(goal, FACT)
        if depth >= self._limit:
            self._cut = True
            return
        for rule in self.kb.rules:
            if not rule.searchable:
                continue
            yield from self._apply(rule, goal, subst, depth, ancestors)

    def _apply(self, rule: Rule, goal: Any, subst: Subst, depth: int, ancestors: FrozenSet[Any]) -> Iterator[Tuple[Subst, _Node]]:
        self._counter += 1
        suffix = str(self._counter)
        renamed = rename(
            (rule.premises, rule.conclusion, rule.side_constraints),
            suffix,
        )
        premises, conclusion, side = renamed
        s = unify(conclusion, goal, subst)
        if s is None:
            return
        for name in rule.fresh:
            var = MetaVar(f"{name}#{suffix}")
            if isinstance(walk(var, s), MetaVar):
                self._counter += 1
                s = dict(s)
                s[var.name] = Var(f"{_PLACEHOLDER}{self._counter}")
        s = self._bind_counterparts(rule, suffix, s)
        if s is None:
            return
        if not all(self._relevant_premise(p, s) for p in premises):
            return
        renaming = tuple((name, MetaVar(f"{name}#{suffix}")) for name in metavars((rule.premises, rule.conclusion, rule.side_constraints)))
        for solved, children in self._solve_all(premises, s, depth + 1, ancestors):
            final = self._bind_counterparts(rule, suffix, solved, strict=True)
            if final is None:
                continue
            yield final, _Node(goal, rule.name, children, renaming, tuple(side))

    def _bind_counterparts(self, rule: Rule, suffix: str, s: Subst, strict: bool = False) -> Optional[Subst]:
        for target, source in rule.counterparts:
            party = walk(MetaVar(f"{source}#{suffix}"), s)
            if not isinstance(party, PartyId):
                if strict:
                    return None
                continue
            partner = self.kb.counterpart_of(party.name)
            if partner is None:
                return None
            s = unify(MetaVar(f"{target}#{suffix}"), partner, s)
            if s is None:
                return None
        return s

    def _candidate_facts(self, goal: Any) -> List[Any]:
        if isinstance(goal, MetaVar):
            return sorted(self.kb.facts, key=render_term)
        signature = _signature(goal)
        if signature[0] == "CanProve" and signature[1] == "":
            return [f for sig, facts in sorted(self._by_signature.items()) if sig[0] == "CanProve" for f in facts]
        return self._by_signature.get(signature, [])

    def _relevant_premise(self, premise: Any, subst: Subst) -> bool:
        m = message_of(substitute(premise, subst))
        if m is None or isinstance(m, MetaVar):
            return True
        return any(unify(m, sub, {}) is not None for sub in self._relevant)

    # ---- results ----

    def _finalize(self, node: _Node, subst: Subst, taken: Set[str]) -> Tuple[Derivation, List[Any]]:
        found: Set[str] = set()
        _placeholders(substitute((_collect_goals(node), _collect_emitted(node)), subst), found)
        ordered = sorted(found, key=lambda name: int(name[len(_PLACEHOLDER):]))
        names: Dict[str, str] = {}
        pool = [name for name in FRESH_TIME_NAMES if name not in taken]
        for index, placeholder in enumerate(ordered):
            names[placeholder] = pool[index] if index < len(pool) else f"Tfresh{index}"
            taken.add(names[placeholder])
        derivation = self._build(node, subst, names)
        return derivation, derivation.all_emitted()

    def _build(self, node: _Node, subst: Subst, names: Dict[str, str]) -> Derivation:
        def final(t: Any) -> Any:
            return _map_vars(substitute(t, subst), names)

        children = tuple(self._build(child, subst, names) for child in node.children)
        bindings = tuple(sorted((name, final(var)) for name, var in node.renaming))
        emitted = tuple(final(atom) for atom in node.emitted)
        return Derivation(final(node.goal), node.rule, children, bindings, emitted)


def _collect_goals(node: _Node) -> Tuple[Any, ...]:
    out = [node.goal]
    for child in node.children:
        out.extend(_collect_goals(child))
    return tuple(out)


def _collect_emitted(node: _Node) -> Tuple[Any, ...]:
    out = list(node.emitted)
    for child in node.children:
        out.extend(_collect_emitted(child))
    return tuple(out)


def _vars_in(t: Any) -> Set[Var]:
    found: Set[Var] = set()

    def visit(node: Any) -> None:
        if isinstance(node, Var):
            found.add(node)
        elif isinstance(node, tuple):
            for item in node:
                visit(item)
        elif is_dataclass(node) and not isinstance(node, type):
            for f in fields(node):
                visit(getattr(node, f.name))

    visit(t)
    return found


def prove(
    kb: KnowledgeBase,
    goal: Any,
    sys: Optional[ConstraintSystem] = None,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
) -> Optional[Tuple[Derivation, ConstraintSystem]]:
    return Prover(kb, depth_limit).prove(goal, sys)


# ---- Replay ----

def _node_matches(rule: Rule, d: Derivation, kb: KnowledgeBase) -> bool:
    bindings = dict(d.bindings)
    needed = metavars((rule.premises, rule.conclusion, rule.side_constraints))
    if any(name not in bindings for name in needed):
        return False
    if len(rule.premises) != len(d.children):
        return False
    for premise, child in zip(rule.premises, d.children):
        if substitute(premise, bindings) != child.goal:
            return False
    if substitute(rule.conclusion, bindings) != d.goal:
        return False
    if tuple(substitute(atom, bindings) for atom in rule.side_constraints) != d.emitted:
        return False
    if any(not isinstance(bindings[name], Var) for name in rule.fresh):
        return False
    for target, source in rule.counterparts:
        party = bindings.get(source)
        partner = kb.counterpart_of(party.name) if isinstance(party, PartyId) else None
        if partner is None or partner != bindings.get(target):
            return False
    return True


def _replay_node(d: Derivation, kb: KnowledgeBase, atoms: List[Any]) -> bool:
    if d.rule == FACT:
        return not d.children and not d.emitted and d.goal in kb.facts
    if not all(_replay_node(child, kb, atoms) for child in d.children):
        return False
    for rule in kb.rules:
        if rule.name == d.rule and rule.searchable and _node_matches(rule, d, kb):
            atoms.extend(d.emitted)
            return True
    return False


def replay(derivation: Derivation, kb: KnowledgeBase) -> bool:
    """Re-check every inference of a derivation and the satisfiability of its constraints."""
    atoms: List[Any] = []
    if not _replay_node(derivation, kb, atoms):
        return False
    try:
        ok, _ = satisfiable_any(ConstraintSystem.of(atoms))
    except (AnalysisError, TypeError):
        return False
    return ok
