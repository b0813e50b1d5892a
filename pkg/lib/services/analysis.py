"""Five-phase protocol analysis: initial sets, assumptions, sufficiency, accountability, fairness/timeliness."""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

from core.errors import AnalysisError, Diagnostic, has_errors
from core.formulas import CanProve, Possesses, render_term
from core.messages import Knowledge, flatten_pairs, render_msg
from core.timing import (
    TERMINAL,
    ConstraintSystem,
    Eq,
    Var,
    bind_first_occurrence,
    entails,
    refuting_model,
    render_atom,
    render_time,
    satisfiable_any,
)
from services.logic import DEFAULT_DEPTH_LIMIT, Derivation, KnowledgeBase, Prover, make_kb, register_assumption, render_rule
from services.protocol import (
    EvidenceItem,
    EvidenceSpec,
    ProtocolSpec,
    RunConfig,
    Timeout,
    can_fire,
    full_config,
    initial_sets,
    run,
    terminal_states,
    timing_system,
    validate,
    waiting_bindings,
    waiting_condition,
)

logger = logging.getLogger(__name__)

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"

CHECKS = ("sufficiency", "accountability", "fairness", "timeliness")

ENTAILED = "entailed"
REFUTABLE = "refutable"
CONTINGENT = "contingent"

REPORT_NOTES = (
    "The no-secret-leak side condition of proofs is approximated: no party must exhibit a private or "
    "session key unless it is part of declared evidence.",
    "Dishonest parties may stop or time out but never replay old messages; replay is not modeled.",
    "The fairness instants T_k range over every terminal state of the protocol.",
)


@dataclass
class Witness:
    config: Optional[RunConfig] = None
    model: Dict[str, Fraction] = field(default_factory=dict)
    system: List[str] = field(default_factory=list)
    violates: str = ""


@dataclass
class ProofRecord:
    evidence: str
    goal: Any
    status: str
    derivation: Optional[Derivation] = None
    constraints: List[str] = field(default_factory=list)


@dataclass
class EvidenceRecord:
    name: str
    holder: str
    derivable: bool
    first_derivable: Dict[str, Optional[str]] = field(default_factory=dict)


@dataclass
class ConditionRecord:
    party: str
    after_step: int
    reply_step: int
    condition: str
    bindings: List[str]
    status: str
    witnesses: List[Witness] = field(default_factory=list)


@dataclass
class StateRecord:
    config: RunConfig
    sides: Dict[str, bool]
    model: Dict[str, Fraction]


@dataclass
class Verdict:
    property: str
    status: str
    summary: str = ""
    proofs: List[ProofRecord] = field(default_factory=list)
    evidence: List[EvidenceRecord] = field(default_factory=list)
    conditions: List[ConditionRecord] = field(default_factory=list)
    violations: List[StateRecord] = field(default_factory=list)
    subchecks: Dict[str, str] = field(default_factory=dict)
    witnesses: List[Witness] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)


@dataclass
class AnalysisReport:
    protocol: str
    diagnostics: List[Diagnostic] = field(default_factory=list)
    initial_sets: Dict[str, List[str]] = field(default_factory=dict)
    beliefs: Dict[str, List[str]] = field(default_factory=dict)
    assumptions: List[Tuple[str, str]] = field(default_factory=list)
    verdicts: Dict[str, Verdict] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def statuses(self) -> Dict[str, str]:
        return {name: verdict.status for name, verdict in self.verdicts.items()}


def combine(statuses: Sequence[str]) -> str:
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return PASS


def _model_out(model: Optional[Dict[str, Fraction]]) -> Dict[str, Fraction]:
    return dict(sorted((model or {}).items()))


class Analyzer:
    """Runs the individual checks for one protocol and its evidence declarations."""

    def __init__(self, spec: ProtocolSpec, evidence: EvidenceSpec, depth_limit: int = DEFAULT_DEPTH_LIMIT):
        self.spec = spec
        self.evidence = evidence
        self.depth_limit = depth_limit
        self._conditions: Optional[List[ConditionRecord]] = None

    # ---- phase 2 ----

    def knowledge_base(self, facts: Sequence[Any] = ()) -> KnowledgeBase:
        """Belief facts plus `facts`, with every declared assumption registered."""
        beliefs = [
            CanProve(self.spec.party(owner), belief)
            for owner, items in sorted(self.spec.beliefs.items())
            for belief in items
        ]
        counterparts = {name: self.spec.party(partner) for name, partner in self.spec.counterparts.items()}
        kb = make_kb(list(facts) + beliefs, counterparts=counterparts)
        for rule in self.spec.assumptions:
            kb = register_assumption(kb, rule)
        return kb

    def evidence_facts(self, item: EvidenceItem) -> List[Any]:
        return [Possesses(item.holder, part, TERMINAL) for part in flatten_pairs(item.msg)]

    # ---- phase 3 ----

    def check_sufficiency(self) -> Verdict:
        verdict = Verdict("sufficiency", PASS)
        sys = ConstraintSystem()
        for goal in self.evidence.goals:
            item = self.evidence.get(goal.evidence)
            facts: List[Any] = []
            if item is None:
                verdict.diagnostics.append(
                    Diagnostic(code="E_UNKNOWN_EVIDENCE", message=f"goal refers to undeclared evidence {goal.evidence}")
                )
            else:
                facts = self.evidence_facts(item)
            prover = Prover(self.knowledge_base(facts), self.depth_limit)
            found = prover.prove(goal.formula, sys)
            if found is not None:
                derivation, sys = found
                constraints = [render_atom(atom) for atom in derivation.all_emitted()]
                verdict.proofs.append(ProofRecord(goal.evidence, goal.formula, PASS, derivation, constraints))
                continue
            status = INCONCLUSIVE if prover.exhausted else FAIL
            if prover.exhausted:
                verdict.diagnostics.append(
                    Diagnostic(
                        code="E_DEPTH",
                        severity="warning",
                        message=f"search depth {self.depth_limit} exhausted for {render_term(goal.formula)}",
                    )
                )
            verdict.proofs.append(ProofRecord(goal.evidence, goal.formula, status))
        verdict.status = combine([proof.status for proof in verdict.proofs])
        verdict.summary = f"{sum(p.status == PASS for p in verdict.proofs)}/{len(verdict.proofs)} goals proved"
        return verdict

    # ---- phase 4 ----

    def check_accountability(self) -> Verdict:
        verdict = Verdict("accountability", PASS)
        result = run(self.spec, full_config(self.spec))
        for item in self.evidence.items:
            timeline = result.timelines.get(item.holder.name)
            if timeline is None:
                verdict.evidence.append(EvidenceRecord(item.name, item.holder.name, False))
                continue
            derivable = Knowledge(timeline.terminal).can_derive(item.msg)
            firsts: Dict[str, Optional[str]] = {}
            for part in flatten_pairs(item.msg):
                firsts[render_msg(part)] = next(
                    (label for label, held in timeline.entries if Knowledge(held).can_derive(part)),
                    None,
                )
            verdict.evidence.append(EvidenceRecord(item.name, item.holder.name, derivable, firsts))
        verdict.status = PASS if all(record.derivable for record in verdict.evidence) else FAIL
        obtained = sum(record.derivable for record in verdict.evidence)
        verdict.summary = f"{obtained}/{len(verdict.evidence)} evidence terms obtained at Te"
        return verdict

    # ---- phase 5 ----

    def _witness_config(self, timeout: Timeout) -> Optional[RunConfig]:
        party = timeout.party.name
        for t in (timeout.reply_step, timeout.reply_step - 1):
            if t >= 0 and can_fire(self.spec, party, t):
                return RunConfig(t, frozenset({party}))
        return None

    def _refuting_witness(self, timeout: Timeout, full: ConstraintSystem, atoms) -> List[Witness]:
        """A model falsifying one of `atoms`, taken from the run in which the party gave up when there is one."""
        config = self._witness_config(timeout)
        candidates = [(config, timing_system(self.spec, config))] if config is not None else []
        candidates.append((None, full))
        for chosen, sys in candidates:
            for atom in atoms:
                refuting = refuting_model(sys, atom)
                if refuting is not None:
                    return [Witness(chosen, _model_out(refuting), sys.render_lines(), render_atom(atom))]
        return []

    def conditions(self) -> List[ConditionRecord]:
        if self._conditions is not None:
            return self._conditions
        sys = timing_system(self.spec, full_config(self.spec))
        records: List[ConditionRecord] = []
        for party, timeout in sorted(self.spec.timeouts.items()):
            low, high = waiting_condition(self.spec, timeout)
            text = f"{render_atom(low)} and {render_atom(high)}"
            reply = Var("Ty")
            bound = bind_first_occurrence(
                [Eq(Var("Tx"), low.a), Eq(reply, low.b)] + waiting_bindings(self.spec, timeout)
            )
            binding_text = [f"Tx = {render_time(bound['Tx'])}"]
            (delay_eq,) = waiting_bindings(self.spec, timeout)
            binding_text.append(f"Ty = {render_time(bound['Ty'])} = {render_time(delay_eq.b)}")
            witnesses: List[Witness] = []
            if entails(sys, low) and entails(sys, high):
                status = ENTAILED
            else:
                holds, model = satisfiable_any(sys.with_atoms(low, high))
                status = CONTINGENT if holds else REFUTABLE
                witnesses.extend(self._refuting_witness(timeout, sys, (high, low)))
                if holds:
                    witnesses.append(Witness(None, _model_out(model), sys.render_lines(), ""))
            records.append(
                ConditionRecord(party, timeout.after_step, timeout.reply_step, text, binding_text, status, witnesses)
            )
        self._conditions = records
        return records

    def check_timeliness(self) -> Verdict:
        verdict = Verdict("timeliness", PASS)
        verdict.conditions = self.conditions()
        failing = [c for c in verdict.conditions if c.status != ENTAILED]
        if failing:
            verdict.status = FAIL
            verdict.witnesses = [w for w in failing[0].witnesses if w.violates]
        verdict.summary = f"{len(verdict.conditions) - len(failing)}/{len(verdict.conditions)} waiting conditions entailed"
        return verdict

    def side(self, holder: str, timelines) -> bool:
        held = Knowledge(timelines[holder].terminal)
        items = [item for item in self.evidence.items if item.holder.name == holder]
        goods = [m for m, owner in self.evidence.exchanged if owner.name == holder]
        return all(held.can_derive(item.msg) for item in items) and all(held.can_derive(m) for m in goods)

    def exchange_violations(self) -> List[StateRecord]:
        """Timing-feasible terminal states in which the holders' sides differ."""
        holders = self.evidence.holders()
        found: List[StateRecord] = []
        for config in terminal_states(self.spec):
            feasible, model = satisfiable_any(timing_system(self.spec, config))
            if not feasible:
                logger.debug("skipping infeasible state %s", config.describe())
                continue
            timelines = run(self.spec, config).timelines
            sides = {holder: self.side(holder, timelines) for holder in holders}
            if len(set(sides.values())) > 1:
                found.append(StateRecord(config, sides, _model_out(model)))
        return found

    def check_fairness(self) -> Verdict:
        verdict = Verdict("fairness", PASS)
        if not self.evidence.items:
            verdict.summary = "no evidence declared; fairness holds vacuously"
            return verdict
        missing = [
            holder
            for holder in self.evidence.holders()
            if holder not in self.spec.timeouts and holder not in self.spec.ttps
        ]
        if missing:
            verdict.status = INCONCLUSIVE
            verdict.diagnostics.append(
                Diagnostic(code="E_NO_TIMEOUTS", message="no waiting time declared for " + ", ".join(missing))
            )
            verdict.summary = "waiting times undeclared"
            return verdict

        verdict.violations = self.exchange_violations()
        verdict.conditions = self.conditions()
        non_entailed = {c.party for c in verdict.conditions if c.status != ENTAILED}
        verdict.subchecks = {
            "exchange": FAIL if verdict.violations else PASS,
            "timing": FAIL if non_entailed else PASS,
        }
        verdict.status = combine(list(verdict.subchecks.values()))
        if verdict.status == FAIL:
            verdict.witnesses = [self._fairness_witness(verdict.violations, non_entailed)]
        verdict.summary = (
            f"{len(verdict.violations)} violating terminal states; "
            f"{len(verdict.conditions) - len(non_entailed)}/{len(verdict.conditions)} waiting conditions entailed"
        )
        return verdict

    def _fairness_witness(self, violations: List[StateRecord], non_entailed: set) -> Witness:
        preferred = [v for v in violations if v.config.timeout_fired & non_entailed]
        chosen = (preferred or violations or [None])[0]
        if chosen is not None:
            sys = timing_system(self.spec, chosen.config)
            violated = ", ".join(f"{h} side {'holds' if ok else 'fails'}" for h, ok in sorted(chosen.sides.items()))
            return Witness(chosen.config, chosen.model, sys.render_lines(), violated)
        for record in self.conditions():
            for witness in record.witnesses:
                if witness.violates:
                    return witness
        return Witness()


def check_sufficiency(spec: ProtocolSpec, evidence: EvidenceSpec, depth_limit: int = DEFAULT_DEPTH_LIMIT) -> Verdict:
    return Analyzer(spec, evidence, depth_limit).check_sufficiency()


def check_accountability(spec: ProtocolSpec, evidence: EvidenceSpec) -> Verdict:
    return Analyzer(spec, evidence).check_accountability()


def check_fairness(spec: ProtocolSpec, evidence: EvidenceSpec) -> Verdict:
    return Analyzer(spec, evidence).check_fairness()


def check_timeliness(spec: ProtocolSpec) -> Verdict:
    return Analyzer(spec, EvidenceSpec()).check_timeliness()


def analyze(
    spec: ProtocolSpec,
    evidence: Optional[EvidenceSpec] = None,
    checks: Optional[Sequence[str]] = None,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
) -> AnalysisReport:
    """Run the full procedure; malformed input yields diagnostics, never an exception."""
    evidence = evidence or EvidenceSpec()
    report = AnalysisReport(spec.name)
    report.diagnostics = validate(spec)
    if has_errors(report.diagnostics):
        logger.info("validation failed with %d diagnostics", len(report.diagnostics))
        return report
    analyzer = Analyzer(spec, evidence, depth_limit)
    try:
        report.initial_sets = initial_sets(spec)
        report.beliefs = {
            owner: sorted(render_term(b) for b in items) for owner, items in sorted(spec.beliefs.items())
        }
        analyzer.knowledge_base()
        report.assumptions = [(rule.name, render_rule(rule)) for rule in spec.assumptions]
        phases = {
            "sufficiency": analyzer.check_sufficiency,
            "accountability": analyzer.check_accountability,
            "fairness": analyzer.check_fairness,
            "timeliness": analyzer.check_timeliness,
        }
        for name in CHECKS:
            if checks is None or name in checks:
                logger.info("running %s check", name)
                report.verdicts[name] = phases[name]()
    except AnalysisError as exc:
        report.diagnostics.append(exc.to_diagnostic())
    report.notes = list(REPORT_NOTES)
    return report
