"""Report document models and renderers.

`build_report` turns an AnalysisReport into a pydantic ReportDocument;
`render_report` produces canonical JSON (sorted keys, rationals as strings)
or a text summary in belief-logic notation.
"""

import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

# Ensure lib directory is on sys.path for absolute imports
_lib_path = Path(__file__).resolve().parent
if str(_lib_path) not in sys.path:
    sys.path.insert(0, str(_lib_path))

from core.errors import Diagnostic, has_errors
from core.formulas import render_notation, render_term
from core.timing import format_fraction, render_atom
from services.analysis import (
    CHECKS,
    AnalysisReport,
    ConditionRecord,
    ProofRecord,
    StateRecord,
    Verdict,
    Witness,
)
from services.logic import Derivation

SCHEMA = "paylogic-report/1"
FORMATS = ("json", "text")


class DerivationOut(BaseModel):
    goal: str
    notation: str
    rule: str
    bindings: Dict[str, str] = Field(default_factory=dict)
    constraints: List[str] = Field(default_factory=list)
    children: List["DerivationOut"] = Field(default_factory=list)


DerivationOut.model_rebuild()


class WitnessOut(BaseModel):
    truncate_after: Optional[int] = None
    timeout_fired: List[str] = Field(default_factory=list)
    model: Dict[str, str] = Field(default_factory=dict)
    system: List[str] = Field(default_factory=list)
    violates: str = ""


class ProofOut(BaseModel):
    evidence: str
    goal: str
    status: str
    derivation: Optional[DerivationOut] = None
    constraints: List[str] = Field(default_factory=list)


class EvidenceOut(BaseModel):
    name: str
    holder: str
    derivable: bool
    first_derivable: Dict[str, Optional[str]] = Field(default_factory=dict)


class ConditionOut(BaseModel):
    party: str
    after_step: int
    reply_step: int
    condition: str
    bindings: List[str] = Field(default_factory=list)
    status: str
    witnesses: List[WitnessOut] = Field(default_factory=list)


class StateOut(BaseModel):
    truncate_after: int
    timeout_fired: List[str] = Field(default_factory=list)
    sides: Dict[str, bool] = Field(default_factory=dict)
    model: Dict[str, str] = Field(default_factory=dict)


class VerdictOut(BaseModel):
    status: str
    summary: str = ""
    proofs: List[ProofOut] = Field(default_factory=list)
    evidence: List[EvidenceOut] = Field(default_factory=list)
    conditions: List[ConditionOut] = Field(default_factory=list)
    violations: List[StateOut] = Field(default_factory=list)
    subchecks: Dict[str, str] = Field(default_factory=dict)
    witnesses: List[WitnessOut] = Field(default_factory=list)
    diagnostics: List[Diagnostic] = Field(default_factory=list)


class MetaOut(BaseModel):
    schema_version: str = SCHEMA
    protocol: str = ""
    checks: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)


class ValidationOut(BaseModel):
    ok: bool = True
    diagnostics: List[Diagnostic] = Field(default_factory=list)


class AssumptionOut(BaseModel):
    name: str
    text: str


class ReportDocument(BaseModel):
    meta: MetaOut = Field(default_factory=MetaOut)
    validation: ValidationOut = Field(default_factory=ValidationOut)
    initial_sets: Dict[str, List[str]] = Field(default_factory=dict)
    beliefs: Dict[str, List[str]] = Field(default_factory=dict)
    assumptions: List[AssumptionOut] = Field(default_factory=list)
    sufficiency: Optional[VerdictOut] = None
    accountability: Optional[VerdictOut] = None
    fairness: Optional[VerdictOut] = None
    timeliness: Optional[VerdictOut] = None

    def verdicts(self) -> Dict[str, VerdictOut]:
        return {name: getattr(self, name) for name in CHECKS if getattr(self, name) is not None}


# ---- conversion ----

def _model(model: Dict[str, Fraction]) -> Dict[str, str]:
    return {name: format_fraction(value) for name, value in sorted(model.items())}


def derivation_out(d: Derivation) -> DerivationOut:
    return DerivationOut(
        goal=render_term(d.goal),
        notation=render_notation(d.goal),
        rule=d.rule,
        bindings={name: render_term(value) for name, value in d.bindings},
        constraints=[render_atom(atom) for atom in d.emitted],
        children=[derivation_out(child) for child in d.children],
    )


def _witness(w: Witness) -> WitnessOut:
    out = WitnessOut(model=_model(w.model), system=list(w.system), violates=w.violates)
    if w.config is not None:
        out.truncate_after = w.config.truncate_after
        out.timeout_fired = sorted(w.config.timeout_fired)
    return out


def _proof(p: ProofRecord) -> ProofOut:
    return ProofOut(
        evidence=p.evidence,
        goal=render_term(p.goal),
        status=p.status,
        derivation=derivation_out(p.derivation) if p.derivation is not None else None,
        constraints=list(p.constraints),
    )


def _condition(c: ConditionRecord) -> ConditionOut:
    return ConditionOut(
        party=c.party,
        after_step=c.after_step,
        reply_step=c.reply_step,
        condition=c.condition,
        bindings=list(c.bindings),
        status=c.status,
        witnesses=[_witness(w) for w in c.witnesses],
    )


def _state(s: StateRecord) -> StateOut:
    return StateOut(
        truncate_after=s.config.truncate_after,
        timeout_fired=sorted(s.config.timeout_fired),
        sides=dict(sorted(s.sides.items())),
        model=_model(s.model),
    )


def verdict_out(v: Verdict) -> VerdictOut:
    return VerdictOut(
        status=v.status,
        summary=v.summary,
        proofs=[_proof(p) for p in v.proofs],
        evidence=[
            EvidenceOut(name=e.name, holder=e.holder, derivable=e.derivable, first_derivable=dict(e.first_derivable))
            for e in v.evidence
        ],
        conditions=[_condition(c) for c in v.conditions],
        violations=[_state(s) for s in v.violations],
        subchecks=dict(v.subchecks),
        witnesses=[_witness(w) for w in v.witnesses],
        diagnostics=list(v.diagnostics),
    )


def build_report(report: AnalysisReport) -> ReportDocument:
    doc = ReportDocument(
        meta=MetaOut(protocol=report.protocol, checks=list(report.verdicts), notes=list(report.notes)),
        validation=ValidationOut(ok=not has_errors(report.diagnostics), diagnostics=list(report.diagnostics)),
        initial_sets={name: list(items) for name, items in sorted(report.initial_sets.items())},
        beliefs={name: list(items) for name, items in sorted(report.beliefs.items())},
        assumptions=[AssumptionOut(name=name, text=text) for name, text in report.assumptions],
    )
    for name, verdict in report.verdicts.items():
        setattr(doc, name, verdict_out(verdict))
    return doc


# ---- rendering ----

def _derivation_lines(d: DerivationOut, indent: int) -> List[str]:
    pad = "  " * indent
    lines = [f"{pad}{d.notation}   [{d.rule}]"]
    if d.constraints:
        lines.append(f"{pad}  where {', '.join(d.constraints)}")
    for child in d.children:
        lines.extend(_derivation_lines(child, indent + 1))
    return lines


def _witness_line(w: WitnessOut) -> str:
    parts = []
    if w.truncate_after is not None:
        fired = ",".join(w.timeout_fired) or "-"
        parts.append(f"state truncate_after={w.truncate_after} fired={{{fired}}}")
    if w.violates:
        parts.append(f"violates {w.violates}")
    parts.append(" ".join(f"{name}={value}" for name, value in w.model.items()))
    return "witness: " + "; ".join(parts)


def _verdict_lines(name: str, v: VerdictOut) -> List[str]:
    lines = [f"{name}: {v.status}" + (f" ({v.summary})" if v.summary else "")]
    for proof in v.proofs:
        lines.append(f"  goal {proof.evidence}: {proof.goal} -> {proof.status}")
        if proof.derivation is not None:
            lines.extend(_derivation_lines(proof.derivation, 2))
    for record in v.evidence:
        mark = "obtained" if record.derivable else "missing"
        lines.append(f"  {record.name} held by {record.holder}: {mark}")
        for part, label in record.first_derivable.items():
            lines.append(f"    {part} from {label or 'never'}")
    for sub, status in sorted(v.subchecks.items()):
        lines.append(f"  {sub}: {status}")
    for cond in v.conditions:
        lines.append(f"  {cond.party} waits after step {cond.after_step} for step {cond.reply_step}: {cond.status}")
        lines.append(f"    {cond.condition}")
        lines.extend(f"    {text}" for text in cond.bindings)
    for state in v.violations:
        fired = ",".join(state.timeout_fired) or "-"
        sides = ", ".join(f"{h}={'yes' if ok else 'no'}" for h, ok in state.sides.items())
        lines.append(f"  unfair state truncate_after={state.truncate_after} fired={{{fired}}}: {sides}")
    lines.extend(f"  {_witness_line(w)}" for w in v.witnesses)
    lines.extend(f"  {d.describe()}" for d in v.diagnostics)
    return lines


def render_text(doc: ReportDocument) -> str:
    lines = [f"protocol {doc.meta.protocol} ({doc.meta.schema_version})"]
    lines.extend(d.describe() for d in doc.validation.diagnostics)
    for party, items in doc.initial_sets.items():
        lines.append(f"O_{party}(T0) = {{{', '.join(items)}}}")
    for party, items in doc.beliefs.items():
        lines.extend(f"{party} ≻ {item}" for item in items)
    for assumption in doc.assumptions:
        lines.append(f"assume {assumption.name}: {assumption.text}")
    for name, verdict in doc.verdicts().items():
        lines.extend(_verdict_lines(name, verdict))
    lines.extend(f"note: {note}" for note in doc.meta.notes)
    return "\n".join(lines) + "\n"


def render_report(doc: ReportDocument, fmt: str = "json") -> bytes:
    if fmt not in FORMATS:
        raise ValueError(f"Unknown report format {fmt!r}; use one of {', '.join(FORMATS)}")
    if fmt == "text":
        return render_text(doc).encode("utf-8")
    payload = json.dumps(doc.model_dump(mode="json"), ensure_ascii=False, sort_keys=True, indent=2)
    return (payload + "\n").encode("utf-8")


def parse_report_json(data: Union[bytes, str]) -> ReportDocument:
    return ReportDocument.model_validate_json(data)
