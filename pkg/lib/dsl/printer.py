"""Canonical .ppl text for a parsed protocol; parsing the output gives back equal objects."""

from typing import List, Optional

from core.formulas import render_term
from core.messages import render_msg
from core.timing import format_fraction, render_atom
from services.logic import render_rule
from services.protocol import EvidenceSpec, ProtocolSpec


def _parties(spec: ProtocolSpec) -> List[str]:
    lines = []
    plain = [p.name for p in spec.parties if not p.is_ttp]
    trusted = [p.name for p in spec.parties if p.is_ttp]
    if plain:
        lines.append(f"party {', '.join(plain)};")
    if trusted:
        lines.append(f"ttp {', '.join(trusted)};")
    return lines


def _keys(spec: ProtocolSpec) -> List[str]:
    lines = []
    for alias, key in spec.keys.items():
        if key.kind == "public":
            lines.append(f"pubkey {alias} of {key.owner};")
        elif key.kind == "shared":
            a, b = key.endpoints
            lines.append(f"sharedkey {alias} between {a} {b};")
        elif key.kind == "session":
            lines.append(f"sessionkey {alias};")
    return lines


def spec_to_text(spec: ProtocolSpec, evidence: Optional[EvidenceSpec] = None) -> str:
    lines = [f"protocol {spec.name};"]
    lines.extend(_parties(spec))
    lines.extend(_keys(spec))
    for owner, msgs in spec.initial_knowledge.items():
        if msgs:
            lines.append(f"know {owner}: {', '.join(render_msg(m) for m in msgs)};")
    for owner, items in spec.beliefs.items():
        if items:
            lines.append(f"believes {owner}: {', '.join(render_term(b) for b in items)};")
    implied = {}
    for a, b in spec.counterparts.items():
        if implied.get(a) == b:
            continue
        lines.append(f"counterpart {a} {b};")
        implied[a] = b
        implied.setdefault(b, a)
    for (a, b), kind in spec.channels.items():
        lines.append(f"channel {a} {b} {kind};")
    for index in sorted(spec.fresh_decls):
        msgs = spec.fresh_decls[index]
        if msgs:
            lines.append(f"fresh {', '.join(render_msg(m) for m in msgs)} at step {index};")
    for step in spec.steps:
        lines.append(
            f"{step.index}. {step.sender} -> {step.receiver} : {render_msg(step.msg)} @ {step.at.name};"
        )
    for name, t in spec.timeouts.items():
        lines.append(
            f"timeout {name} waits {t.waiting.name} after step {t.after_step} expecting step {t.reply_step};"
        )
    for rule in spec.assumptions:
        lines.append(f"assume {rule.name}: {render_rule(rule)};")
    for atom in spec.constraints:
        lines.append(f"constraint {render_atom(atom)};")
    for name, value in spec.pins.items():
        lines.append(f"pin {name} = {format_fraction(value)};")
    if evidence is not None:
        for item in evidence.items:
            lines.append(f"evidence {item.name} held_by {item.holder} = {render_msg(item.msg)};")
        for m, holder in evidence.exchanged:
            lines.append(f"item {render_msg(m)} held_by {holder};")
        for goal in evidence.goals:
            lines.append(f"goal sufficiency {goal.evidence}: {render_term(goal.formula)};")
    return "\n".join(lines) + "\n"
