"""Protocol specifications and possession-set run semantics."""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from core.errors import AnalysisError, Diagnostic
from core.messages import Enc, KeyMsg, KeyTerm, Knowledge, Msg, PartyId, render_msg, subterms
from core.timing import (
    ORIGIN,
    TERMINAL,
    ConstraintAtom,
    ConstraintSystem,
    Const,
    DelaySym,
    Eq,
    Le,
    Var,
    plus,
)

if TYPE_CHECKING:
    from services.logic import Rule

logger = logging.getLogger(__name__)

CHANNEL_KINDS = ("unreliable", "recoverable")


@dataclass(frozen=True)
class Step:
    index: int
    sender: PartyId
    receiver: PartyId
    msg: Msg
    at: Var
    line: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class Timeout:
    """`party` waits `waiting` after sending step `after_step` for step `reply_step`."""

    party: PartyId
    after_step: int
    waiting: DelaySym
    reply_step: int


@dataclass
class ProtocolSpec:
    name: str = "protocol"
    parties: List[PartyId] = field(default_factory=list)
    keys: Dict[str, KeyTerm] = field(default_factory=dict)
    steps: List[Step] = field(default_factory=list)
    initial_knowledge: Dict[str, List[Msg]] = field(default_factory=dict)
    fresh_decls: Dict[int, List[Msg]] = field(default_factory=dict)
    timeouts: Dict[str, Timeout] = field(default_factory=dict)
    channels: Dict[Tuple[str, str], str] = field(default_factory=dict)
    beliefs: Dict[str, List[object]] = field(default_factory=dict)
    counterparts: Dict[str, str] = field(default_factory=dict)
    assumptions: List["Rule"] = field(default_factory=list)
    constraints: List[ConstraintAtom] = field(default_factory=list)
    pins: Dict[str, Fraction] = field(default_factory=dict)

    def party(self, name: str) -> Optional[PartyId]:
        for p in self.parties:
            if p.name == name:
                return p
        return None

    @property
    def ttps(self) -> Set[str]:
        return {p.name for p in self.parties if p.is_ttp}

    def step_time(self, index: int) -> Var:
        if index == 0:
            return ORIGIN
        return self.steps[index - 1].at

    def channel(self, a: str, b: str) -> str:
        declared = self.channels.get(tuple(sorted((a, b))))
        if declared:
            return declared
        return "recoverable" if {a, b} & self.ttps else "unreliable"


@dataclass(frozen=True)
class EvidenceItem:
    name: str
    holder: PartyId
    msg: Msg


@dataclass(frozen=True)
class SufficiencyGoal:
    evidence: str
    formula: object


@dataclass
class EvidenceSpec:
    items: List[EvidenceItem] = field(default_factory=list)
    goals: List[SufficiencyGoal] = field(default_factory=list)
    exchanged: List[Tuple[Msg, PartyId]] = field(default_factory=list)

    def get(self, name: str) -> Optional[EvidenceItem]:
        for item in self.items:
            if item.name == name:
                return item
        return None

    def holders(self) -> List[str]:
        return sorted({item.holder.name for item in self.items})


@dataclass(frozen=True)
class RunConfig:
    truncate_after: int
    timeout_fired: FrozenSet[str] = frozenset()
    delay_pins: Tuple[Tuple[str, Fraction], ...] = ()

    def describe(self) -> str:
        fired = ",".join(sorted(self.timeout_fired)) or "-"
        return f"truncate_after={self.truncate_after} timeout_fired={{{fired}}}"


@dataclass(frozen=True)
class TraceEntry:
    step: int
    sender: str
    receiver: str
    sender_rule: str
    receiver_rule: str


@dataclass(frozen=True)
class PossessionTimeline:
    party: str
    entries: Tuple[Tuple[str, FrozenSet[Msg]], ...]

    @property
    def terminal(self) -> FrozenSet[Msg]:
        return self.entries[-1][1]


@dataclass
class RunResult:
    config: RunConfig
    trace: List[TraceEntry]
    timelines: Dict[str, PossessionTimeline]
    system: ConstraintSystem


def _diag(code: str, message: str, step: Optional[Step] = None, index: Optional[int] = None) -> Diagnostic:
    return Diagnostic(
        code=code,
        message=message,
        step=step.index if step is not None else index,
        line=step.line if step is not None else None,
    )


def _key_terms(m: Msg) -> Iterable[KeyTerm]:
    for sub in subterms(m):
        if isinstance(sub, KeyMsg) and isinstance(sub.key, KeyTerm):
            yield sub.key
        elif isinstance(sub, Enc) and isinstance(sub.key, KeyTerm):
            yield sub.key


def _check_keys(spec: ProtocolSpec, m: Msg, where: str, step: Optional[Step] = None) -> List[Diagnostic]:
    declared = set(spec.keys.values())
    names = {p.name for p in spec.parties}
    out: List[Diagnostic] = []
    for key in _key_terms(m):
        if key.asymmetric:
            owner = getattr(key.owner, "name", str(key.owner))
            if owner not in names:
                out.append(_diag("E_UNDECLARED_PARTY", f"{where}: key owner {owner} is not a declared party", step))
        elif key not in declared:
            out.append(_diag("E_UNDECLARED_KEY", f"{where}: key {key.name} is not declared", step))
    return out


def validate(spec: ProtocolSpec) -> List[Diagnostic]:
    """Referential and executability checks; an empty list means the spec can be run."""
    out: List[Diagnostic] = []
    if not spec.parties:
        out.append(_diag("E_EMPTY", "no parties declared"))
        return out
    names: Set[str] = set()
    for p in spec.parties:
        if p.name in names:
            out.append(_diag("E_DUPLICATE_PARTY", f"party {p.name} declared twice"))
        names.add(p.name)

    for owner, msgs in sorted(spec.initial_knowledge.items()):
        if owner not in names:
            out.append(_diag("E_UNDECLARED_PARTY", f"initial knowledge for undeclared party {owner}"))
        for m in msgs:
            out.extend(_check_keys(spec, m, f"initial knowledge of {owner}"))

    seen_times: Set[str] = set()
    for position, step in enumerate(spec.steps, start=1):
        if step.index != position:
            out.append(_diag("E_STEP_ORDER", f"step {step.index} found where step {position} was expected", step))
        for p in (step.sender, step.receiver):
            if p.name not in names:
                out.append(_diag("E_UNDECLARED_PARTY", f"step {step.index}: party {p.name} is not declared", step))
        if step.sender == step.receiver:
            out.append(_diag("E_SELF_SEND", f"step {step.index}: {step.sender.name} sends to itself", step))
        if step.at.name in seen_times or step.at in (ORIGIN, TERMINAL):
            out.append(_diag("E_TIME_REUSE", f"step {step.index}: time variable {step.at.name} already in use", step))
        seen_times.add(step.at.name)
        out.extend(_check_keys(spec, step.msg, f"step {step.index}", step))

    count = len(spec.steps)
    for index in sorted(spec.fresh_decls):
        if not 1 <= index <= count:
            out.append(_diag("E_FRESH_REUSE", f"fresh declaration for missing step {index}", index=index))

    for party, timeout in sorted(spec.timeouts.items()):
        if party not in names:
            out.append(_diag("E_UNDECLARED_PARTY", f"timeout for undeclared party {party}"))
        elif not 1 <= timeout.after_step < timeout.reply_step <= count:
            out.append(
                _diag(
                    "E_TIMEOUT",
                    f"timeout of {party}: need 1 <= after step ({timeout.after_step}) < reply step ({timeout.reply_step}) <= {count}",
                )
            )
        elif spec.steps[timeout.after_step - 1].sender.name != party:
            out.append(_diag("E_TIMEOUT", f"timeout of {party}: step {timeout.after_step} is not sent by {party}"))

    ttps = spec.ttps
    for (a, b), kind in sorted(spec.channels.items()):
        if kind not in CHANNEL_KINDS:
            out.append(_diag("E_CHANNEL", f"channel {a}-{b}: unknown kind {kind}"))
        elif {a, b} & ttps and kind != "recoverable":
            out.append(_diag("E_CHANNEL", f"channel {a}-{b} touches a trusted party and must be recoverable"))

    for party, partner in sorted(spec.counterparts.items()):
        if party not in names or partner not in names:
            out.append(_diag("E_UNDECLARED_PARTY", f"counterpart {party} {partner} names an undeclared party"))

    if out:
        return out
    out.extend(_check_execution(spec))
    return out


def _check_execution(spec: ProtocolSpec) -> List[Diagnostic]:
    out: List[Diagnostic] = []
    sets: Dict[str, Set[Msg]] = {p.name: set(spec.initial_knowledge.get(p.name, ())) for p in spec.parties}
    fresh_seen: Set[Msg] = set()
    for step in spec.steps:
        fresh = spec.fresh_decls.get(step.index, [])
        for m in fresh:
            earlier = m in fresh_seen or any(m in held for held in sets.values())
            if earlier:
                out.append(_diag("E_FRESH_REUSE", f"step {step.index}: {render_msg(m)} is not fresh", step))
            fresh_seen.add(m)
        sender = sets[step.sender.name]
        sender.update(fresh)
        if not Knowledge(sender).can_derive(step.msg):
            out.append(
                _diag(
                    "E_UNDERIVABLE",
                    f"step {step.index}: {step.sender.name} cannot construct {render_msg(step.msg)}",
                    step,
                )
            )
        sender.add(step.msg)
        sets[step.receiver.name].add(step.msg)
    return out


# ---- Runs ----

def can_fire(spec: ProtocolSpec, party: str, truncate_after: int) -> bool:
    """A party may time out once its waiting window opened and nothing reached it since."""
    timeout = spec.timeouts.get(party)
    if timeout is None or timeout.after_step > truncate_after:
        return False
    for step in spec.steps[timeout.after_step:truncate_after]:
        if step.receiver.name == party:
            return False
    return True


def _check_config(spec: ProtocolSpec, config: RunConfig) -> None:
    if not 0 <= config.truncate_after <= len(spec.steps):
        raise AnalysisError(
            "E_BAD_CONFIG", f"truncate_after must be within 0..{len(spec.steps)}, got {config.truncate_after}"
        )
    for party in sorted(config.timeout_fired):
        if not can_fire(spec, party, config.truncate_after):
            raise AnalysisError(
                "E_BAD_CONFIG",
                f"{party} cannot time out in a run truncated after step {config.truncate_after}",
            )


def step_delay(index: int) -> DelaySym:
    return DelaySym(f"t{index}")


def delay_atoms(spec: ProtocolSpec, indices: Iterable[int], truncate_after: int) -> List[Eq]:
    """T_{i+1} = T_i + t_i for each requested step i still inside the run."""
    atoms = []
    for index in sorted(set(indices)):
        if 1 <= index < truncate_after:
            atoms.append(Eq(spec.step_time(index + 1), plus(spec.step_time(index), step_delay(index))))
    return atoms


def run(spec: ProtocolSpec, config: RunConfig, delay_steps: Sequence[int] = ()) -> RunResult:
    """Execute steps 1..truncate_after and build every party's possession timeline."""
    _check_config(spec, config)
    current: Dict[str, Set[Msg]] = {p.name: set(spec.initial_knowledge.get(p.name, ())) for p in spec.parties}
    history: Dict[str, List[Tuple[str, FrozenSet[Msg]]]] = {
        name: [(ORIGIN.name, frozenset(held))] for name, held in current.items()
    }
    trace: List[TraceEntry] = []
    atoms: List[ConstraintAtom] = [Le(Const(Fraction(0)), ORIGIN)]
    previous = ORIGIN
    for step in spec.steps[: config.truncate_after]:
        fresh = spec.fresh_decls.get(step.index, [])
        sender = current[step.sender.name]
        sender.update(fresh)
        sender.add(step.msg)
        receiver = current[step.receiver.name]
        receiver_rule = "no-op" if step.msg in receiver else "added"
        receiver.add(step.msg)
        trace.append(
            TraceEntry(step.index, step.sender.name, step.receiver.name, "generated" if fresh else "held", receiver_rule)
        )
        for name, held in current.items():
            history[name].append((step.at.name, frozenset(held)))
        atoms.append(Le(previous, step.at))
        previous = step.at
    atoms.append(Le(previous, TERMINAL))
    atoms.extend(delay_atoms(spec, delay_steps, config.truncate_after))

    timelines: Dict[str, PossessionTimeline] = {}
    for name, entries in history.items():
        final = entries[-1][1]
        if name in config.timeout_fired:
            final = frozenset(spec.initial_knowledge.get(name, ()))
        timelines[name] = PossessionTimeline(name, tuple(entries) + ((TERMINAL.name, final),))
    system = ConstraintSystem.of(atoms, dict(config.delay_pins))
    logger.debug("ran %s: %d steps, %d atoms", config.describe(), len(trace), len(system.atoms))
    return RunResult(config, trace, timelines, system)


def possession_at(timelines: Dict[str, PossessionTimeline], party: str, at: str) -> FrozenSet[Msg]:
    timeline = timelines.get(party)
    if timeline is None:
        raise AnalysisError("E_UNKNOWN_TIME", f"no timeline for party {party}")
    for label, held in timeline.entries:
        if label == at:
            return held
    raise AnalysisError("E_UNKNOWN_TIME", f"{at} is not an instant of {party}'s timeline")


def full_config(spec: ProtocolSpec) -> RunConfig:
    return RunConfig(len(spec.steps))


def _completes_at_trusted_party(spec: ProtocolSpec, truncate_after: int) -> bool:
    """True when the next step is a trusted party's answer to a request it already got."""
    if truncate_after >= len(spec.steps):
        return False
    nxt = spec.steps[truncate_after]
    if not nxt.sender.is_ttp or spec.channel(nxt.sender.name, nxt.receiver.name) != "recoverable":
        return False
    return any(step.receiver == nxt.sender for step in spec.steps[:truncate_after])


def terminal_states(spec: ProtocolSpec) -> List[RunConfig]:
    """Every truncation point with every legal set of fired timeouts."""
    configs: List[RunConfig] = []
    for t in range(len(spec.steps) + 1):
        if _completes_at_trusted_party(spec, t):
            continue
        eligible = sorted(name for name in spec.timeouts if can_fire(spec, name, t))
        for size in range(len(eligible) + 1):
            for fired in combinations(eligible, size):
                configs.append(RunConfig(t, frozenset(fired)))
    return configs


# ---- Timing ----

def waiting_condition(spec: ProtocolSpec, timeout: Timeout) -> Tuple[Le, Le]:
    """(T_send <= T_reply, T_reply <= T_send + waiting)."""
    sent = spec.step_time(timeout.after_step)
    reply = spec.step_time(timeout.reply_step)
    return Le(sent, reply), Le(reply, plus(sent, timeout.waiting))


def waiting_bindings(spec: ProtocolSpec, timeout: Timeout) -> List[Eq]:
    """Reply time expressed through the step delays of the waiting window."""
    delays = [step_delay(i) for i in range(timeout.after_step, timeout.reply_step)]
    return [Eq(spec.step_time(timeout.reply_step), plus(spec.step_time(timeout.after_step), *delays))]


def timing_system(spec: ProtocolSpec, config: RunConfig) -> ConstraintSystem:
    """Constraint system of a (possibly truncated) run with its timeout semantics."""
    t = config.truncate_after
    windows: List[int] = []
    for timeout in spec.timeouts.values():
        windows.extend(range(timeout.after_step, timeout.reply_step))
    base = run(spec, config, delay_steps=windows).system
    atoms: List[ConstraintAtom] = []
    for name, timeout in sorted(spec.timeouts.items()):
        if timeout.reply_step > t:
            continue
        request = spec.steps[timeout.after_step - 1]
        reply = spec.steps[timeout.reply_step - 1]
        if request.receiver.is_ttp and reply.sender == request.receiver:
            atoms.append(waiting_condition(spec, timeout)[1])
        if name in config.timeout_fired:
            atoms.append(
                Le(
                    plus(spec.step_time(timeout.after_step), timeout.waiting),
                    spec.step_time(timeout.reply_step),
                    strict=True,
                )
            )
    atoms.extend(spec.constraints)
    pins = dict(spec.pins)
    pins.update(dict(config.delay_pins))
    return base.with_atoms(*atoms).with_pins(pins)


def initial_sets(spec: ProtocolSpec) -> Dict[str, List[str]]:
    return {
        p.name: sorted(render_msg(m) for m in spec.initial_knowledge.get(p.name, ()))
        for p in spec.parties
    }

