import random
from fractions import Fraction

import pytest

from core.errors import AnalysisError
from core.messages import Atom, Enc, KeyMsg, Knowledge, PartyId, pair, session_key, sign
from core.timing import DelaySym, Eq, Le, Var, entails, is_satisfiable, plus, satisfiable_any
from oracle.brute_force import enumerate_truncations
from oracle.generate import random_spec
from services.protocol import (
    ProtocolSpec,
    RunConfig,
    Step,
    Timeout,
    can_fire,
    full_config,
    possession_at,
    run,
    terminal_states,
    timing_system,
    validate,
    waiting_bindings,
    waiting_condition,
)

A, B = PartyId("A"), PartyId("B")
x, y = Atom("x"), Atom("y")


def two_step_spec() -> ProtocolSpec:
    spec = ProtocolSpec(name="ping", parties=[A, B])
    spec.initial_knowledge = {"A": [x], "B": []}
    spec.fresh_decls = {2: [y]}
    spec.steps = [Step(1, A, B, x, Var("T1")), Step(2, B, A, pair(x, y), Var("T2"))]
    return spec


def codes(diagnostics):
    return [d.code for d in diagnostics]


def test_valid_spec_has_no_diagnostics():
    assert validate(two_step_spec()) == []


def test_empty_spec():
    assert codes(validate(ProtocolSpec())) == ["E_EMPTY"]


def test_undeclared_party_in_step():
    spec = two_step_spec()
    spec.steps[1] = Step(2, PartyId("Z"), A, x, Var("T2"))
    assert "E_UNDECLARED_PARTY" in codes(validate(spec))


def test_step_order_and_time_reuse():
    spec = two_step_spec()
    spec.steps[1] = Step(3, B, A, x, Var("T1"))
    found = codes(validate(spec))
    assert "E_STEP_ORDER" in found
    assert "E_TIME_REUSE" in found


def test_self_send():
    spec = two_step_spec()
    spec.steps[0] = Step(1, A, A, x, Var("T1"))
    assert "E_SELF_SEND" in codes(validate(spec))


def test_sender_must_be_able_to_build_message():
    spec = two_step_spec()
    spec.initial_knowledge = {"A": [], "B": []}
    found = validate(spec)
    assert codes(found) == ["E_UNDERIVABLE"]
    assert found[0].step == 1


def test_fresh_value_cannot_be_known_already():
    spec = two_step_spec()
    spec.initial_knowledge["B"] = [y]
    assert "E_FRESH_REUSE" in codes(validate(spec))


def test_timeout_must_follow_own_step():
    spec = two_step_spec()
    spec.timeouts = {"B": Timeout(B, 1, DelaySym("tB", "waiting_time"), 2)}
    assert "E_TIMEOUT" in codes(validate(spec))
    spec.timeouts = {"A": Timeout(A, 2, DelaySym("tA", "waiting_time"), 2)}
    assert "E_TIMEOUT" in codes(validate(spec))


def test_channel_to_trusted_party_must_be_recoverable():
    spec = two_step_spec()
    spec.parties.append(PartyId("N", is_ttp=True))
    spec.channels = {("A", "N"): "unreliable"}
    assert "E_CHANNEL" in codes(validate(spec))


def test_run_accumulates_possessions():
    result = run(two_step_spec(), RunConfig(2))
    assert possession_at(result.timelines, "B", "T1") == frozenset({x})
    assert pair(x, y) in possession_at(result.timelines, "A", "Te")
    assert [entry.sender_rule for entry in result.trace] == ["held", "generated"]
    assert [entry.receiver_rule for entry in result.trace] == ["added", "added"]
    assert Le(Var("T2"), Var("Te")) in result.system.atoms


def test_possession_never_shrinks_along_a_timeline():
    result = run(two_step_spec(), RunConfig(2))
    entries = result.timelines["B"].entries
    for (_, before), (_, after) in zip(entries, entries[1:]):
        assert before <= after


def test_truncated_run_stops_early():
    result = run(two_step_spec(), RunConfig(1))
    assert len(result.trace) == 1
    assert y not in possession_at(result.timelines, "B", "Te")


def test_unknown_time_label():
    result = run(two_step_spec(), RunConfig(1))
    with pytest.raises(AnalysisError) as err:
        possession_at(result.timelines, "A", "T2")
    assert err.value.code == "E_UNKNOWN_TIME"


def test_bad_config_is_rejected():
    with pytest.raises(AnalysisError) as err:
        run(two_step_spec(), RunConfig(5))
    assert err.value.code == "E_BAD_CONFIG"
    with pytest.raises(AnalysisError):
        run(two_step_spec(), RunConfig(1, frozenset({"A"})))


def test_netbill_terminal_states(netbill):
    spec = netbill.spec
    states = terminal_states(spec)
    assert sorted({s.truncate_after for s in states}) == [0, 1, 2, 3, 4, 5, 7, 8]
    assert RunConfig(7, frozenset({"C"})) in states
    assert RunConfig(8, frozenset({"C"})) not in states
    assert len(states) == 10


def test_netbill_timeout_eligibility(netbill):
    spec = netbill.spec
    assert can_fire(spec, "C", 5)
    assert can_fire(spec, "C", 7)
    assert not can_fire(spec, "C", 8)
    assert not can_fire(spec, "M", 7)


def test_netbill_full_run_delivers_evidence(netbill):
    result = run(netbill.spec, full_config(netbill.spec))
    released = sign(KeyMsg(session_key("k")), PartyId("N", is_ttp=True))
    assert Knowledge(possession_at(result.timelines, "M", "T7")).can_derive(released)
    assert not Knowledge(possession_at(result.timelines, "C", "T7")).can_derive(released)
    assert Knowledge(possession_at(result.timelines, "C", "Te")).can_derive(Atom("Goods"))


def test_waiting_condition_and_bindings(netbill):
    spec = netbill.spec
    low, high = waiting_condition(spec, spec.timeouts["C"])
    assert low == Le(Var("T5"), Var("T7"))
    assert high == Le(Var("T7"), plus(Var("T5"), DelaySym("tC")))
    assert waiting_bindings(spec, spec.timeouts["C"]) == [
        Eq(Var("T7"), plus(Var("T5"), DelaySym("t5"), DelaySym("t6")))
    ]


def test_netbill_timing_system(netbill):
    spec = netbill.spec
    full = timing_system(spec, full_config(spec))
    low, high = waiting_condition(spec, spec.timeouts["C"])
    assert entails(full, low)
    assert not entails(full, high)
    _, m_high = waiting_condition(spec, spec.timeouts["M"])
    assert entails(full, m_high)
    fired = timing_system(spec, RunConfig(7, frozenset({"C"})))
    ok, model = is_satisfiable(fired)
    assert ok
    assert model["t5"] + model["t6"] > model["tC"]


def test_fixed_netbill_rules_out_customer_timeout(netbill_fixed):
    spec = netbill_fixed.spec
    assert not satisfiable_any(timing_system(spec, RunConfig(7, frozenset({"C"}))))[0]


def test_config_pins_override_spec_pins(netbill):
    spec = netbill.spec
    config = RunConfig(8, delay_pins=(("tC", Fraction(3)),))
    assert timing_system(spec, config).pins["tC"] == 3


def test_terminal_state_count_matches_enumeration(netbill):
    assert set(terminal_states(netbill.spec)) == set(enumerate_truncations(netbill.spec))
    rng = random.Random(5)
    for _ in range(25):
        spec = random_spec(rng, steps=rng.randint(1, 5), timeouts=rng.randint(0, 2), parties=rng.randint(2, 4))
        assert validate(spec) == []
        states, enumerated = terminal_states(spec), enumerate_truncations(spec)
        assert len(states) == len(enumerated)
        assert set(states) == set(enumerated)


def test_run_properties_on_generated_protocols():
    rng = random.Random(17)
    for _ in range(200):
        spec = random_spec(rng, steps=rng.randint(1, 6), timeouts=rng.randint(0, 2), parties=rng.randint(2, 4))
        for config in terminal_states(spec):
            result = run(spec, config)
            plain = run(spec, RunConfig(config.truncate_after))
            for name, timeline in result.timelines.items():
                entries = timeline.entries[:-1]
                for (_, before), (_, after) in zip(entries, entries[1:]):
                    assert before <= after
                if name in config.timeout_fired:
                    assert timeline.terminal == frozenset(spec.initial_knowledge.get(name, ()))
                else:
                    assert timeline.terminal == plain.timelines[name].terminal
            for index, fresh in spec.fresh_decls.items():
                if index > config.truncate_after:
                    continue
                before = spec.step_time(index - 1).name
                for name in result.timelines:
                    held = possession_at(result.timelines, name, before)
                    assert not set(fresh) & held


def test_receiving_a_held_message_changes_nothing():
    spec = two_step_spec()
    spec.initial_knowledge["B"] = [x]
    result = run(spec, RunConfig(1))
    assert result.trace[0].receiver_rule == "no-op"
    assert possession_at(result.timelines, "B", "T1") == possession_at(result.timelines, "B", "T0")


def test_generated_protocols_relay_protected_messages_among_several_parties():
    rng = random.Random(23)
    seen_parties, seen_keys = set(), set()
    for _ in range(60):
        spec = random_spec(rng, steps=rng.randint(2, 6), timeouts=rng.randint(0, 3), parties=rng.randint(2, 4))
        assert validate(spec) == []
        seen_parties.add(len({p for step in spec.steps for p in (step.sender.name, step.receiver.name)}))
        seen_keys.update(step.msg.key.kind for step in spec.steps if isinstance(step.msg, Enc))
        final = run(spec, full_config(spec)).timelines
        for step in spec.steps:
            fresh = spec.fresh_decls[step.index][0]
            assert Knowledge(final[step.receiver.name].terminal).can_derive(fresh)
    assert {3, 4} <= seen_parties
    assert seen_keys == {"shared", "private", "public"}
