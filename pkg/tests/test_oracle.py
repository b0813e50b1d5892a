import random
from fractions import Fraction

import pytest

from core.messages import Atom, Enc, Hash, KeyMsg, PartyId, pair, private_key, public_key, session_key
from core.timing import ConstraintSystem, Const, DelaySym, Le, plus
from oracle import (
    GridSpec,
    bf_closure,
    bf_derivable,
    bf_entails,
    bf_fairness,
    bf_sat,
    bf_timed_refutation,
    enumerate_truncations,
)
from oracle.brute_force import MUTANT, mutate_derivation
from oracle.generate import random_message, random_spec, random_system
from services.logic import FACT, Derivation
from services.protocol import RunConfig, full_config, timing_system, waiting_condition

N = PartyId("N", is_ttp=True)
a, b = Atom("a"), Atom("b")
k = session_key("k")

SMALL = GridSpec((), high=Fraction(3))


def test_closure_examples():
    assert bf_closure([pair(a, b)]) == {pair(a, b), a, b}
    assert a in bf_closure([Enc(a, private_key(N)), KeyMsg(public_key(N))])
    assert a not in bf_closure([Enc(a, k)])


def test_derivable_builds_but_cannot_invert_hashes():
    assert bf_derivable(Hash(pair(a, b)), [a, b])
    assert bf_derivable(Enc(a, k), [a, KeyMsg(k)])
    assert not bf_derivable(a, [Hash(a)])
    assert not bf_derivable(Enc(a, k), [a])


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(("x",), step=Fraction(0))
    with pytest.raises(ValueError):
        GridSpec(("x",), low=Fraction(2), high=Fraction(1))
    assert GridSpec(("x",), high=Fraction(1), step=Fraction(1, 2)).points() == [0, Fraction(1, 2), 1]


def test_grid_sat_and_entailment():
    d0, d1 = DelaySym("d0"), DelaySym("d1")
    zero = Const(Fraction(0))
    grid = GridSpec(("d0", "d1"), high=Fraction(2))
    contradiction = ConstraintSystem.of([Le(plus(zero, d0), plus(zero, d1), strict=True), Le(plus(zero, d1), plus(zero, d0))])
    assert bf_sat(contradiction, grid) is None
    ordered = ConstraintSystem.of([Le(plus(zero, d0), plus(zero, d1))])
    assert bf_entails(ordered, Le(plus(zero, d0), plus(zero, d1)), grid)
    assert not bf_entails(ConstraintSystem(), Le(plus(zero, d0), plus(zero, d1)), grid)


def test_random_generators_are_reproducible():
    assert random_message(random.Random(1), 3) == random_message(random.Random(1), 3)
    first = random_system(random.Random(2), variables=2, bound=3, atoms=2)
    assert first == random_system(random.Random(2), variables=2, bound=3, atoms=2)


def test_enumeration_of_a_short_run():
    spec = random_spec(random.Random(4), steps=2, timeouts=0)
    assert set(enumerate_truncations(spec)) == {RunConfig(0), RunConfig(1), RunConfig(2)}


def test_netbill_fairness_oracle(netbill):
    configs = {config for config, _ in bf_fairness(netbill.spec, netbill.evidence, SMALL)}
    assert RunConfig(7, frozenset({"C"})) in configs
    assert RunConfig(7) in configs


def test_fixed_netbill_oracle_never_lets_customer_time_out_unfairly(netbill_fixed):
    found = bf_fairness(netbill_fixed.spec, netbill_fixed.evidence, SMALL)
    assert found
    assert all("C" not in config.timeout_fired for config, _ in found)


def test_mutations_change_the_derivation():
    leaf = Derivation(a, FACT)
    d = Derivation(b, "R", (leaf, Derivation(Hash(a), FACT)), (("m", a),))
    rng = random.Random(0)
    for _ in range(20):
        mutant = mutate_derivation(d, rng)
        assert mutant != d
    assert Derivation(MUTANT, FACT) != leaf


def test_waiting_conditions_refuted_on_the_delay_grid(netbill, netbill_fixed):
    spec = netbill.spec
    sys = timing_system(spec, full_config(spec))
    low, high = waiting_condition(spec, spec.timeouts["C"])
    model = bf_timed_refutation(sys, high, SMALL)
    assert model is not None
    assert model["t5"] + model["t6"] > model["tC"]
    assert bf_timed_refutation(sys, low, SMALL) is None
    for atom in waiting_condition(spec, spec.timeouts["M"]):
        assert bf_timed_refutation(sys, atom, SMALL) is None
    fixed = netbill_fixed.spec
    fixed_sys = timing_system(fixed, full_config(fixed))
    for atom in waiting_condition(fixed, fixed.timeouts["C"]):
        assert bf_timed_refutation(fixed_sys, atom, SMALL) is None
