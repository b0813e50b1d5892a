import random

import pytest

from core.messages import (
    Atom,
    Enc,
    Hash,
    KeyMsg,
    Knowledge,
    PartyId,
    analyze_closure,
    can_derive,
    dual_key,
    flatten_pairs,
    immediate_parts,
    pair,
    private_key,
    public_key,
    render_msg,
    session_key,
    shared_key,
    sign,
    subterms,
    term_depth,
)
from oracle.brute_force import bf_closure
from oracle.generate import random_message_set

A, B, N = PartyId("A"), PartyId("B"), PartyId("N", is_ttp=True)
a, b, m = Atom("a"), Atom("b"), Atom("m")
k = session_key("k")


def test_pair_is_right_nested():
    assert pair(a, b, m) == pair(a, pair(b, m))
    assert flatten_pairs(pair(a, b, m)) == [a, b, m]


def test_pair_needs_two_parts():
    with pytest.raises(ValueError):
        pair(a)


def test_dual_keys():
    assert dual_key(public_key(A)) == private_key(A)
    assert dual_key(private_key(A)) == public_key(A)
    assert dual_key(k) == k
    assert dual_key(shared_key("Kab", "B", "A")) == shared_key("Kab", "A", "B")


def test_closure_splits_pairs():
    closure = analyze_closure([pair(a, b)])
    assert {a, b, pair(a, b)} <= closure


def test_closure_decrypts_with_held_key():
    assert a in analyze_closure([Enc(a, k), KeyMsg(k)])
    assert a not in analyze_closure([Enc(a, k)])


def test_closure_opens_signature_with_public_key():
    closure = analyze_closure([sign(a, N), KeyMsg(public_key(N))])
    assert a in closure


def test_closure_unlocks_when_key_arrives_later_in_a_pair():
    closure = analyze_closure([Enc(a, k), pair(b, KeyMsg(k))])
    assert a in closure


def test_closure_of_empty_set():
    assert analyze_closure([]) == frozenset()


def test_cannot_forge_another_partys_signature():
    assert not can_derive([m], Enc(m, private_key(N)))


def test_can_build_hash_and_encryption():
    held = Knowledge([m, KeyMsg(k)])
    assert held.can_derive(Hash(m))
    assert held.can_derive(Enc(pair(m, Hash(m)), k))
    assert not held.can_derive(Enc(m, shared_key("Kab", "A", "B")))


def test_hash_does_not_reveal_body():
    assert not can_derive([Hash(m)], m)


def test_subterms_include_encryption_keys():
    found = subterms(Enc(pair(a, b), k))
    assert {a, b, pair(a, b), KeyMsg(k)} <= found


def test_term_depth():
    assert term_depth(a) == 1
    assert term_depth(Enc(pair(a, b), k)) == 3


def test_render_msg_uses_sugar():
    assert render_msg(sign(pair(a, b), N)) == "sign(pair(a,b),N)"
    assert render_msg(Enc(Hash(a), shared_key("Kab", "A", "B"))) == "enc(hash(a),Kab)"
    assert render_msg(KeyMsg(public_key(A))) == "pk(A)"
    assert render_msg(KeyMsg(private_key(A))) == "inv(pk(A))"


def test_closure_matches_brute_force_on_random_sets():
    rng = random.Random(7)
    for _ in range(200):
        messages = random_message_set(rng, max_size=6, depth=4)
        assert analyze_closure(messages) == frozenset(bf_closure(messages))


def test_immediate_parts_split_one_level():
    assert immediate_parts(pair(pair(a, b), m)) == {pair(a, b), m}
    assert immediate_parts(Enc(a, k)) == frozenset()
