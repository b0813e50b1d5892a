from fractions import Fraction

from core.formulas import (
    CanProve,
    Conj,
    Dual,
    Possesses,
    PubKeyOf,
    Sent,
    anonymize,
    can_prove,
    conj,
    is_ground,
    message_of,
    metavars,
    rename,
    render_notation,
    render_term,
    substitute,
    unify,
)
from core.messages import Atom, KeyMsg, MetaVar, PartyId, public_key, session_key
from core.timing import MaxOf, Plus, ScopedTime, Var, plus, DelaySym

C, M, N = PartyId("C"), PartyId("M"), PartyId("N", is_ttp=True)
goods = Atom("Goods")
k = session_key("k")


def test_conj_is_flat_and_order_insensitive():
    a, b = Sent(M, goods, Var("T1")), Possesses(C, goods, Var("T2"))
    assert conj(a, b) == conj(b, a)
    assert conj(a, conj(a, b)) == conj(a, b)
    assert conj(a) == a
    assert isinstance(conj(a, b), Conj)


def test_can_prove_collapses_same_agent_nesting():
    inner = can_prove(C, Sent(M, goods, Var("T1")))
    assert can_prove(C, inner) == inner
    assert can_prove(M, inner).body == inner


def test_metavars_in_first_occurrence_order():
    f = CanProve(MetaVar("A"), Sent(MetaVar("B"), MetaVar("m"), MetaVar("T")))
    assert metavars(f) == ["A", "B", "m", "T"]
    assert not is_ground(f)
    assert is_ground(Sent(M, goods, Var("T1")))


def test_rename_and_anonymize():
    f = Sent(MetaVar("B"), MetaVar("m"), MetaVar("T"))
    renamed = rename(f, "3")
    assert metavars(renamed) == ["B#3", "m#3", "T#3"]
    assert anonymize(renamed) == anonymize(f)


def test_unify_binds_metavars():
    pattern = CanProve(MetaVar("A"), Sent(MetaVar("B"), MetaVar("m"), MetaVar("T")))
    target = CanProve(C, Sent(M, goods, Var("T4")))
    subst = unify(pattern, target)
    assert subst == {"A": C, "B": M, "m": goods, "T": Var("T4")}
    assert substitute(pattern, subst) == target


def test_unify_rejects_mismatch_and_occurs():
    assert unify(Sent(C, goods, Var("T1")), Sent(M, goods, Var("T1"))) is None
    m = MetaVar("m")
    assert unify(m, KeyMsg(m)) is None


def test_unify_dual_against_ground_key():
    subst = unify(KeyMsg(Dual(MetaVar("k"))), KeyMsg(k))
    assert subst == {"k": k}
    pk = public_key(N)
    subst = unify(Dual(MetaVar("K")), pk)
    assert substitute(Dual(MetaVar("K")), subst) == pk


def test_substitute_unwraps_scoped_time_inside_max():
    scoped = ScopedTime(Var("Talpha"), bound=Var("Te"))
    result = substitute(MaxOf(MetaVar("Tx"), MetaVar("Ty")), {"Tx": scoped, "Ty": Var("Tbeta")})
    assert result == MaxOf(Var("Talpha"), Var("Tbeta"))


def test_substitute_rebuilds_sums():
    result = substitute(Plus(MetaVar("T"), (DelaySym("t5"),)), {"T": plus(Var("T5"), DelaySym("t6"))})
    assert result == plus(Var("T5"), DelaySym("t5"), DelaySym("t6"))


def test_message_of_looks_through_can_prove():
    assert message_of(CanProve(C, Possesses(M, goods, None))) == goods
    assert message_of(PubKeyOf(public_key(N), N)) is None


def test_render_term_and_notation():
    f = can_prove(C, Sent(M, goods, MaxOf(Var("Talpha"), Var("Tbeta"))))
    assert render_term(f) == "C proves M sent Goods at max(Talpha, Tbeta)"
    assert render_notation(f) == "C ≻ M → Goods at max(Talpha, Tbeta)"
    assert render_term(PubKeyOf(public_key(N), N)) == "pubkey pk(N) of N"
    assert render_notation(Possesses(C, goods, ScopedTime(Var("T5"), value=Fraction(5)))) == "C ∋ Goods at [5]"
