import random

import pytest

from core.formulas import CanProve, Possesses, Sent
from core.messages import Atom, MetaVar
from core.timing import ScopedTime, Var
from dsl import SourceFile, parse, spec_to_text
from dsl.lexer import Lexer
from oracle.generate import random_spec

HEADER = "protocol P;\nparty A, B;\n"


def codes(result):
    return [d.code for d in result.diagnostics]


def test_lexer_marks_reserved_words_and_metavars():
    tokens = Lexer().tokenize("assume T1: ?A proves N sent key(?k) at ?T;")
    types = [t.type for t in tokens]
    assert types[:4] == ["ASSUME", "IDENT", "COLON", "METAVAR"]
    assert tokens[3].value == "A"


def test_lexer_reports_bad_characters():
    lexer = Lexer()
    lexer.tokenize("party A $;")
    (diag,) = lexer.errors
    assert (diag.code, diag.line, diag.column) == ("E_SYNTAX", 1, 9)


def test_netbill_parses(netbill):
    spec, evidence = netbill.spec, netbill.evidence
    assert spec.name == "NetBill"
    assert [p.name for p in spec.parties] == ["C", "M", "N"]
    assert spec.ttps == {"N"}
    assert len(spec.steps) == 8
    assert [rule.name for rule in spec.assumptions] == ["T1", "T1", "T2", "T2"]
    assert spec.counterparts == {"C": "M", "M": "C"}
    assert set(spec.timeouts) == {"C", "M"}
    assert [item.name for item in evidence.items] == ["EOO", "EOR"]
    assert evidence.exchanged == [(Atom("Goods"), spec.party("C"))]


def test_goal_without_time_gets_metavariable(netbill):
    goal = netbill.evidence.goals[0].formula
    assert isinstance(goal, CanProve)
    assert isinstance(goal.body, Sent)
    assert isinstance(goal.body.at, MetaVar)


def test_source_file_load(netbill_path):
    source = SourceFile.load(netbill_path)
    assert source.path == str(netbill_path)
    assert parse(source).ok


def test_empty_input():
    result = parse("# nothing here\n")
    assert codes(result) == ["E_EMPTY"]
    assert not result.ok


def test_syntax_error_position():
    result = parse("protocol P;\nparty A B;\n")
    (diag,) = result.diagnostics
    assert diag.code == "E_SYNTAX"
    assert (diag.line, diag.column) == (2, 9)
    assert "';'" in diag.message


def test_error_at_end_of_input():
    result = parse("protocol P")
    assert codes(result) == ["E_SYNTAX"]
    assert "end of input" in result.diagnostics[0].message


def test_parser_recovers_after_bad_statement():
    result = parse(HEADER + "bogus stuff;\nknow A: x;\n1. A -> B : x @ T1;\n")
    assert codes(result) == ["E_SYNTAX"]
    assert result.diagnostics[0].line == 3
    assert len(result.spec.steps) == 1


def test_undeclared_names():
    assert codes(parse(HEADER + "know Z: x;\n")) == ["E_UNDECLARED_PARTY"]
    assert codes(parse(HEADER + "know A: enc(x, Kab);\n")) == ["E_UNDECLARED_KEY"]


def test_duplicate_declarations():
    assert "E_DUPLICATE_PARTY" in codes(parse(HEADER + "party A;\n"))
    assert "E_DUPLICATE_KEY" in codes(parse(HEADER + "sessionkey k;\nsessionkey k;\n"))


def test_scoped_times():
    result = parse(HEADER + "goal sufficiency E: A proves B has x at [Ty | Ty <= Te];\n")
    at = result.evidence.goals[0].formula.body.at
    assert at == ScopedTime(Var("Ty"), bound=Var("Te"))
    result = parse(HEADER + "goal sufficiency E: A has x at [5];\n")
    assert isinstance(result.evidence.goals[0].formula, Possesses)


@pytest.mark.parametrize(
    "scope",
    ["[Ty | Tz <= Te]", "[Ty | Ty < Te]", "[t5]"],
)
def test_bad_scopes(scope):
    result = parse(HEADER + f"goal sufficiency E: A has x at {scope};\n")
    assert codes(result) == ["E_SCOPE"]


def test_step_time_must_be_capitalized():
    result = parse(HEADER + "know A: x;\n1. A -> B : x @ t1;\n")
    assert codes(result) == ["E_SYNTAX"]


def test_assumption_fresh_times_come_from_conclusion():
    result = parse(
        HEADER
        + "assume R: ?A proves ?B has ?m at ?T => ?A proves ?B sent ?m at [?S | ?S <= ?T];\n"
    )
    (rule,) = result.spec.assumptions
    assert rule.fresh == ("S",)


def test_validation_runs_after_clean_parse():
    result = parse(HEADER + "1. A -> B : x @ T1;\n")
    assert codes(result) == ["E_UNDERIVABLE"]


BASE = "protocol P;\nparty A, B;\nttp N;\nknow A: x;\n1. A -> B : x @ T1;\n"

ACCEPTED = [
    "protocol Q;",
    "party D;",
    "ttp S;",
    "pubkey Ka of A;",
    "sharedkey Kab between A B;",
    "sessionkey k1, k2;",
    "know B: y, pk(A);",
    "believes A: pubkey pk(N) of N;",
    "sharedkey Kab between A B;\nbelieves A: shared Kab between A B, pubkey pk(B) of B;",
    "counterpart A B;",
    "channel A N recoverable;",
    "channel A B unreliable;",
    "fresh z at step 1;",
    "2. B -> A : hash(x) @ T2;",
    "2. B -> A : x @ T2;\ntimeout A waits tA after step 1 expecting step 2;",
    "assume R: ?A proves ?B sent hash(?m) at ?T => ?A proves ?B sent ?m at ?T;",
    "assume R: ?A proves N sent ?m at ?T => ?A proves ?B sent ?m at ?T where ?B counterpart ?A;",
    "assume R: ?A has ?m at ?T => ?A has ?m at ?T + 1 where ?T <= 4;",
    "evidence E held_by B = x;",
    "item x held_by B;",
    "goal sufficiency E: B proves A sent x;",
    "goal sufficiency E: B proves (A sent x at T1 and B received x at max(T1, 2));",
    "constraint t1 <= 5;",
    "constraint T1 + t1 = 3;",
    "pin t1 = 3/2;",
]

REJECTED = [
    ("protocol;", "E_SYNTAX"),
    ("party ;", "E_SYNTAX"),
    ("ttp N;", "E_DUPLICATE_PARTY"),
    ("pubkey Ka of Z;", "E_UNDECLARED_PARTY"),
    ("sharedkey Kab between A;", "E_SYNTAX"),
    ("sessionkey k, k;", "E_DUPLICATE_KEY"),
    ("know Z: x;", "E_UNDECLARED_PARTY"),
    ("believes A: pubkey Kz of N;", "E_UNDECLARED_KEY"),
    ("counterpart A;", "E_SYNTAX"),
    ("channel A N lossy;", "E_SYNTAX"),
    ("channel A N unreliable;", "E_CHANNEL"),
    ("fresh z at step one;", "E_SYNTAX"),
    ("fresh x at step 1;", "E_FRESH_REUSE"),
    ("2. B -> A : x @ t2;", "E_SYNTAX"),
    ("2. B -> A : x @ T1;", "E_TIME_REUSE"),
    ("2. A -> A : x @ T2;", "E_SELF_SEND"),
    ("3. B -> A : x @ T3;", "E_STEP_ORDER"),
    ("2. B -> A : y @ T2;", "E_UNDERIVABLE"),
    ("timeout A waits tA after 1 expecting step 2;", "E_SYNTAX"),
    ("timeout A waits tA after step 1 expecting step 3;", "E_TIMEOUT"),
    ("assume R: ?A has ?m => ?A sent ?n;", "E_UNBOUND_METAVAR"),
    ("assume R: ?A has ?m at ?T => ?A sent ?m at ?T where ?A counterpart;", "E_SYNTAX"),
    ("evidence E held_by B x;", "E_SYNTAX"),
    ("item x held_by Z;", "E_UNDECLARED_PARTY"),
    ("goal E: B has x;", "E_SYNTAX"),
    ("constraint T1 + T2 <= T3;", "E_SYNTAX"),
    ("constraint t1 <=;", "E_SYNTAX"),
    ("pin t1 = x;", "E_SYNTAX"),
]


@pytest.mark.parametrize("snippet", ACCEPTED)
def test_each_declaration_form_is_accepted(snippet):
    result = parse(BASE + snippet + "\n")
    assert result.ok
    assert codes(result) == []


@pytest.mark.parametrize("snippet, code", REJECTED)
def test_each_declaration_form_rejects_bad_input(snippet, code):
    result = parse(BASE + snippet + "\n")
    assert codes(result) == [code]


def test_syntax_errors_list_the_expected_tokens():
    (diag,) = parse(BASE + "channel A N lossy;\n").diagnostics
    assert diag.message == "unexpected 'lossy', expected 'recoverable' or 'unreliable'"
    assert (diag.line, diag.column) == (6, 13)


def test_printed_netbill_parses_back_to_the_same_text(netbill):
    text = spec_to_text(netbill.spec, netbill.evidence)
    again = parse(text)
    assert again.ok
    assert spec_to_text(again.spec, again.evidence) == text
    assert again.spec.steps == netbill.spec.steps
    assert again.spec.timeouts == netbill.spec.timeouts
    assert again.spec.assumptions == netbill.spec.assumptions


def test_printed_random_specs_parse_back():
    rng = random.Random(13)
    for _ in range(100):
        spec = random_spec(rng, steps=rng.randint(1, 6), timeouts=rng.randint(0, 2), parties=rng.randint(2, 4))
        result = parse(spec_to_text(spec))
        assert result.ok, result.diagnostics
        assert result.spec.steps == spec.steps
        assert result.spec.timeouts == spec.timeouts
        assert result.spec.fresh_decls == spec.fresh_decls
        assert result.spec.keys == spec.keys
        assert result.spec.initial_knowledge == spec.initial_knowledge
