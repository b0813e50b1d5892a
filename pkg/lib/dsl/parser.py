"""ply.yacc grammar for .ppl protocol descriptions.

Statements end with ';'. A malformed statement produces a positioned
diagnostic and parsing resumes after its ';' through the grammar's error
production. Semantic problems (undeclared names, duplicates, bad scopes)
are reported from the productions and do not stop the parse.
"""

import logging
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

from ply import yacc

from core.errors import AnalysisError, Diagnostic, has_errors
from core.formulas import Dual, Possesses, PubKeyOf, Received, Sent, SharedKeyOf, conj, can_prove, metavars
from core.messages import (
    Atom,
    Enc,
    Hash,
    KeyMsg,
    KeyTerm,
    MetaVar,
    PartyId,
    pair,
    private_key,
    public_key,
    session_key,
    shared_key,
)
from core.timing import Const, DelaySym, Eq, Le, MaxOf, ScopedTime, Var, plus
from dsl.lexer import Lexer
from services.logic import Rule, check_rule
from services.protocol import (
    EvidenceItem,
    EvidenceSpec,
    ProtocolSpec,
    Step,
    SufficiencyGoal,
    Timeout,
    validate,
)

logger = logging.getLogger(__name__)

Position = Tuple[int, int]

_DESCRIBED = {"IDENT": "a name", "METAVAR": "a metavariable", "NUMBER": "a number", "$end": "end of input"}
_MAX_EXPECTED = 5


@dataclass
class SourceFile:
    path: str
    text: str

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SourceFile":
        return cls(str(path), Path(path).read_text(encoding="utf-8"))


@dataclass
class ParseResult:
    spec: ProtocolSpec
    evidence: EvidenceSpec
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not has_errors(self.diagnostics)


def _describe_token(kind: str) -> str:
    if kind in _DESCRIBED:
        return _DESCRIBED[kind]
    if kind in Lexer.reserved.values():
        return f"'{kind.lower()}'"
    literal = getattr(Lexer, "t_" + kind).replace("\\", "")
    return f"'{literal}'"


def _one_of(options: List[str]) -> str:
    if len(options) == 1:
        return options[0]
    return ", ".join(options[:-1]) + " or " + options[-1]


class Parser:
    """Declarations collected while the grammar reduces one source file."""

    def __init__(self, source: SourceFile) -> None:
        self.source = source
        self.lexer = Lexer()
        self.tokens = self.lexer.tokenize(source.text)
        self.spec = ProtocolSpec()
        self.evidence = EvidenceSpec()
        self.diagnostics: List[Diagnostic] = list(self.lexer.errors)
        self._auto_times = 0

    def parse(self) -> ParseResult:
        if not self.tokens:
            self.diagnostics.append(Diagnostic(code="E_EMPTY", message="no declarations found", line=1, column=1))
            return ParseResult(self.spec, self.evidence, self.diagnostics)
        stream = iter(self.tokens)
        grammar = _grammar()
        with _LOCK:
            grammar.out = self
            try:
                grammar.lr.parse(lexer=self.lexer.lexer, tokenfunc=lambda: next(stream, None), tracking=True)
            finally:
                grammar.out = None
        if not has_errors(self.diagnostics):
            self.diagnostics.extend(validate(self.spec))
        return ParseResult(self.spec, self.evidence, self.diagnostics)

    # ---- reporting ----

    def where(self, p, n: int) -> Position:
        return p.lineno(n), self.lexer.column(p.lexpos(n))

    def end_of_input(self) -> Position:
        text = self.source.text
        return text.count("\n") + 1, len(text) - text.rfind("\n")

    def report(self, code: str, message: str, at: Position) -> None:
        line, column = at
        self.diagnostics.append(Diagnostic(code=code, message=message, line=line, column=column))

    def syntax_error(self, tok, expected: List[str]) -> None:
        if tok is None:
            found, at = "end of input", self.end_of_input()
        else:
            found, at = repr(tok.value), (tok.lineno, self.lexer.column(tok.lexpos))
        message = f"unexpected {found}"
        if expected and len(expected) <= _MAX_EXPECTED:
            message += f", expected {_one_of(expected)}"
        self.report("E_SYNTAX", message, at)

    # ---- names ----

    def party(self, name: str, at: Position) -> PartyId:
        declared = self.spec.party(name)
        if declared is None:
            self.report("E_UNDECLARED_PARTY", f"party {name} is not declared", at)
            return PartyId(name)
        return declared

    def add_party(self, name: str, is_ttp: bool, at: Position) -> None:
        if self.spec.party(name) is not None:
            self.report("E_DUPLICATE_PARTY", f"party {name} declared twice", at)
            return
        self.spec.parties.append(PartyId(name, is_ttp))

    def key(self, name: str, at: Position):
        if name not in self.spec.keys:
            self.report("E_UNDECLARED_KEY", f"key {name} is not declared", at)
            return session_key(name)
        return self.spec.keys[name]

    def add_key(self, name: str, key, at: Position) -> None:
        if name in self.spec.keys:
            self.report("E_DUPLICATE_KEY", f"key {name} declared twice", at)
            return
        self.spec.keys[name] = key

    # ---- values ----

    def integer(self, text: str, at: Position) -> int:
        value = Fraction(text)
        if value.denominator != 1:
            self.report("E_SYNTAX", "step numbers are integers", at)
        return int(value)

    def auto_time(self) -> MetaVar:
        self._auto_times += 1
        return MetaVar(f"_T{self._auto_times}")

    def time_sum(self, terms: List[Any], at: Position):
        if len(terms) == 1:
            return terms[0]
        bases = [t for t in terms if not isinstance(t, (DelaySym, Const))]
        if len(bases) > 1:
            self.report("E_SYNTAX", "a time sum may contain at most one time variable", at)
            return bases[0]
        base = bases[0] if bases else Const(Fraction(0))
        rest = [t for t in terms if t is not base]
        try:
            return plus(base, *rest)
        except ValueError as exc:
            self.report("E_SYNTAX", str(exc), at)
            return base

    def assumption(self, name: str, premises: List[Any], conclusion, sides: List[Tuple[str, Any]], at: Position) -> None:
        counterparts = tuple(value for kind, value in sides if kind == "counterpart")
        atoms = tuple(value for kind, value in sides if kind == "atom")
        bound = set(metavars(tuple(premises)))
        fresh = tuple(var for var in _scoped_vars(conclusion) if var not in bound)
        rule = Rule(name, tuple(premises), conclusion, atoms, fresh, counterparts, kind="assumption")
        try:
            check_rule(rule)
        except AnalysisError as exc:
            self.report(exc.code, exc.message, at)
            return
        self.spec.assumptions.append(rule)


class Grammar:
    """LALR productions; each parse points `out` at the Parser collecting its results."""

    tokens = Lexer.tokens

    def __init__(self) -> None:
        self.out: Optional[Parser] = None
        self.lr = None

    def p_spec(self, p):
        "spec : statements"
        p[0] = self.out.spec

    def p_statements(self, p):
        """statements : statements statement
                      | statement"""

    def p_statement(self, p):
        "statement : declaration SEMI"

    def p_statement_error(self, p):
        "statement : error SEMI"

    # ---- declarations ----

    def p_declaration_protocol(self, p):
        "declaration : PROTOCOL IDENT"
        self.out.spec.name = p[2]

    def p_declaration_party(self, p):
        """declaration : PARTY names
                       | TTP names"""
        for name, at in p[2]:
            self.out.add_party(name, p[1] == "ttp", at)

    def p_names(self, p):
        """names : names COMMA IDENT
                 | IDENT"""
        if len(p) == 2:
            p[0] = [(p[1], self.out.where(p, 1))]
        else:
            p[0] = p[1] + [(p[3], self.out.where(p, 3))]

    def p_declaration_pubkey(self, p):
        "declaration : PUBKEY IDENT OF party"
        self.out.add_key(p[2], public_key(p[4]), self.out.where(p, 2))

    def p_declaration_sharedkey(self, p):
        "declaration : SHAREDKEY IDENT BETWEEN party party"
        self.out.add_key(p[2], shared_key(p[2], p[4].name, p[5].name), self.out.where(p, 2))

    def p_declaration_sessionkey(self, p):
        "declaration : SESSIONKEY names"
        for name, at in p[2]:
            self.out.add_key(name, session_key(name), at)

    def p_declaration_know(self, p):
        "declaration : KNOW party COLON messages"
        held = self.out.spec.initial_knowledge.setdefault(p[2].name, [])
        held.extend(m for m in p[4] if m not in held)

    def p_declaration_believes(self, p):
        "declaration : BELIEVES party COLON beliefs"
        self.out.spec.beliefs.setdefault(p[2].name, []).extend(p[4])

    def p_beliefs(self, p):
        """beliefs : beliefs COMMA key_belief
                   | key_belief"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_declaration_counterpart(self, p):
        "declaration : COUNTERPART party party"
        a, b = p[2].name, p[3].name
        self.out.spec.counterparts[a] = b
        self.out.spec.counterparts.setdefault(b, a)

    def p_declaration_channel(self, p):
        """declaration : CHANNEL party party RECOVERABLE
                       | CHANNEL party party UNRELIABLE"""
        self.out.spec.channels[tuple(sorted((p[2].name, p[3].name)))] = p[4]

    def p_declaration_fresh(self, p):
        "declaration : FRESH messages AT STEP NUMBER"
        index = self.out.integer(p[5], self.out.where(p, 5))
        fresh = self.out.spec.fresh_decls.setdefault(index, [])
        fresh.extend(m for m in p[2] if m not in fresh)

    def p_declaration_step(self, p):
        "declaration : NUMBER DOT party ARROW party COLON message ATSIGN IDENT"
        index = self.out.integer(p[1], self.out.where(p, 1))
        if not p[9][:1].isupper():
            self.out.report("E_SYNTAX", f"step time {p[9]} must be a time variable (capitalized)", self.out.where(p, 9))
            return
        self.out.spec.steps.append(Step(index, p[3], p[5], p[7], Var(p[9]), line=p.lineno(1)))

    def p_declaration_timeout(self, p):
        "declaration : TIMEOUT party WAITS IDENT AFTER STEP NUMBER EXPECTING STEP NUMBER"
        after = self.out.integer(p[7], self.out.where(p, 7))
        reply = self.out.integer(p[10], self.out.where(p, 10))
        self.out.spec.timeouts[p[2].name] = Timeout(p[2], after, DelaySym(p[4], "waiting_time"), reply)

    def p_declaration_assume(self, p):
        """declaration : ASSUME IDENT COLON conjuncts IMPLIES conjunct
                       | ASSUME IDENT COLON conjuncts IMPLIES conjunct WHERE sides"""
        sides = p[8] if len(p) == 9 else []
        self.out.assumption(p[2], p[4], p[6], sides, self.out.where(p, 1))

    def p_sides(self, p):
        """sides : sides AND side
                 | side"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_side_counterpart(self, p):
        "side : METAVAR COUNTERPART METAVAR"
        p[0] = ("counterpart", (p[1], p[3]))

    def p_side_atom(self, p):
        "side : atom"
        p[0] = ("atom", p[1])

    def p_declaration_evidence(self, p):
        "declaration : EVIDENCE IDENT HELD_BY party EQ message"
        self.out.evidence.items.append(EvidenceItem(p[2], p[4], p[6]))

    def p_declaration_item(self, p):
        "declaration : ITEM message HELD_BY party"
        self.out.evidence.exchanged.append((p[2], p[4]))

    def p_declaration_goal(self, p):
        "declaration : GOAL SUFFICIENCY IDENT COLON formula"
        self.out.evidence.goals.append(SufficiencyGoal(p[3], p[5]))

    def p_declaration_constraint(self, p):
        "declaration : CONSTRAINT atom"
        self.out.spec.constraints.append(p[2])

    def p_declaration_pin(self, p):
        "declaration : PIN IDENT EQ NUMBER"
        self.out.spec.pins[p[2]] = Fraction(p[4])

    # ---- parties and keys ----

    def p_party_metavar(self, p):
        "party : METAVAR"
        p[0] = MetaVar(p[1])

    def p_party_name(self, p):
        "party : IDENT"
        p[0] = self.out.party(p[1], self.out.where(p, 1))

    def p_key_metavar(self, p):
        "key : METAVAR"
        p[0] = MetaVar(p[1])

    def p_key_alias(self, p):
        "key : IDENT"
        p[0] = self.out.key(p[1], self.out.where(p, 1))

    def p_key_function(self, p):
        "key : key_function"
        p[0] = p[1]

    def p_key_function_pk(self, p):
        "key_function : PK LPAREN party RPAREN"
        p[0] = public_key(p[3])

    def p_key_function_inv(self, p):
        "key_function : INV LPAREN key RPAREN"
        inner = p[3]
        if isinstance(inner, KeyTerm) and inner.kind == "public":
            p[0] = private_key(inner.owner)
        elif isinstance(inner, KeyTerm) and inner.kind == "private":
            p[0] = public_key(inner.owner)
        else:
            self.out.report("E_SYNTAX", "inv() applies to public or private keys only", self.out.where(p, 1))
            p[0] = inner

    def p_key_function_dual(self, p):
        "key_function : DUAL LPAREN key RPAREN"
        p[0] = Dual(p[3])

    def p_key_belief_pubkey(self, p):
        "key_belief : PUBKEY key OF party"
        p[0] = PubKeyOf(p[2], p[4])

    def p_key_belief_shared(self, p):
        "key_belief : SHARED key BETWEEN party party"
        p[0] = SharedKeyOf(p[2], p[4], p[5])

    # ---- messages ----

    def p_messages(self, p):
        """messages : messages COMMA message
                    | message"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_message_metavar(self, p):
        "message : METAVAR"
        p[0] = MetaVar(p[1])

    def p_message_name(self, p):
        "message : IDENT"
        keys = self.out.spec.keys
        p[0] = KeyMsg(keys[p[1]]) if p[1] in keys else Atom(p[1])

    def p_message_pair(self, p):
        "message : PAIR LPAREN messages RPAREN"
        if len(p[3]) < 2:
            self.out.report("E_SYNTAX", "pair needs at least two components", self.out.where(p, 1))
            p[0] = p[3][0]
        else:
            p[0] = pair(*p[3])

    def p_message_enc(self, p):
        "message : ENC LPAREN message COMMA key RPAREN"
        p[0] = Enc(p[3], p[5])

    def p_message_sign(self, p):
        "message : SIGN LPAREN message COMMA party RPAREN"
        p[0] = Enc(p[3], private_key(p[5]))

    def p_message_hash(self, p):
        "message : HASH LPAREN message RPAREN"
        p[0] = Hash(p[3])

    def p_message_key(self, p):
        """message : KEY LPAREN key RPAREN
                   | key_function"""
        p[0] = KeyMsg(p[3] if len(p) == 5 else p[1])

    # ---- formulas ----

    def p_formula(self, p):
        "formula : conjuncts"
        p[0] = p[1][0] if len(p[1]) == 1 else conj(*p[1])

    def p_conjuncts(self, p):
        """conjuncts : conjuncts AND conjunct
                     | conjunct"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_conjunct_group(self, p):
        "conjunct : LPAREN formula RPAREN"
        p[0] = p[2]

    def p_conjunct_belief(self, p):
        "conjunct : key_belief"
        p[0] = p[1]

    def p_conjunct_proves(self, p):
        "conjunct : party PROVES conjunct"
        p[0] = can_prove(p[1], p[3])

    def p_conjunct_event(self, p):
        """conjunct : party SENT message time_opt
                    | party HAS message time_opt
                    | party RECEIVED message time_opt"""
        kind = {"sent": Sent, "has": Possesses, "received": Received}[p[2]]
        p[0] = kind(p[1], p[3], p[4])

    def p_time_opt(self, p):
        """time_opt : AT time
                    | empty"""
        p[0] = p[2] if len(p) == 3 else self.out.auto_time()

    def p_empty(self, p):
        "empty :"

    # ---- times ----

    def p_time(self, p):
        "time : terms"
        p[0] = self.out.time_sum(p[1], self.out.where(p, 1))

    def p_terms(self, p):
        """terms : terms PLUS time_term
                 | time_term"""
        p[0] = [p[1]] if len(p) == 2 else p[1] + [p[3]]

    def p_time_term_number(self, p):
        "time_term : NUMBER"
        p[0] = Const(Fraction(p[1]))

    def p_time_term_metavar(self, p):
        "time_term : METAVAR"
        p[0] = MetaVar(p[1])

    def p_time_term_name(self, p):
        "time_term : IDENT"
        p[0] = Var(p[1]) if p[1][:1].isupper() else DelaySym(p[1])

    def p_time_term_max(self, p):
        "time_term : MAX LPAREN time COMMA time RPAREN"
        p[0] = MaxOf(p[3], p[5])

    def p_time_term_scoped(self, p):
        "time_term : scoped"
        p[0] = p[1]

    def p_scoped_singleton(self, p):
        "scoped : LBRACKET NUMBER RBRACKET"
        value = Fraction(p[2])
        p[0] = ScopedTime(Var(f"T{value}"), value=value)

    def p_scoped_open(self, p):
        "scoped : LBRACKET scope_var RBRACKET"
        p[0] = ScopedTime(p[2])

    def p_scoped_bounded(self, p):
        "scoped : LBRACKET scope_var BAR scope_var comparison time RBRACKET"
        var = p[2]
        if p[4] != var:
            self.out.report("E_SCOPE", "scope condition must constrain the scoped variable", self.out.where(p, 1))
        elif p[5] != "<=":
            self.out.report("E_SCOPE", "only [X | X <= T] scopes are supported", self.out.where(p, 1))
        p[0] = ScopedTime(var, p[6])

    def p_scope_var_metavar(self, p):
        "scope_var : METAVAR"
        p[0] = MetaVar(p[1])

    def p_scope_var_name(self, p):
        "scope_var : IDENT"
        if not p[1][:1].isupper():
            self.out.report("E_SCOPE", f"{p[1]} is not a time variable", self.out.where(p, 1))
        p[0] = Var(p[1])

    def p_comparison(self, p):
        """comparison : LE
                      | LT
                      | EQ"""
        p[0] = p[1]

    def p_atom(self, p):
        "atom : time comparison time"
        if p[2] == "=":
            p[0] = Eq(p[1], p[3])
        else:
            p[0] = Le(p[1], p[3], strict=p[2] == "<")

    def p_error(self, tok):
        state = self.lr.statestack[-1]
        expected = sorted(kind for kind in self.lr.action[state] if kind != "error")
        self.out.syntax_error(tok, [_describe_token(kind) for kind in expected])


_LOCK = threading.Lock()


@lru_cache(maxsize=None)
def _grammar() -> Grammar:
    grammar = Grammar()
    grammar.lr = yacc.yacc(
        module=grammar,
        start="spec",
        debug=False,
        write_tables=False,
        errorlog=yacc.NullLogger(),
    )
    return grammar


def _scoped_vars(t) -> List[str]:
    found: List[str] = []

    def visit(node):
        if isinstance(node, ScopedTime) and isinstance(node.var, MetaVar):
            found.append(node.var.name)
        if isinstance(node, tuple):
            for item in node:
                visit(item)
        elif hasattr(node, "__dataclass_fields__"):
            for name in node.__dataclass_fields__:
                visit(getattr(node, name))

    visit(t)
    return found


def parse(source: Union[SourceFile, str]) -> ParseResult:
    """Parse a protocol description into a ProtocolSpec and EvidenceSpec."""
    if isinstance(source, str):
        source = SourceFile("<string>", source)
    result = Parser(source).parse()
    logger.debug("parsed %s: %d diagnostics", source.path, len(result.diagnostics))
    return result
