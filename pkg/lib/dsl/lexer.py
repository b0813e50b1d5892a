"""Tokenizer for .ppl protocol descriptions, built on ply.lex."""

from typing import List

from ply import lex

from core.errors import Diagnostic


class Lexer:
    reserved = {
        "protocol": "PROTOCOL",
        "party": "PARTY",
        "ttp": "TTP",
        "pubkey": "PUBKEY",
        "sharedkey": "SHAREDKEY",
        "sessionkey": "SESSIONKEY",
        "between": "BETWEEN",
        "of": "OF",
        "know": "KNOW",
        "believes": "BELIEVES",
        "counterpart": "COUNTERPART",
        "channel": "CHANNEL",
        "recoverable": "RECOVERABLE",
        "unreliable": "UNRELIABLE",
        "fresh": "FRESH",
        "at": "AT",
        "step": "STEP",
        "timeout": "TIMEOUT",
        "waits": "WAITS",
        "after": "AFTER",
        "expecting": "EXPECTING",
        "assume": "ASSUME",
        "where": "WHERE",
        "evidence": "EVIDENCE",
        "held_by": "HELD_BY",
        "item": "ITEM",
        "goal": "GOAL",
        "sufficiency": "SUFFICIENCY",
        "constraint": "CONSTRAINT",
        "pin": "PIN",
        "proves": "PROVES",
        "sent": "SENT",
        "has": "HAS",
        "received": "RECEIVED",
        "shared": "SHARED",
        "and": "AND",
        "pair": "PAIR",
        "enc": "ENC",
        "sign": "SIGN",
        "hash": "HASH",
        "key": "KEY",
        "pk": "PK",
        "inv": "INV",
        "max": "MAX",
        "dual": "DUAL",
    }

    tokens = [
        "IDENT",
        "METAVAR",
        "NUMBER",
        "ARROW",
        "IMPLIES",
        "LE",
        "LT",
        "EQ",
        "PLUS",
        "LPAREN",
        "RPAREN",
        "LBRACKET",
        "RBRACKET",
        "BAR",
        "COMMA",
        "SEMI",
        "COLON",
        "DOT",
        "ATSIGN",
    ] + list(reserved.values())

    t_ARROW = r"->"
    t_IMPLIES = r"=>"
    t_LE = r"<="
    t_LT = r"<"
    t_EQ = r"="
    t_PLUS = r"\+"
    t_LPAREN = r"\("
    t_RPAREN = r"\)"
    t_LBRACKET = r"\["
    t_RBRACKET = r"\]"
    t_BAR = r"\|"
    t_COMMA = r","
    t_SEMI = r";"
    t_COLON = r":"
    t_DOT = r"\."
    t_ATSIGN = r"@"

    t_ignore = " \t\r"

    def t_COMMENT(self, t):
        r"\#[^\n]*"

    def t_newline(self, t):
        r"\n+"
        t.lexer.lineno += len(t.value)

    def t_METAVAR(self, t):
        r"\?[A-Za-z_][A-Za-z0-9_]*"
        t.value = t.value[1:]
        return t

    def t_NUMBER(self, t):
        r"\d+(/\d+)?"
        return t

    def t_IDENT(self, t):
        r"[A-Za-z_][A-Za-z0-9_]*"
        t.type = self.reserved.get(t.value, "IDENT")
        return t

    def t_error(self, t):
        self.errors.append(self._diagnostic(t, f"unexpected character {t.value[0]!r}"))
        t.lexer.skip(1)

    def __init__(self) -> None:
        self.errors: List[Diagnostic] = []
        self.text = ""
        self.lexer = lex.lex(module=self, errorlog=lex.NullLogger())

    def column(self, lexpos: int) -> int:
        return lexpos - self.text.rfind("\n", 0, lexpos)

    def _diagnostic(self, t, message: str) -> Diagnostic:
        return Diagnostic(code="E_SYNTAX", message=message, line=t.lineno, column=self.column(t.lexpos))

    def tokenize(self, text: str) -> List[lex.LexToken]:
        self.text = text
        self.errors = []
        self.lexer.lineno = 1
        self.lexer.input(text)
        return list(iter(self.lexer.token, None))
