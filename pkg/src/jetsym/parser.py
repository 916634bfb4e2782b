"""Recursive-descent parser for the expression grammar.

Grammar (whitespace insignificant, identifiers ASCII):

    expr     := ('+'|'-')? term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := base ('^' exponent)?
    exponent := rational | '(' rational ')'        (rational literal, signed)
    base     := NUMBER | IDENT | FUNC '(' expr ')'
              | 'diff' '(' IDENT (',' IDENT ',' NUMBER)+ ')'
              | '(' expr ')'

Identifiers resolve against a symbol table; jet shorthand (``u_x``,
``u_xy``, ``diff(u,x,2)``) is handled by the table, not the parser.
"""
from __future__ import annotations

from fractions import Fraction

from .errors import ExprSyntaxError, UnknownFunctionError, UnknownSymbolError
from .expr import Expr, Sym, add, call, const, mul, neg, pow_

_FUNCS = ("exp", "log", "sin", "cos", "tan", "sqrt")


class SymbolTable:
    """Flat table of declared symbol names (no jet structure)."""

    def __init__(self, names):
        self._names = set(names)

    def resolve_symbol(self, name: str) -> Expr:
        if name not in self._names:
            raise UnknownSymbolError(name)
        return Sym(name)

    def resolve_diff(self, name: str, pairs):
        raise UnknownSymbolError(f"diff({name},...)")


class _Tok:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind, value, pos):
        self.kind = kind
        self.value = value
        self.pos = pos


def _tokenize(text: str):
    toks = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    seen_dot = True
                j += 1
            toks.append(_Tok("num", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("ident", text[i:j], i))
            i = j
            continue
        if ch in "+-*/^(),":
            toks.append(_Tok(ch, ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    toks.append(_Tok("end", "", n))
    return toks


class _Parser:
    def __init__(self, toks, table):
        self.toks = toks
        self.i = 0
        self.table = table

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind):
        t = self.next()
        if t.kind != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {t.value!r}", t.pos)
        return t

    def parse_expr(self) -> Expr:
        sign = 1
        if self.peek().kind in ("+", "-"):
            if self.next().kind == "-":
                sign = -1
        e = self.parse_term()
        if sign < 0:
            e = neg(e)
        terms = [e]
        while self.peek().kind in ("+", "-"):
            op = self.next().kind
            t = self.parse_term()
            terms.append(t if op == "+" else neg(t))
        return add(*terms)

    def parse_term(self) -> Expr:
        factors = [self.parse_factor()]
        while self.peek().kind in ("*", "/"):
            op = self.next().kind
            f = self.parse_factor()
            factors.append(f if op == "*" else pow_(f, -1))
        return mul(*factors)

    def parse_factor(self) -> Expr:
        b = self.parse_base()
        if self.peek().kind == "^":
            self.next()
            q = self.parse_exponent()
            return pow_(b, q)
        return b

    def parse_exponent(self) -> Fraction:
        # a/b rationals only inside parentheses: x^2/2 is (x^2)/2
        paren = self.peek().kind == "("
        if paren:
            self.next()
        sign = 1
        if self.peek().kind in ("+", "-"):
            if self.next().kind == "-":
                sign = -1
        num = self.expect("num")
        q = Fraction(num.value)
        if paren and self.peek().kind == "/":
            self.next()
            den = self.expect("num")
            q /= Fraction(den.value)
        if paren:
            self.expect(")")
        return sign * q

    def parse_base(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            return const(Fraction(t.value))
        if t.kind == "(":
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            if t.value == "diff":
                return self.parse_diff(t)
            if self.peek().kind == "(":
                if t.value not in _FUNCS:
                    raise UnknownFunctionError(t.value, t.pos)
                self.next()
                arg = self.parse_expr()
                self.expect(")")
                return call(t.value, arg)
            try:
                return self.table.resolve_symbol(t.value)
            except UnknownSymbolError as exc:
                raise UnknownSymbolError(t.value, t.pos) from exc
        raise ExprSyntaxError(f"unexpected token {t.value!r}", t.pos)

    def parse_diff(self, t0) -> Expr:
        self.expect("(")
        dep = self.expect("ident").value
        pairs = []
        while self.peek().kind == ",":
            self.next()
            var = self.expect("ident").value
            self.expect(",")
            cnt = self.expect("num")
            if "." in cnt.value:
                raise ExprSyntaxError("derivative count must be a natural number", cnt.pos)
            pairs.append((var, int(cnt.value)))
        self.expect(")")
        if not pairs:
            raise ExprSyntaxError("diff needs at least one (variable, count) pair", t0.pos)
        try:
            return self.table.resolve_diff(dep, tuple(pairs))
        except UnknownSymbolError as exc:
            raise UnknownSymbolError(str(exc), t0.pos) from exc


def parse(text: str, table) -> Expr:
    """Parse ``text`` against a symbol table and return a canonical Expr."""
    p = _Parser(_tokenize(text), table)
    e = p.parse_expr()
    end = p.next()
    if end.kind != "end":
        raise ExprSyntaxError(f"trailing input {end.value!r}", end.pos)
    return e
