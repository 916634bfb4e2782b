"""Immutable symbolic expression kernel.

Expression trees over named symbols with exact rational constants, a
whitelisted set of elementary functions, exact partial differentiation,
substitution and light canonicalization (flattening, constant folding,
like-term/like-power collection, exponential merging).  Semantic equality
is decided numerically by the oracle module, never by simplification.

All nodes must be built through the smart constructors (``const``, ``sym``,
``add``, ``mul``, ``pow_``, ``call``); trees built that way are canonical
by construction.
"""
from __future__ import annotations

import math
import zlib
from fractions import Fraction

import numpy as np

from .errors import DomainEvalError, UnboundSymbolError, UnknownFunctionError

Q = Fraction
_Q0 = Q(0)
_Q1 = Q(1)

FUNCTIONS = ("exp", "log", "sin", "cos", "tan")

_MASK = (1 << 64) - 1
_PHI = 0x9E3779B97F4A7C15


def _mix(*parts: int) -> int:
    """Stable 64-bit hash combiner (independent of PYTHONHASHSEED)."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h ^= p & _MASK
        h = (h * _PHI) & _MASK
        h ^= h >> 29
    return h


def _shs(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


class Expr:
    """Base class of immutable expression nodes."""

    __slots__ = ("shash", "free_symbols", "_key")
    rank = -1

    def __hash__(self):
        return self.shash

    # arithmetic sugar; always routes through the smart constructors
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, pow_(other, -1))

    def __rtruediv__(self, other):
        return mul(other, pow_(self, -1))

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_str(self)

    def __repr__(self):
        return f"Expr({to_str(self)})"

    def sort_key(self):
        k = self._key
        if k is None:
            k = self._make_key()
            object.__setattr__(self, "_key", k)
        return k

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0

    @property
    def is_one(self) -> bool:
        return isinstance(self, Const) and self.value == 1


class Const(Expr):
    __slots__ = ("value",)
    rank = 0

    def __init__(self, value):
        v = value if isinstance(value, Q) else Q(value)
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "shash", _mix(0, v.numerator, v.denominator))
        object.__setattr__(self, "free_symbols", frozenset())
        object.__setattr__(self, "_key", None)

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (0, self.value.numerator, self.value.denominator)


class Sym(Expr):
    __slots__ = ("name",)
    rank = 1

    def __init__(self, name):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "shash", _mix(1, _shs(name)))
        object.__setattr__(self, "free_symbols", frozenset((name,)))
        object.__setattr__(self, "_key", None)

    def __eq__(self, other):
        return isinstance(other, Sym) and self.name == other.name

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (1, self.name)


class Pow(Expr):
    __slots__ = ("base", "exponent")
    rank = 2

    def __init__(self, base, exponent: Q):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", exponent)
        object.__setattr__(
            self, "shash", _mix(2, base.shash, exponent.numerator, exponent.denominator)
        )
        object.__setattr__(self, "free_symbols", base.free_symbols)
        object.__setattr__(self, "_key", None)

    def __eq__(self, other):
        return (
            isinstance(other, Pow)
            and self.exponent == other.exponent
            and self.base == other.base
        )

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (2, self.base.sort_key(), self.exponent.numerator, self.exponent.denominator)


class Call(Expr):
    __slots__ = ("fn", "arg")
    rank = 3

    def __init__(self, fn, arg):
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "arg", arg)
        object.__setattr__(self, "shash", _mix(3, _shs(fn), arg.shash))
        object.__setattr__(self, "free_symbols", arg.free_symbols)
        object.__setattr__(self, "_key", None)

    def __eq__(self, other):
        return isinstance(other, Call) and self.fn == other.fn and self.arg == other.arg

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (3, self.fn, self.arg.sort_key())


class Prod(Expr):
    __slots__ = ("factors",)
    rank = 4

    def __init__(self, factors):
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "shash", _mix(4, *(f.shash for f in factors)))
        fs = frozenset().union(*(f.free_symbols for f in factors))
        object.__setattr__(self, "free_symbols", fs)
        object.__setattr__(self, "_key", None)

    def __eq__(self, other):
        return (
            isinstance(other, Prod)
            and self.shash == other.shash
            and self.factors == other.factors
        )

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (4, len(self.factors)) + tuple(f.sort_key() for f in self.factors)


class Sum(Expr):
    __slots__ = ("terms",)
    rank = 5

    def __init__(self, terms):
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "shash", _mix(5, *(t.shash for t in terms)))
        fs = frozenset().union(*(t.free_symbols for t in terms))
        object.__setattr__(self, "free_symbols", fs)
        object.__setattr__(self, "_key", None)

    def __eq__(self, other):
        return (
            isinstance(other, Sum)
            and self.shash == other.shash
            and self.terms == other.terms
        )

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (5, len(self.terms)) + tuple(t.sort_key() for t in self.terms)


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Q)):
        return Const(Q(x))
    raise TypeError(f"cannot coerce {x!r} to Expr")


def const(v) -> Const:
    return Const(Q(v))


def sym(name: str) -> Sym:
    return Sym(name)


def _coeff_split(t: Expr):
    """Split a canonical non-constant term into (rational coefficient, rest)."""
    if isinstance(t, Prod) and isinstance(t.factors[0], Const):
        rest = t.factors[1:]
        return t.factors[0].value, rest[0] if len(rest) == 1 else Prod(rest)
    return _Q1, t


def _attach_coeff(c: Q, rest: Expr) -> Expr:
    if c == 1:
        return rest
    if isinstance(rest, Prod):
        return Prod((Const(c),) + rest.factors)
    return Prod((Const(c), rest))


def add(*terms) -> Expr:
    acc: dict[Expr, Q] = {}
    c = _Q0
    for t in terms:
        t = _as_expr(t)
        parts = t.terms if isinstance(t, Sum) else (t,)
        for p in parts:
            if isinstance(p, Const):
                c += p.value
            else:
                coef, rest = _coeff_split(p)
                acc[rest] = acc.get(rest, _Q0) + coef
    out = [_attach_coeff(k, rest) for rest, k in acc.items() if k != 0]
    out.sort(key=Expr.sort_key)
    if c != 0:
        out.append(Const(c))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Sum(tuple(out))


def mul(*factors) -> Expr:
    c = _Q1
    pows: dict[Expr, Q] = {}
    exp_args: list[Expr] = []
    sums: list[Sum] = []
    stack = [_as_expr(f) for f in factors]
    while stack:
        f = stack.pop()
        if isinstance(f, Const):
            c *= f.value
        elif isinstance(f, Prod):
            stack.extend(f.factors)
        elif isinstance(f, Call) and f.fn == "exp":
            exp_args.append(f.arg)
        elif isinstance(f, Pow):
            pows[f.base] = pows.get(f.base, _Q0) + f.exponent
        else:
            pows[f] = pows.get(f, _Q0) + _Q1
    if c == 0:
        return ZERO
    out, requeue = [], []
    for b, q in pows.items():
        if q == 0:
            continue
        r = b if q == 1 else pow_(b, q)
        if isinstance(r, Sum):
            sums.append(r)
        elif isinstance(r, (Const, Prod)) or (isinstance(r, Call) and r.fn == "exp"):
            requeue.append(r)
        else:
            out.append(r)
    if requeue:
        rest = [Call("exp", a) for a in exp_args]
        return mul(Const(c), *out, *requeue, *sums, *rest)
    if exp_args:
        s = add(*exp_args)
        if not s.is_zero:
            out.append(Call("exp", s))
    out.sort(key=Expr.sort_key)
    if not out:
        atom = Const(c)
    else:
        if c != 1:
            out.insert(0, Const(c))
        atom = out[0] if len(out) == 1 else Prod(tuple(out))
    if not sums:
        return atom
    # distribute over sum factors so that subtractions cancel structurally
    terms = [atom]
    for s in sums:
        terms = [mul(t, p) for t in terms for p in s.terms]
    return add(*terms)


def _iroot(n: int, r: int):
    """Exact integer r-th root of n >= 0, or None."""
    if n == 0:
        return 0
    x = round(n ** (1.0 / r))
    for cand in (x - 1, x, x + 1):
        if cand >= 0 and cand**r == n:
            return cand
    return None


def _const_pow(v: Q, q: Q):
    """v**q when the result is exactly rational, else None."""
    try:
        w = v**q.numerator
    except ZeroDivisionError:
        return None
    r = q.denominator
    if r == 1:
        return w
    if w < 0 and r % 2 == 0:
        return None
    sign = -1 if w < 0 else 1
    rn = _iroot(abs(w.numerator), r)
    rd = _iroot(w.denominator, r)
    if rn is None or rd is None:
        return None
    return Q(sign * rn, rd)


def pow_(base, exponent) -> Expr:
    b = _as_expr(base)
    q = exponent if isinstance(exponent, Q) else Q(exponent)
    if q == 0:
        return ONE
    if q == 1:
        return b
    if isinstance(b, Const):
        r = _const_pow(b.value, q)
        return Const(r) if r is not None else Pow(b, q)
    if isinstance(b, Pow) and q.denominator == 1:
        return pow_(b.base, b.exponent * q)
    if isinstance(b, Call) and b.fn == "exp":
        return call("exp", mul(Const(q), b.arg))
    if isinstance(b, Prod) and q.denominator == 1:
        return mul(*[pow_(f, q) for f in b.factors])
    return Pow(b, q)


def call(fn: str, arg) -> Expr:
    a = _as_expr(arg)
    if fn == "sqrt":
        return pow_(a, Q(1, 2))
    if fn not in FUNCTIONS:
        raise UnknownFunctionError(fn)
    if isinstance(a, Const):
        v = a.value
        if fn == "exp" and v == 0:
            return ONE
        if fn == "log" and v == 1:
            return ZERO
        if fn in ("sin", "tan") and v == 0:
            return ZERO
        if fn == "cos" and v == 0:
            return ONE
    if fn == "log" and isinstance(a, Call) and a.fn == "exp":
        return a.arg
    return Call(fn, a)


def neg(e) -> Expr:
    return mul(MINUS_ONE, e)


def sub(a, b) -> Expr:
    return add(a, neg(b))


def div(a, b) -> Expr:
    return mul(a, pow_(b, -1))


def canon(e: Expr) -> Expr:
    """Rebuild a tree bottom-up through the smart constructors."""
    if isinstance(e, (Const, Sym)):
        return e
    if isinstance(e, Sum):
        return add(*[canon(t) for t in e.terms])
    if isinstance(e, Prod):
        return mul(*[canon(f) for f in e.factors])
    if isinstance(e, Pow):
        return pow_(canon(e.base), e.exponent)
    if isinstance(e, Call):
        return call(e.fn, canon(e.arg))
    raise TypeError(type(e))


def partial(e: Expr, name: str) -> Expr:
    """Exact partial derivative treating all other symbols as independent."""
    memo: dict[int, Expr] = {}

    def d(t: Expr) -> Expr:
        if name not in t.free_symbols:
            return ZERO
        r = memo.get(id(t))
        if r is not None:
            return r
        if isinstance(t, Sym):
            r = ONE
        elif isinstance(t, Sum):
            r = add(*[d(x) for x in t.terms])
        elif isinstance(t, Prod):
            fs = t.factors
            r = add(
                *[
                    mul(*fs[:i], d(fs[i]), *fs[i + 1 :])
                    for i in range(len(fs))
                    if name in fs[i].free_symbols
                ]
            )
        elif isinstance(t, Pow):
            r = mul(Const(t.exponent), pow_(t.base, t.exponent - 1), d(t.base))
        elif isinstance(t, Call):
            da = d(t.arg)
            if t.fn == "exp":
                r = mul(t, da)
            elif t.fn == "log":
                r = mul(pow_(t.arg, -1), da)
            elif t.fn == "sin":
                r = mul(call("cos", t.arg), da)
            elif t.fn == "cos":
                r = mul(MINUS_ONE, call("sin", t.arg), da)
            else:  # tan
                r = mul(add(ONE, pow_(t, 2)), da)
        else:
            raise TypeError(type(t))
        memo[id(t)] = r
        return r

    return d(e)


def substitute(e: Expr, bindings: dict[str, Expr]) -> Expr:
    """Simultaneous (non-iterated) substitution followed by canonicalization."""
    if not bindings:
        return e
    names = frozenset(bindings)
    memo: dict[int, Expr] = {}

    def s(t: Expr) -> Expr:
        if names.isdisjoint(t.free_symbols):
            return t
        r = memo.get(id(t))
        if r is not None:
            return r
        if isinstance(t, Sym):
            r = _as_expr(bindings[t.name])
        elif isinstance(t, Sum):
            r = add(*[s(x) for x in t.terms])
        elif isinstance(t, Prod):
            r = mul(*[s(x) for x in t.factors])
        elif isinstance(t, Pow):
            r = pow_(s(t.base), t.exponent)
        elif isinstance(t, Call):
            r = call(t.fn, s(t.arg))
        else:
            raise TypeError(type(t))
        memo[id(t)] = r
        return r

    return s(e)


def evaluate(e: Expr, point, denom_floor: float = 0.0) -> float:
    """Evaluate at a point (symbol name -> float).

    Raises DomainEvalError on singular loci: log of a nonpositive value,
    fractional power of a negative base, or a negative power whose base
    is within ``denom_floor`` of zero.
    """
    memo: dict[int, float] = {}

    def ev(t: Expr) -> float:
        r = memo.get(id(t))
        if r is not None:
            return r
        if isinstance(t, Const):
            r = float(t.value)
        elif isinstance(t, Sym):
            try:
                r = float(point[t.name])
            except KeyError:
                raise UnboundSymbolError(t.name) from None
        elif isinstance(t, Sum):
            r = math.fsum(ev(x) for x in t.terms)
        elif isinstance(t, Prod):
            r = 1.0
            for x in t.factors:
                r *= ev(x)
        elif isinstance(t, Pow):
            b = ev(t.base)
            q = t.exponent
            if q < 0 and abs(b) <= denom_floor:
                raise DomainEvalError(f"near-zero base for exponent {q}")
            if q.denominator != 1 and b < 0:
                raise DomainEvalError("fractional power of negative base")
            try:
                r = b ** float(q) if q.denominator != 1 else b ** int(q)
            except (OverflowError, ZeroDivisionError) as exc:
                raise DomainEvalError(str(exc)) from None
        elif isinstance(t, Call):
            a = ev(t.arg)
            if t.fn == "exp":
                try:
                    r = math.exp(a)
                except OverflowError:
                    raise DomainEvalError("exp overflow") from None
            elif t.fn == "log":
                if a <= denom_floor:
                    raise DomainEvalError("log of nonpositive value")
                r = math.log(a)
            elif t.fn == "sin":
                r = math.sin(a)
            elif t.fn == "cos":
                r = math.cos(a)
            else:
                r = math.tan(a)
        else:
            raise TypeError(type(t))
        memo[id(t)] = r
        return r

    return ev(e)


def evaluate_many(e: Expr, arrays, size=None, denom_floor: float = 1e-6):
    """Vectorized evaluation; invalid samples come back as nan/inf.

    ``arrays`` maps symbol names to equal-length float arrays.  Domain
    failures (negative-base fractional powers, near-zero denominators,
    log of nonpositive values) are flagged by non-finite entries.
    """
    if size is None:
        size = next((len(v) for v in arrays.values()), 1)
    memo: dict[int, np.ndarray] = {}

    def ev(t: Expr):
        r = memo.get(id(t))
        if r is not None:
            return r
        if isinstance(t, Const):
            r = np.full(size, float(t.value))
        elif isinstance(t, Sym):
            try:
                r = np.asarray(arrays[t.name], dtype=float)
            except KeyError:
                raise UnboundSymbolError(t.name) from None
        elif isinstance(t, Sum):
            r = ev(t.terms[0]).copy()
            for x in t.terms[1:]:
                r += ev(x)
        elif isinstance(t, Prod):
            r = ev(t.factors[0]).copy()
            for x in t.factors[1:]:
                r *= ev(x)
        elif isinstance(t, Pow):
            b = ev(t.base)
            q = t.exponent
            if q < 0:
                b = np.where(np.abs(b) <= denom_floor, np.nan, b)
            if q.denominator == 1:
                r = b ** int(q)
            else:
                r = np.power(b, float(q))
        elif isinstance(t, Call):
            a = ev(t.arg)
            if t.fn == "exp":
                r = np.exp(a)
            elif t.fn == "log":
                r = np.log(np.where(a > 0, a, np.nan))
            elif t.fn == "sin":
                r = np.sin(a)
            elif t.fn == "cos":
                r = np.cos(a)
            else:
                r = np.tan(a)
        else:
            raise TypeError(type(t))
        memo[id(t)] = r
        return r

    with np.errstate(all="ignore"):
        return np.broadcast_to(ev(e), (size,)).astype(float, copy=False)


def _frac_str(v: Q) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _exp_str(q: Q) -> str:
    if q.denominator == 1 and q >= 0:
        return str(q.numerator)
    return f"({_frac_str(q)})"


def _base_str(b: Expr) -> str:
    if isinstance(b, (Sym, Call)):
        return to_str(b)
    if isinstance(b, Const) and b.value.denominator == 1 and b.value >= 0:
        return to_str(b)
    return f"({to_str(b)})"


def _factor_str(f: Expr) -> str:
    if isinstance(f, Sum):
        return f"({to_str(f)})"
    return to_str(f)


def to_str(e: Expr) -> str:
    """Render an expression in the grammar accepted by the parser."""
    if isinstance(e, Const):
        return _frac_str(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Pow):
        return f"{_base_str(e.base)}^{_exp_str(e.exponent)}"
    if isinstance(e, Call):
        return f"{e.fn}({to_str(e.arg)})"
    if isinstance(e, Prod):
        fs = list(e.factors)
        lead = ""
        if isinstance(fs[0], Const):
            c = fs[0].value
            fs = fs[1:]
            if c == -1:
                lead = "-"
            else:
                lead = ("-" if c < 0 else "") + _frac_str(abs(c)) + "*"
        return lead + "*".join(_factor_str(f) for f in fs)
    if isinstance(e, Sum):
        parts = []
        for t in e.terms:
            s = to_str(t)
            if parts:
                parts.append(" - " + s[1:] if s.startswith("-") else " + " + s)
            else:
                parts.append(s)
        return "".join(parts)
    raise TypeError(type(e))


def stable_hash(*items) -> int:
    """Deterministic cross-process hash of ints/strings/Exprs (for seeding)."""
    parts = []
    for it in items:
        if isinstance(it, Expr):
            parts.append(it.shash)
        elif isinstance(it, str):
            parts.append(_shs(it))
        else:
            parts.append(int(it))
    return _mix(*parts)
