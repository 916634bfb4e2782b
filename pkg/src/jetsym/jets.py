"""Jet-space coordinate bookkeeping.

A :class:`JetSpace` owns the coordinates (x^i, u^a, u^a_J) of the k-th
order jet bundle over n independent and m dependent variables.  Jet
coordinates are first-class symbols keyed by (dependent index,
multi-index), so restriction to solution manifolds is plain symbol
substitution.  Multi-indices are plain tuples of naturals; symmetry of
mixed partials is enforced by the indexing, never by string names.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

from .errors import OrderOverflowError, UnknownSymbolError
from .expr import ZERO, Expr, Sym, add, mul, neg, partial
from .parser import parse

MultiIndex = tuple  # length-n tuple of naturals


def mi_zero(n: int) -> MultiIndex:
    return (0,) * n


def mi_order(J: MultiIndex) -> int:
    return sum(J)


def mi_add(J: MultiIndex, i: int) -> MultiIndex:
    return tuple(j + (1 if k == i else 0) for k, j in enumerate(J))


def mi_sub(J: MultiIndex, i: int) -> MultiIndex:
    return tuple(j - (1 if k == i else 0) for k, j in enumerate(J))


def mi_le(J: MultiIndex, K: MultiIndex) -> bool:
    return all(j <= k for j, k in zip(J, K))


def mi_diff(J: MultiIndex, K: MultiIndex) -> MultiIndex:
    return tuple(j - k for j, k in zip(J, K))


def multi_indices(n: int, order: int):
    """All multi-indices over n directions with |J| == order."""
    out = []
    for combo in combinations_with_replacement(range(n), order):
        J = [0] * n
        for i in combo:
            J[i] += 1
        out.append(tuple(J))
    return sorted(set(out))


class JetSpace:
    """Coordinates of J^k M for M = B x U, plus named scalar parameters."""

    def __init__(self, independent, dependent, max_order, parameters=()):
        self.independent = tuple(independent)
        self.dependent = tuple(dependent)
        self.max_order = int(max_order)
        self.parameters = tuple(parameters)
        if self.n < 1 or self.m < 1 or self.max_order < 0:
            raise ValueError("need n >= 1, m >= 1, max_order >= 0")
        names = self.independent + self.dependent + self.parameters
        if len(set(names)) != len(names):
            raise ValueError("coordinate/parameter names must be unique")
        for nm in names:
            if not nm.isidentifier() or "_" in nm:
                raise ValueError(f"invalid base name {nm!r} (ASCII, no underscore)")
        self._syms: dict[str, Expr] = {nm: Sym(nm) for nm in names}
        self._jets: dict[tuple[int, MultiIndex], Expr] = {}
        self._jet_info: dict[str, tuple[int, MultiIndex]] = {}
        for a, u in enumerate(self.dependent):
            self._jets[(a, mi_zero(self.n))] = self._syms[u]
            self._jet_info[u] = (a, mi_zero(self.n))
        for order in range(1, self.max_order + 1):
            for J in multi_indices(self.n, order):
                for a in range(self.m):
                    nm = self.jet_name(a, J)
                    s = Sym(nm)
                    self._syms[nm] = s
                    self._jets[(a, J)] = s
                    self._jet_info[nm] = (a, J)

    @property
    def n(self) -> int:
        return len(self.independent)

    @property
    def m(self) -> int:
        return len(self.dependent)

    def __eq__(self, other):
        return (
            isinstance(other, JetSpace)
            and self.independent == other.independent
            and self.dependent == other.dependent
            and self.max_order == other.max_order
            and self.parameters == other.parameters
        )

    def __hash__(self):
        return hash((self.independent, self.dependent, self.max_order, self.parameters))

    def __repr__(self):
        return (
            f"JetSpace(independent={self.independent}, dependent={self.dependent}, "
            f"max_order={self.max_order})"
        )

    def jet_name(self, a: int, J: MultiIndex) -> str:
        if mi_order(J) == 0:
            return self.dependent[a]
        suffix = "".join(self.independent[i] * J[i] for i in range(self.n))
        return f"{self.dependent[a]}_{suffix}"

    def x(self, i: int) -> Expr:
        return self._syms[self.independent[i]]

    def u(self, a: int) -> Expr:
        return self._syms[self.dependent[a]]

    def param(self, name: str) -> Expr:
        if name not in self.parameters:
            raise UnknownSymbolError(name)
        return self._syms[name]

    def jet(self, a: int, J) -> Expr:
        J = tuple(J)
        try:
            return self._jets[(a, J)]
        except KeyError:
            raise OrderOverflowError(mi_order(J), self.max_order) from None

    def jets_up_to(self, order: int):
        """All (a, J, symbol) with 1 <= |J| <= order, by order then index."""
        for q in range(1, order + 1):
            for J in multi_indices(self.n, q):
                for a in range(self.m):
                    yield a, J, self._jets[(a, J)]

    def jet_index(self, name: str):
        return self._jet_info.get(name)

    def jet_order(self, e: Expr) -> int:
        """Highest jet order among the free symbols of ``e`` (0 if none)."""
        q = 0
        for nm in e.free_symbols:
            info = self._jet_info.get(nm)
            if info is not None:
                q = max(q, mi_order(info[1]))
        return q

    def is_base(self, e: Expr) -> bool:
        """True iff ``e`` uses only (x, u) coordinates and parameters."""
        return self.jet_order(e) == 0

    def extended(self, max_order: int) -> "JetSpace":
        return JetSpace(self.independent, self.dependent, max_order, self.parameters)

    # parser hooks -----------------------------------------------------
    def resolve_symbol(self, name: str) -> Expr:
        s = self._syms.get(name)
        if s is not None:
            return s
        if "_" in name:
            base, suffix = name.split("_", 1)
            if base in self.dependent and all(len(v) == 1 for v in self.independent):
                J = [0] * self.n
                for ch in suffix:
                    try:
                        J[self.independent.index(ch)] += 1
                    except ValueError:
                        raise UnknownSymbolError(name) from None
                if sum(J) > self.max_order:
                    raise OrderOverflowError(sum(J), self.max_order)
                return self.jet(self.dependent.index(base), tuple(J))
        raise UnknownSymbolError(name)

    def resolve_diff(self, dep: str, pairs) -> Expr:
        if dep not in self.dependent:
            raise UnknownSymbolError(dep)
        J = [0] * self.n
        for var, cnt in pairs:
            if var not in self.independent:
                raise UnknownSymbolError(var)
            J[self.independent.index(var)] += cnt
        if sum(J) > self.max_order:
            raise OrderOverflowError(sum(J), self.max_order)
        return self.jet(self.dependent.index(dep), tuple(J))

    def parse(self, text: str) -> Expr:
        return parse(text, self)

    # total derivatives ------------------------------------------------
    def total_derivative(self, e: Expr, i: int) -> Expr:
        """D_i e = d_i e + sum over jets of u^a_{J,i} * de/du^a_J."""
        terms = [partial(e, self.independent[i])]
        for nm in e.free_symbols:
            info = self._jet_info.get(nm)
            if info is None:
                continue
            a, J = info
            de = partial(e, nm)
            if de.is_zero:
                continue
            Ji = mi_add(J, i)
            if mi_order(Ji) > self.max_order:
                raise OrderOverflowError(mi_order(Ji), self.max_order)
            terms.append(mul(self._jets[(a, Ji)], de))
        return add(*terms)

    def total_derivative_multi(self, e: Expr, J) -> Expr:
        """Iterated D_i along nondecreasing directions of the multi-index."""
        for i, cnt in enumerate(J):
            for _ in range(cnt):
                e = self.total_derivative(e, i)
        return e

    # convenience aliases
    D = total_derivative
    Dmulti = total_derivative_multi


def total_derivative(e: Expr, i: int, space: JetSpace) -> Expr:
    return space.total_derivative(e, i)


def total_derivative_multi(e: Expr, J, space: JetSpace) -> Expr:
    return space.total_derivative_multi(e, J)


@dataclass(frozen=True)
class ContactForm:
    """omega^a_J = du^a_J - u^a_{J,i} dx^i, encoded by its coefficients."""

    a: int
    J: MultiIndex
    dx_coeffs: tuple  # coefficient of dx^i, i.e. -u^a_{J,i}

    def name(self, space: JetSpace) -> str:
        return f"omega[{space.jet_name(self.a, self.J)}]"


def _contact_form_indices(space: JetSpace):
    if space.max_order < 1:
        return []
    zero = mi_zero(space.n)
    idx = [(a, zero) for a in range(space.m)]
    idx.extend((a, J) for a, J, _s in space.jets_up_to(space.max_order - 1))
    return idx


def contact_forms(space: JetSpace):
    """All contact forms omega^a_J with |J| < max_order."""
    return [
        ContactForm(a, J, tuple(neg(space.jet(a, mi_add(J, i))) for i in range(space.n)))
        for a, J in _contact_form_indices(space)
    ]


def annihilates_contact(V, space: JetSpace):
    """Residuals of the contact-preservation test for a field on J^k M.

    For each contact form omega the Lie derivative along V is expanded in
    the basis (dx^i, du^b_K) and reduced modulo the span of the contact
    forms; the returned expressions (structural zeros dropped) all vanish
    exactly when V preserves the contact structure.
    """
    k = space.max_order
    residuals = []
    zero = mi_zero(space.n)
    all_jets = [(a, zero) for a in range(space.m)] + [
        (a, J) for a, J, _s in space.jets_up_to(k)
    ]
    for a, J in _contact_form_indices(space):
        inner = add(
            V.coefficient(a, J),
            *[neg(mul(space.jet(a, mi_add(J, i)), V.xi[i])) for i in range(space.n)],
        )
        # du^b_K coefficients of L_V omega
        B = {}
        for b, K in all_jets:
            c = partial(inner, space.jet_name(b, K))
            if b == a and mi_order(K) == mi_order(J) + 1 and mi_le(J, K):
                i = mi_diff(K, J).index(1)
                c = add(c, V.xi[i])
            if not c.is_zero:
                B[(b, K)] = c
        # dx^i coefficients after substituting du^b_K -> omega^b_K + u^b_{K,i} dx^i
        for i in range(space.n):
            corr = [
                mul(c, space.jet(b, mi_add(K, i)))
                for (b, K), c in B.items()
                if mi_order(K) < k
            ]
            residuals.append(
                add(
                    partial(inner, space.independent[i]),
                    neg(V.coefficient(a, mi_add(J, i))),
                    *corr,
                )
            )
        # top-order du coefficients have no contact form to absorb them
        for (b, K), c in B.items():
            if mi_order(K) == k:
                residuals.append(c)
    return [r for r in residuals if not r.is_zero]
