"""Prolongation engines: standard, scalar-twisted, matrix-twisted, and
collective twists of involutive field sets, plus the horizontal
zero-curvature compatibility check for matrix twists.

All engines share the recursive coefficient table construction
    psi^a_{J,i} = (D_i I + twist_i)^a_b psi^b_J - u^b_{J,l} (D_i I + twist_i)^a_b xi^l
with the twist term absent (standard), a scalar (lambda), an m x m matrix
per direction (mu), or an r x r matrix mixing the fields of a set (sigma).
Recursions follow canonical nondecreasing-direction paths.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidTwistError, MCHViolationError, OrderOverflowError
from .exprmat import bracket, mat, mat_add, mat_shape, mat_sub
from .expr import ZERO, Expr, add, mul, neg
from .jets import JetSpace, mi_add, mi_order, mi_sub, mi_zero, multi_indices


@dataclass(frozen=True)
class VectorField:
    """xi^i d/dx^i + phi^a d/du^a with coefficients on M (no jets)."""

    space: JetSpace
    xi: tuple
    phi: tuple

    def __post_init__(self):
        if len(self.xi) != self.space.n or len(self.phi) != self.space.m:
            raise ValueError("coefficient count does not match the space")
        for e in (*self.xi, *self.phi):
            if not self.space.is_base(e):
                raise ValueError(f"vector field coefficient {e} depends on jet coordinates")

    def apply(self, e: Expr) -> Expr:
        from .expr import partial

        terms = [mul(c, partial(e, s.name)) for c, s in zip(self.xi, map(self.space.x, range(self.space.n)))]
        terms += [mul(c, partial(e, s.name)) for c, s in zip(self.phi, map(self.space.u, range(self.space.m)))]
        return add(*terms)

    def is_vertical(self) -> bool:
        return all(c.is_zero for c in self.xi)

    def characteristics(self) -> tuple:
        """Q^a = phi^a - u^a_i xi^i (evolutionary characteristics, on J^1)."""
        S = self.space
        return tuple(
            add(self.phi[a], *[neg(mul(S.jet(a, mi_add(mi_zero(S.n), i)), self.xi[i])) for i in range(S.n)])
            for a in range(S.m)
        )

    def scaled(self, g: Expr) -> "VectorField":
        return VectorField(self.space, tuple(mul(g, c) for c in self.xi), tuple(mul(g, c) for c in self.phi))


def vf_commutator(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y] as a vector field on M."""
    xi = tuple(add(X.apply(Y.xi[i]), neg(Y.apply(X.xi[i]))) for i in range(X.space.n))
    phi = tuple(add(X.apply(Y.phi[a]), neg(Y.apply(X.phi[a]))) for a in range(X.space.m))
    return VectorField(X.space, xi, phi)


@dataclass(frozen=True)
class EvolutionaryField:
    """Vertical field Q^a d/du^a whose characteristics may live on J^1."""

    space: JetSpace
    Q: tuple

    def __post_init__(self):
        for e in self.Q:
            if self.space.jet_order(e) > 1:
                raise InvalidTwistError("characteristics must live on J^1")

    @property
    def xi(self):
        return (ZERO,) * self.space.n

    @property
    def phi(self):
        return self.Q

    def is_vertical(self) -> bool:
        return True


def evolutionary_representative(X: VectorField, space: JetSpace | None = None) -> EvolutionaryField:
    """Vertical representative with Q^a = phi^a - u^a_i xi^i."""
    return EvolutionaryField(X.space, X.characteristics())


@dataclass(frozen=True)
class LambdaTwist:
    expr: Expr


@dataclass(frozen=True)
class MuTwist:
    """Horizontal matrix one-form: one m x m matrix per independent variable."""

    matrices: tuple

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(mat(M) for M in self.matrices))


@dataclass(frozen=True)
class SigmaTwist:
    """r x r matrix mixing the members of a prolonged field set."""

    matrix: tuple

    def __post_init__(self):
        object.__setattr__(self, "matrix", mat(self.matrix))

    @property
    def size(self) -> int:
        return len(self.matrix)


TwistData = LambdaTwist | MuTwist | SigmaTwist | None


def _check_twist_domain(space: JetSpace, exprs) -> None:
    for e in exprs:
        if space.jet_order(e) > 1:
            raise InvalidTwistError(f"twist entry {e} depends on jets of order >= 2")


class JetField:
    """First-order differential operator on J^k M.

    Holds xi^i coefficients for the d/dx^i directions and a complete table
    psi^a_J for 0 <= |J| <= order (psi^a_0 is the d/du^a coefficient).
    Prolongation engines return these with a twist tag; commutators and
    rescalings return untagged instances.
    """

    __slots__ = ("space", "order", "xi", "psi", "twist", "base")

    def __init__(self, space, order, xi, psi, twist=None, base=None):
        self.space = space
        self.order = order
        self.xi = tuple(xi)
        self.psi = dict(psi)
        self.twist = twist
        self.base = base

    def coefficient(self, a: int, J) -> Expr:
        return self.psi.get((a, tuple(J)), ZERO)

    def coefficients(self):
        """All (label, Expr) coefficient pairs, deterministic order."""
        out = [(f"xi[{self.space.independent[i]}]", self.xi[i]) for i in range(self.space.n)]
        zero = mi_zero(self.space.n)
        for a in range(self.space.m):
            out.append((self.space.jet_name(a, zero), self.psi[(a, zero)]))
        for a, J, _s in self.space.jets_up_to(self.order):
            out.append((self.space.jet_name(a, J), self.psi[(a, J)]))
        return out

    def component_exprs(self):
        return [e for _n, e in self.coefficients()]

    def apply(self, e: Expr) -> Expr:
        from .expr import partial

        S = self.space
        terms = []
        for nm in sorted(e.free_symbols):
            info = S.jet_index(nm)
            if info is not None:
                a, J = info
                if mi_order(J) > self.order:
                    raise OrderOverflowError(mi_order(J), self.order)
                c = self.psi.get((a, J), ZERO)
            elif nm in S.independent:
                c = self.xi[S.independent.index(nm)]
            else:
                continue
            if not c.is_zero:
                terms.append(mul(c, partial(e, nm)))
        return add(*terms)

    def truncated(self, order: int) -> "JetField":
        psi = {aj: e for aj, e in self.psi.items() if mi_order(aj[1]) <= order}
        return JetField(self.space, order, self.xi, psi, twist=self.twist, base=self.base)

    def scaled(self, g: Expr) -> "JetField":
        psi = {aj: mul(g, e) for aj, e in self.psi.items()}
        return JetField(self.space, self.order, tuple(mul(g, c) for c in self.xi), psi)


def commutator(V: JetField, W: JetField) -> JetField:
    """Commutator of two first-order operators on the same jet space."""
    if V.space != W.space or V.order != W.order:
        raise ValueError("commutator needs fields on the same space and order")
    xi = tuple(add(V.apply(W.xi[i]), neg(W.apply(V.xi[i]))) for i in range(V.space.n))
    psi = {}
    keys = set(V.psi) | set(W.psi)
    for a, J in sorted(keys):
        psi[(a, J)] = add(
            V.apply(W.coefficient(a, J)), neg(W.apply(V.coefficient(a, J)))
        )
    return JetField(V.space, V.order, xi, psi)


def _as_base_field(X) -> tuple:
    """(xi tuple, phi tuple) for VectorField or EvolutionaryField input."""
    return tuple(X.xi), tuple(X.phi)


def _canonical_dir(J, reverse=False):
    nz = [i for i, j in enumerate(J) if j > 0]
    return nz[0] if reverse else nz[-1]


def _prolong_table(X, k, space, twist_matrix_for_dir=None, path="canonical"):
    """Shared coefficient recursion; twist_matrix_for_dir(i) gives Lambda_i."""
    xi, phi = _as_base_field(X)
    m, n = space.m, space.n
    psi = {(a, mi_zero(n)): phi[a] for a in range(m)}
    reverse = path == "reversed"
    for q in range(1, k + 1):
        for J in multi_indices(n, q):
            i = _canonical_dir(J, reverse)
            Jp = mi_sub(J, i)
            L = twist_matrix_for_dir(i) if twist_matrix_for_dir is not None else None
            for a in range(m):
                terms = [space.total_derivative(psi[(a, Jp)], i)]
                for l in range(n):
                    if not xi[l].is_zero:
                        terms.append(neg(mul(space.jet(a, mi_add(Jp, l)), space.total_derivative(xi[l], i))))
                if L is not None:
                    for b in range(m):
                        if L[a][b].is_zero:
                            continue
                        inner = add(
                            psi[(b, Jp)],
                            *[
                                neg(mul(space.jet(b, mi_add(Jp, l)), xi[l]))
                                for l in range(n)
                                if not xi[l].is_zero
                            ],
                        )
                        terms.append(mul(L[a][b], inner))
                psi[(a, J)] = add(*terms)
    return tuple(xi), psi


def prolong_standard(X, k: int, space: JetSpace | None = None) -> JetField:
    """Canonical contact-preserving lift of X to J^k M."""
    space = space or X.space
    if k > space.max_order:
        raise OrderOverflowError(k, space.max_order)
    if space.n == 1:
        return _prolong_ode(X, k, space, None)
    xi, psi = _prolong_table(X, k, space)
    return JetField(space, k, xi, psi, twist=None, base=X)


def _prolong_ode(X, k, space, lam_matrix, twist=None):
    """Single-independent-variable fast path of the recursion."""
    xi, phi = _as_base_field(X)
    m = space.m
    psi = {(a, (0,)): phi[a] for a in range(m)}
    xi0 = xi[0]
    dxi = space.total_derivative(xi0, 0) if not xi0.is_zero else ZERO
    for q in range(1, k + 1):
        for a in range(m):
            terms = [space.total_derivative(psi[(a, (q - 1,))], 0)]
            if not xi0.is_zero:
                terms.append(neg(mul(space.jet(a, (q,)), dxi)))
            if lam_matrix is not None:
                for b in range(m):
                    if lam_matrix[a][b].is_zero:
                        continue
                    inner = add(psi[(b, (q - 1,))], neg(mul(space.jet(b, (q,)), xi0))) if not xi0.is_zero else psi[(b, (q - 1,))]
                    terms.append(mul(lam_matrix[a][b], inner))
            psi[(a, (q,))] = add(*terms)
    return JetField(space, k, xi, psi, twist=twist, base=X)


def prolong_lambda(X, lam: Expr, k: int, space: JetSpace | None = None) -> JetField:
    """Scalar-twisted prolongation (single independent variable)."""
    space = space or X.space
    if space.n != 1:
        raise ValueError("scalar twist needs a single independent variable")
    _check_twist_domain(space, [lam])
    L = tuple(tuple(lam if a == b else ZERO for b in range(space.m)) for a in range(space.m))
    return _prolong_ode(X, k, space, L, twist=LambdaTwist(lam))


def check_mch(mu: MuTwist, space: JetSpace):
    """Residual matrices D_i L_j - D_j L_i + [L_i, L_j] for all i < j."""
    mats = mu.matrices
    if len(mats) != space.n:
        raise ValueError("need one twist matrix per independent variable")
    for M in mats:
        _check_twist_domain(space, [e for row in M for e in row])
    out = []
    for i in range(space.n):
        for j in range(i + 1, space.n):
            DiLj = tuple(tuple(space.total_derivative(e, i) for e in row) for row in mats[j])
            DjLi = tuple(tuple(space.total_derivative(e, j) for e in row) for row in mats[i])
            res = mat_add(mat_sub(DiLj, DjLi), bracket(mats[i], mats[j]))
            out.append((i, j, res))
    return out


def prolong_mu(
    X,
    mu: MuTwist,
    k: int,
    space: JetSpace | None = None,
    *,
    oracle=None,
    unchecked: bool = False,
    path: str = "canonical",
) -> JetField:
    """Matrix-twisted prolongation; twist matrices must be flat unless
    the caller explicitly opts out of the compatibility check."""
    space = space or X.space
    mats = mu.matrices
    if len(mats) != space.n:
        raise ValueError("need one twist matrix per independent variable")
    for M in mats:
        if mat_shape(M) != (space.m, space.m):
            raise ValueError("twist matrices must be m x m")
        _check_twist_domain(space, [e for row in M for e in row])
    if not unchecked and space.n > 1:
        from .oracle import Oracle

        orc = oracle or Oracle()
        for i, j, res in check_mch(mu, space):
            c = orc.check_all([e for row in res for e in row])
            if not c.passed:
                raise MCHViolationError(
                    f"zero-curvature residual for directions ({i},{j}) "
                    f"reaches {c.max_residual:.3e}"
                )
    if space.n == 1 and path == "canonical":
        return _prolong_ode(X, k, space, mats[0], twist=mu)
    xi, psi = _prolong_table(X, k, space, twist_matrix_for_dir=lambda i: mats[i], path=path)
    return JetField(space, k, xi, psi, twist=mu, base=X)


def prolong_Lambda_ode(X, Lambda, k: int, space: JetSpace | None = None, **kw) -> JetField:
    """Matrix twist for a single independent variable (mu = Lambda dx)."""
    space = space or X.space
    if space.n != 1:
        raise ValueError("this entry point is for single-independent-variable spaces")
    return prolong_mu(X, MuTwist((mat(Lambda),)), k, space, **kw)


def prolong_sigma(Xs, sigma: SigmaTwist, k: int, space: JetSpace | None = None):
    """Collective twist of r fields; returns the r prolonged fields."""
    space = space or Xs[0].space
    if space.n != 1:
        raise ValueError("collective twists need a single independent variable")
    r = len(Xs)
    if sigma.size != r:
        raise ValueError(f"twist matrix is {sigma.size} x {sigma.size} but there are {r} fields")
    _check_twist_domain(space, [e for row in sigma.matrix for e in row])
    m = space.m
    xi = [tuple(X.xi) for X in Xs]
    phi = [tuple(X.phi) for X in Xs]
    psi = [{(a, (0,)): phi[al][a] for a in range(m)} for al in range(r)]
    for q in range(1, k + 1):
        for al in range(r):
            for a in range(m):
                terms = [space.total_derivative(psi[al][(a, (q - 1,))], 0)]
                if not xi[al][0].is_zero:
                    terms.append(neg(mul(space.jet(a, (q,)), space.total_derivative(xi[al][0], 0))))
                for be in range(r):
                    s = sigma.matrix[al][be]
                    if s.is_zero:
                        continue
                    inner = add(psi[be][(a, (q - 1,))], neg(mul(space.jet(a, (q,)), xi[be][0])))
                    terms.append(mul(s, inner))
                psi[al][(a, (q,))] = add(*terms)
    return [
        JetField(space, k, xi[al], psi[al], twist=sigma, base=Xs[al]) for al in range(r)
    ]


def prolong(X, k: int, space: JetSpace | None = None, twist: TwistData = None, **kw):
    """Dispatch on twist data; sigma twists need a list of fields."""
    if twist is None:
        return prolong_standard(X, k, space)
    if isinstance(twist, LambdaTwist):
        return prolong_lambda(X, twist.expr, k, space)
    if isinstance(twist, MuTwist):
        return prolong_mu(X, twist, k, space, **kw)
    if isinstance(twist, SigmaTwist):
        return prolong_sigma(X, twist, k, space)
    raise TypeError(f"unknown twist {twist!r}")
