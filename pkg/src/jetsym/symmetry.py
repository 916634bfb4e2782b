"""Symmetry condition checking and the ansatz-based determining solver.

Equations are supplied in solved leading form (each leading derivative
equated to an expression in lower/other coordinates), which makes
restriction to the solution manifold a terminating substitution process.
The determining solver works numerically over sample points and certifies
every candidate field post hoc with the oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    DegenerateDistributionError,
    IllConditionedSampleError,
    NeedsUnavailableDerivativeError,
    NotInvolutiveError,
    OrderOverflowError,
)
from .expr import ZERO, Const, Expr, add, evaluate_many, mul, neg, sub, substitute, sym
from .jets import JetSpace, mi_diff, mi_le, mi_order
from .oracle import Oracle
from .prolong import (
    JetField,
    LambdaTwist,
    MuTwist,
    SigmaTwist,
    VectorField,
    prolong_lambda,
    prolong_mu,
    prolong_standard,
    vf_commutator,
)

SVD_RELATIVE_THRESHOLD = 1e-8
RATIONALIZE_TOL = 1e-6
RATIONALIZE_MAX_DEN = 12


class DiffEq:
    """A differential equation with solved leading derivatives.

    ``solved`` maps leading jet coordinates (a, J) to expressions in
    strictly lower or parametric coordinates; ``residuals`` is the
    original F = 0 form (defaults to lhs - rhs).
    """

    def __init__(self, space: JetSpace, solved: dict, residuals=None):
        self.space = space
        norm: dict[tuple[int, tuple], Expr] = {}
        for key, rhs in solved.items():
            if isinstance(key, str):
                info = space.jet_index(key)
                if info is None:
                    info = space.jet_index(space.resolve_symbol(key).name)
                key = info
            rhs = space.parse(rhs) if isinstance(rhs, str) else rhs
            norm[(key[0], tuple(key[1]))] = rhs
        if not norm:
            raise ValueError("an equation needs at least one solved leading derivative")
        self.solved = norm
        self.order = max(mi_order(J) for _a, J in norm)
        for (_a, J) in norm:
            if mi_order(J) == 0:
                raise ValueError("leading coordinates must be genuine derivatives")
        if residuals is None:
            residuals = tuple(
                sub(space.jet(a, J), rhs) for (a, J), rhs in sorted(norm.items())
            )
        self.residuals = tuple(residuals)
        self._consequences: dict[tuple[int, tuple], Expr] = {}

    def leading(self):
        return sorted(self.solved)

    def _substitutable(self, nm: str):
        """Leading coordinate (b, J*) whose derivative closure contains nm."""
        info = self.space.jet_index(nm)
        if info is None:
            return None
        b, K = info
        for (a, J) in self.solved:
            if a == b and mi_le(J, K):
                return (a, J, K)
        return None

    def _consequence(self, a, J, K, stack=()):
        """Fully restricted value of u^a_K given the solved u^a_J."""
        key = (a, K)
        val = self._consequences.get(key)
        if val is not None:
            return val
        if key in stack:
            raise NeedsUnavailableDerivativeError(
                f"cyclic solved form at {self.space.jet_name(a, K)}"
            )
        try:
            raw = self.space.total_derivative_multi(self.solved[(a, J)], mi_diff(K, J))
        except OrderOverflowError as exc:
            raise NeedsUnavailableDerivativeError(str(exc)) from exc
        val = self._restrict(raw, stack + (key,))
        self._consequences[key] = val
        return val

    def _restrict(self, e: Expr, stack=()):
        while True:
            hits = []
            for nm in e.free_symbols:
                h = self._substitutable(nm)
                if h is not None:
                    hits.append((nm, h))
            if not hits:
                return e
            bindings = {
                nm: self._consequence(a, J, K, stack) for nm, (a, J, K) in hits
            }
            e = substitute(e, bindings)

    def restrict(self, e: Expr) -> Expr:
        """Substitute solved coordinates (and their differential
        consequences) until no leading coordinate remains."""
        return self._restrict(e)

    def self_consistent(self, oracle: Oracle) -> bool:
        return all(oracle.zero(self.restrict(r)) for r in self.residuals)


def restrict(e: Expr, eq: DiffEq) -> Expr:
    return eq.restrict(e)


def symmetry_residual(eq: DiffEq, V: JetField, restricted: bool = True):
    """[V(F)] restricted to the solution manifold (or raw, for strong
    symmetry checks); all residuals vanishing means V generates a
    (twisted) symmetry."""
    if V.order < eq.order:
        raise ValueError(f"field order {V.order} below equation order {eq.order}")
    out = []
    for F in eq.residuals:
        r = V.apply(F)
        out.append(eq.restrict(r) if restricted else r)
    return out


def commutator(V, W):
    """Commutator of two fields (vector fields on M or jet fields)."""
    if isinstance(V, VectorField) and isinstance(W, VectorField):
        return vf_commutator(V, W)
    from .prolong import commutator as jf_comm

    return jf_comm(V, W)


@dataclass
class InvolutiveSystem:
    """A field set together with certified structure functions."""

    fields: tuple
    structure: dict  # (alpha, beta) with alpha < beta -> tuple of Exprs on M

    def structure_exprs(self, al: int, be: int):
        if al == be:
            return (ZERO,) * len(self.fields)
        if al < be:
            return self.structure[(al, be)]
        return tuple(neg(e) for e in self.structure[(be, al)])


def _component_list(X):
    if isinstance(X, VectorField):
        return list(X.xi) + list(X.phi)
    return X.component_exprs()


def _monomial_basis(space: JetSpace, degree: int):
    """Monomials in the base coordinates (x, u) up to the given degree."""
    coords = [space.x(i) for i in range(space.n)] + [space.u(a) for a in range(space.m)]
    basis = [Const(1)]
    last = [Const(1)]
    for _ in range(degree):
        new = []
        for b in last:
            for c in coords:
                m = mul(b, c)
                if m not in new and m not in basis:
                    new.append(m)
        basis.extend(new)
        last = new
    return basis


def rationalize(x: float, max_den: int = RATIONALIZE_MAX_DEN, tol: float = RATIONALIZE_TOL):
    """Snap a float to a nearby small rational, else keep the float."""
    fr = Fraction(x).limit_denominator(max_den)
    if abs(float(fr) - x) <= tol:
        return fr
    return x


def _nullspace(A: np.ndarray, threshold=SVD_RELATIVE_THRESHOLD) -> np.ndarray:
    """Orthonormal nullspace basis (rows) via SVD with a relative cut."""
    if A.size == 0:
        return np.eye(A.shape[1])
    _u, s, vh = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > threshold * max(smax, 1.0)))
    return vh[rank:]


def _rref(B: np.ndarray, tol=1e-10) -> np.ndarray:
    """Reduced row echelon form (for presentable nullspace bases)."""
    B = B.astype(float).copy()
    rows, cols = B.shape
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        piv = r + int(np.argmax(np.abs(B[r:, c])))
        if abs(B[piv, c]) < tol:
            continue
        B[[r, piv]] = B[[piv, r]]
        B[r] /= B[r, c]
        for i in range(rows):
            if i != r:
                B[i] -= B[i, c] * B[r]
        r += 1
    return B[:r]


def _combine(coeffs, basis):
    terms = []
    for c, b in zip(coeffs, basis):
        if isinstance(c, Fraction):
            if c == 0:
                continue
            terms.append(mul(Const(c), b))
        elif abs(c) > 1e-12:
            terms.append(mul(Const(Fraction(float(c)).limit_denominator(10**12)), b))
    return add(*terms)


def check_involution(fields, oracle: Oracle, basis=None, degree: int = 2) -> InvolutiveSystem:
    """Fit and certify structure functions [X_a, X_b] = f^c_ab X_c.

    The functions are fitted globally from a monomial ansatz on the base
    coordinates via a least-squares solve over sampled points, then
    certified by the oracle.  Raises NotInvolutiveError with a witness
    point when a commutator leaves the pointwise span.
    """
    fields = list(fields)
    r = len(fields)
    space = fields[0].space if isinstance(fields[0], VectorField) else fields[0].space
    if basis is None:
        basis = _monomial_basis(space, degree)
    p = len(basis)
    comps = [_component_list(X) for X in fields]
    ncomp = len(comps[0])
    structure: dict[tuple[int, int], tuple] = {}
    syms = set()
    for X in fields:
        for e in _component_list(X):
            syms |= e.free_symbols
    for b in basis:
        syms |= b.free_symbols
    for al in range(r):
        for be in range(al + 1, r):
            C = commutator(fields[al], fields[be])
            ccomps = _component_list(C)
            for e in ccomps:
                syms |= e.free_symbols
            npts = max(3 * r * p, 40)
            pts = oracle.sample(syms, npts, rng=oracle.rng("involution", al, be, *sorted(syms)))
            Xvals = np.stack(
                [
                    np.stack([evaluate_many(e, pts, size=npts) for e in comps[g]])
                    for g in range(r)
                ]
            )  # (r, ncomp, npts)
            Cvals = np.stack([evaluate_many(e, pts, size=npts) for e in ccomps])
            Bvals = np.stack([evaluate_many(b, pts, size=npts) for b in basis])
            valid = np.isfinite(Xvals).all(axis=(0, 1)) & np.isfinite(Cvals).all(axis=0) & np.isfinite(Bvals).all(axis=0)
            if valid.sum() < max(r * p, 10):
                raise IllConditionedSampleError("too few evaluable sample points")
            Xv, Cv, Bv = Xvals[:, :, valid], Cvals[:, valid], Bvals[:, valid]
            if np.max(np.abs(Xv)) < 1e-12:
                raise DegenerateDistributionError("field set vanishes at sampled points")
            nv = int(valid.sum())
            # rows: (component, point); unknowns: (gamma, basis fn)
            rows = np.zeros((ncomp * nv, r * p))
            rhs = np.zeros(ncomp * nv)
            for comp in range(ncomp):
                for g in range(r):
                    for j in range(p):
                        rows[comp * nv : (comp + 1) * nv, g * p + j] = Xv[g, comp] * Bv[j]
                rhs[comp * nv : (comp + 1) * nv] = Cv[comp]
            sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
            fit_residual = rows @ sol - rhs
            scale = 1.0 + np.max(np.abs(rhs))
            if np.max(np.abs(fit_residual)) > 1e-6 * scale:
                idx = int(np.argmax(np.abs(fit_residual))) % nv
                witness = {s: float(pts[s][valid][idx]) for s in sorted(syms)}
                raise NotInvolutiveError((al, be), witness)
            fexprs = []
            for g in range(r):
                coeffs = [rationalize(v) for v in sol[g * p : (g + 1) * p]]
                fexprs.append(_combine(coeffs, basis))
            # certify
            for comp in range(ncomp):
                lhs = ccomps[comp]
                rhs_e = add(*[mul(fexprs[g], comps[g][comp]) for g in range(r)])
                chk = oracle.check(lhs, rhs_e)
                if not chk.passed:
                    raise NotInvolutiveError((al, be), chk.witness)
            structure[(al, be)] = tuple(fexprs)
    return InvolutiveSystem(tuple(fields), structure)


@dataclass(frozen=True)
class AnsatzProblem:
    """Shared scalar basis for every component of the unknown field."""

    basis: tuple

    @classmethod
    def polynomial(cls, space: JetSpace, degree: int) -> "AnsatzProblem":
        return cls(tuple(_monomial_basis(space, degree)))


def solve_determining_ansatz(
    eq: DiffEq,
    ansatz: AnsatzProblem,
    twist=None,
    *,
    oracle: Oracle,
    points_factor: int = 3,
    attempts: int = 3,
):
    """Null space of the (twisted) determining equations over the ansatz.

    Builds a field with symbolic coefficients, evaluates the restricted
    symmetry residual at sample points (the residual is linear and
    homogeneous in the coefficients), extracts the null space by SVD with
    a relative threshold, and re-certifies every resulting field.
    """
    space = eq.space
    basis = tuple(ansatz.basis)
    p = len(basis)
    if p == 0:
        return []
    ncomp = space.n + space.m
    nunk = ncomp * p
    params = [sym(f"_c{i}") for i in range(nunk)]

    def component(ci):
        return add(*[mul(params[ci * p + j], basis[j]) for j in range(p)])

    xi = tuple(component(i) for i in range(space.n))
    phi = tuple(component(space.n + a) for a in range(space.m))
    X = VectorField(space, xi, phi)
    k = eq.order
    if twist is None:
        V = prolong_standard(X, k, space)
    elif isinstance(twist, LambdaTwist):
        V = prolong_lambda(X, twist.expr, k, space)
    elif isinstance(twist, MuTwist):
        V = prolong_mu(X, twist, k, space, oracle=oracle)
    elif isinstance(twist, SigmaTwist):
        raise ValueError(
            "collective twists need several unknown fields; supply them explicitly"
        )
    else:
        raise TypeError(f"unknown twist {twist!r}")
    residuals = symmetry_residual(eq, V)
    pnames = {s.name for s in params}
    free = set()
    for rexpr in residuals:
        free |= rexpr.free_symbols - pnames
    npts = max(points_factor * nunk, 30)
    for attempt in range(attempts):
        pts = oracle.sample(free, npts, rng=oracle.rng("ansatz", attempt, npts))
        cols = []
        for j in range(nunk):
            unit = {nm: (np.ones(npts) if nm == params[j].name else np.zeros(npts)) for nm in pnames}
            vals = [evaluate_many(rexpr, {**pts, **unit}, size=npts) for rexpr in residuals]
            cols.append(np.concatenate(vals))
        A = np.stack(cols, axis=1)
        good = np.isfinite(A).all(axis=1)
        A = A[good]
        if A.shape[0] < nunk:
            continue
        null = _nullspace(A)
        if null.size == 0:
            return []
        null = _rref(null)
        fields_out = []
        certified = True
        for vec in null:
            coeffs = [rationalize(v) for v in vec]
            fx = tuple(_combine(coeffs[i * p : (i + 1) * p], basis) for i in range(space.n))
            fp = tuple(
                _combine(coeffs[(space.n + a) * p : (space.n + a + 1) * p], basis)
                for a in range(space.m)
            )
            cand = VectorField(space, fx, fp)
            if twist is None:
                Vc = prolong_standard(cand, k, space)
            elif isinstance(twist, LambdaTwist):
                Vc = prolong_lambda(cand, twist.expr, k, space)
            else:
                Vc = prolong_mu(cand, twist, k, space, unchecked=True)
            if not all(oracle.zero(rr) for rr in symmetry_residual(eq, Vc)):
                certified = False
                break
            fields_out.append(cand)
        if certified:
            return fields_out
    raise IllConditionedSampleError(
        "determining system stayed ill-conditioned after resampling"
    )
