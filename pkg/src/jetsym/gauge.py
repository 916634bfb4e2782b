"""Gauge correspondences between twisted and standard prolongations.

A nowhere-singular matrix A on the base manifold induces the flat matrix
twist A^-1 (D_i A) acting on the components of a vertical field, and the
collective twist A^-1 (D_x A) mixing the members of a field set.  The
factor order is forced: gauging the twisted coefficient tables must
reproduce the standard tables of the gauged data, and the induction
through the prolongation recursion pins the twist to the left
logarithmic-derivative form, which is also the one annihilated by the
zero-curvature residual.  Both commutative diagrams are certified
numerically, coefficient by coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonVerticalInputError, SingularAtSampleError
from .exprmat import det, inverse, mat, mat_map, mat_mul, mat_vec
from .expr import Expr, add, evaluate_many, mul, neg
from .jets import JetSpace
from .oracle import Oracle
from .prolong import (
    EvolutionaryField,
    JetField,
    MuTwist,
    SigmaTwist,
    VectorField,
    prolong_mu,
    prolong_sigma,
    prolong_standard,
)


@dataclass(frozen=True)
class GaugeMatrix:
    """Square matrix of expressions on M, nonsingular at sampled points."""

    space: JetSpace
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", mat(self.entries))
        q = len(self.entries)
        if any(len(row) != q for row in self.entries):
            raise ValueError("gauge matrix must be square")
        for row in self.entries:
            for e in row:
                if not self.space.is_base(e):
                    raise ValueError("gauge matrix entries must live on M")

    @property
    def size(self) -> int:
        return len(self.entries)

    def determinant(self) -> Expr:
        return det(self.entries)

    def assert_nonsingular(self, oracle: Oracle, samples: int = 30):
        d = self.determinant()
        pts = oracle.sample(d.free_symbols, samples, rng=oracle.rng("gauge-det", d))
        vals = evaluate_many(d, pts, size=samples)
        bad = ~np.isfinite(vals) | (np.abs(vals) < 1e-8)
        if bad.any():
            i = int(np.argmax(bad))
            point = {s: float(pts[s][i]) for s in sorted(pts)}
            raise SingularAtSampleError(f"determinant ~ 0 at {point}")

    def inverse(self):
        return inverse(self.entries)


def mu_from_gauge(A: GaugeMatrix, space: JetSpace, oracle: Oracle | None = None) -> MuTwist:
    """Flat matrix twist A^-1 (D_i A), one matrix per direction."""
    if oracle is not None:
        A.assert_nonsingular(oracle)
    Ainv = A.inverse()
    mats = []
    for i in range(space.n):
        DA = mat_map(lambda e: space.total_derivative(e, i), A.entries)
        mats.append(mat_mul(Ainv, DA))
    return MuTwist(tuple(mats))


def sigma_from_gauge(A: GaugeMatrix, space: JetSpace, oracle: Oracle | None = None) -> SigmaTwist:
    """Collective twist A^-1 (D_x A) mixing the fields of a set."""
    if space.n != 1:
        raise ValueError("collective twists need a single independent variable")
    if oracle is not None:
        A.assert_nonsingular(oracle)
    DA = mat_map(lambda e: space.total_derivative(e, 0), A.entries)
    return SigmaTwist(mat_mul(A.inverse(), DA))


@dataclass
class DiagramReport:
    """Certified residuals of a gauge commutative diagram."""

    residuals: list  # (label, Expr)
    max_residual: float
    passed: bool
    witness: dict | None = None

    @classmethod
    def from_residuals(cls, residuals, oracle: Oracle, tol=None):
        worst = 0.0
        passed = True
        witness = None
        for _label, e in residuals:
            chk = oracle.check(e, tol=tol)
            if chk.max_residual > worst:
                worst = chk.max_residual
            if not chk.passed and witness is None:
                passed = False
                witness = chk.witness
        return cls(residuals, worst, passed, witness)


def _require_vertical(X):
    if isinstance(X, EvolutionaryField):
        return tuple(X.Q)
    if isinstance(X, VectorField):
        if not X.is_vertical():
            raise NonVerticalInputError(
                "gauge diagrams only apply to vertical fields"
            )
        return tuple(X.phi)
    raise TypeError(f"expected a field, got {X!r}")


def verify_gauge_diagram_mu(
    X, A: GaugeMatrix, k: int, space: JetSpace, oracle: Oracle
) -> DiagramReport:
    """Check that gauging the matrix-twisted prolongation of a vertical
    field reproduces the standard prolongation of the gauged field."""
    Q = _require_vertical(X)
    if A.size != space.m:
        raise ValueError("gauge matrix size must equal the number of components")
    A.assert_nonsingular(oracle)
    mu = mu_from_gauge(A, space)
    Xmu = prolong_mu(EvolutionaryField(space, Q), mu, k, space, unchecked=True)
    Qt = mat_vec(A.entries, Q)
    Xt = prolong_standard(EvolutionaryField(space, Qt), k, space)
    residuals = []
    zero = (0,) * space.n
    keys = [(a, zero) for a in range(space.m)] + [
        (a, J) for a, J, _s in space.jets_up_to(k)
    ]
    for a, J in keys:
        gauged = add(*[mul(A.entries[a][b], Xmu.coefficient(b, J)) for b in range(space.m)])
        residuals.append(
            (space.jet_name(a, J), add(Xt.coefficient(a, J), neg(gauged)))
        )
    return DiagramReport.from_residuals(residuals, oracle)


def verify_gauge_diagram_sigma(
    Xs, A: GaugeMatrix, k: int, space: JetSpace, oracle: Oracle
) -> DiagramReport:
    """Check that mixing collectively-twisted prolongations by A equals the
    standard prolongations of the A-mixed fields."""
    if space.n != 1:
        raise ValueError("collective twists need a single independent variable")
    r = len(Xs)
    if A.size != r:
        raise ValueError("gauge matrix size must equal the number of fields")
    A.assert_nonsingular(oracle)
    sigma = sigma_from_gauge(A, space)
    Ys = prolong_sigma(list(Xs), sigma, k, space)
    Ws = [
        VectorField(
            space,
            (add(*[mul(A.entries[al][be], Xs[be].xi[0]) for be in range(r)]),),
            tuple(
                add(*[mul(A.entries[al][be], Xs[be].phi[a]) for be in range(r)])
                for a in range(space.m)
            ),
        )
        for al in range(r)
    ]
    Zs = [prolong_standard(W, k, space) for W in Ws]
    residuals = []
    zero = (0,)
    keys = [(a, zero) for a in range(space.m)] + [
        (a, J) for a, J, _s in space.jets_up_to(k)
    ]
    for al in range(r):
        mixed_xi = add(*[mul(A.entries[al][be], Ys[be].xi[0]) for be in range(r)])
        residuals.append((f"field{al}.xi", add(Zs[al].xi[0], neg(mixed_xi))))
        for a, J in keys:
            mixed = add(*[mul(A.entries[al][be], Ys[be].coefficient(a, J)) for be in range(r)])
            residuals.append(
                (
                    f"field{al}.{space.jet_name(a, J)}",
                    add(Zs[al].coefficient(a, J), neg(mixed)),
                )
            )
    return DiagramReport.from_residuals(residuals, oracle)
