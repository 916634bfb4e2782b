"""Differential-invariant chains and ODE order reduction.

New invariants are generated by the quotient-of-total-derivatives rule
from an order-0 and an order-1 invariant, certified against the defining
prolonged fields.  Reduction rewrites an ODE in the chain coordinates by
triangular elimination (each generated invariant is affine in its top jet
coordinate) and certifies the pullback on the solution manifold.
Reconstruction of the quadrature step is numeric (cumulative Simpson).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import (
    DegenerateBaseError,
    IBDPViolationError,
    NonGenericChainError,
    NotExpressibleError,
)
from .expr import ONE, ZERO, Expr, add, div, neg, partial, substitute
from .jets import JetSpace, mi_zero
from .oracle import Oracle
from .symmetry import DiffEq


def is_invariant(fields, zeta: Expr, oracle: Oracle) -> bool:
    """True iff every prolonged field annihilates the candidate."""
    return all(oracle.zero(V.apply(zeta)) for V in fields)


def ibdp_step(eta: Expr, zeta: Expr, space: JetSpace, oracle: Oracle | None = None) -> Expr:
    """Next invariant candidate (D_x zeta) / (D_x eta)."""
    deta = space.total_derivative(eta, 0)
    if deta.is_zero or (oracle is not None and oracle.zero(deta)):
        raise DegenerateBaseError("the base invariant has vanishing total derivative")
    return div(space.total_derivative(zeta, 0), deta)


@dataclass(frozen=True)
class InvariantChain:
    eta: Expr
    zeta: Expr
    generated: tuple  # orders 2 .. target

    def all_invariants(self):
        return (self.eta, self.zeta) + self.generated


def generate_invariant_chain(
    fields, eta: Expr, zeta: Expr, target_order: int, space: JetSpace, oracle: Oracle
) -> InvariantChain:
    """Grow the chain up to the target order, certifying every element.

    The defining fields must already annihilate (eta, zeta); a generated
    element failing certification raises IBDPViolationError naming the
    first bad order (the expected outcome for non-diagonal matrix twists).
    """
    if not is_invariant(fields, eta, oracle):
        raise ValueError("eta is not a common invariant of the supplied fields")
    if not is_invariant(fields, zeta, oracle):
        raise ValueError("zeta is not a common invariant of the supplied fields")
    chain = []
    current = zeta
    for order in range(2, target_order + 1):
        current = ibdp_step(eta, current, space, oracle)
        for V in fields:
            chk = oracle.check(V.apply(current))
            if not chk.passed:
                raise IBDPViolationError(
                    order, f"residual {chk.max_residual:.3e} at {chk.witness}"
                )
        chain.append(current)
    return InvariantChain(eta, zeta, tuple(chain))


@dataclass
class ReductionResult:
    """Reduced equation plus the substitution map that certifies it."""

    reduced_space: JetSpace
    reduced_eq: DiffEq
    eta: Expr
    zeta: Expr
    substitution: dict  # reduced coordinate name -> Expr on the original space

    def pullback_residual(self, eq: DiffEq) -> Expr:
        res = self.reduced_eq.residuals[0]
        return eq.restrict(substitute(res, self.substitution))


def _affine_split(e: Expr, coord: str, oracle: Oracle):
    """Write e = alpha + beta * coord; raises if e is not affine in coord."""
    beta = partial(e, coord)
    if coord in beta.free_symbols and not oracle.zero(partial(beta, coord)):
        raise NonGenericChainError(f"expression is not affine in {coord}")
    alpha = substitute(e, {coord: ZERO})
    return alpha, beta


def _pivot_nonzero(beta: Expr, oracle: Oracle, what: str):
    if beta.is_zero or oracle.zero(beta):
        raise NonGenericChainError(f"elimination pivot for {what} vanishes")


def reduce_ode(
    eq: DiffEq,
    eta: Expr,
    zeta: Expr,
    oracle: Oracle,
    reduced_names: tuple = ("y", "w"),
) -> ReductionResult:
    """Reduce a scalar ODE of order N to order N-1 in chain coordinates.

    The solved leading derivative is pushed through the invariant chain:
    each generated invariant is affine in its top jet coordinate, so the
    jets can be eliminated order by order and the equation re-expressed in
    (base invariant, chain) coordinates.  The pullback of the result is
    certified to vanish on the solution manifold.
    """
    space = eq.space
    if space.n != 1 or space.m != 1:
        raise ValueError("reduction expects a scalar ODE")
    N = eq.order
    if N < 2:
        raise ValueError("reduction needs an equation of order >= 2")
    # chain up to order N
    chain = [zeta]
    for _order in range(2, N + 1):
        chain.append(ibdp_step(eta, chain[-1], space, oracle))
    yname, wname = reduced_names
    rspace = JetSpace((yname,), (wname,), max(N - 1, 1))
    w_jet = lambda j: rspace.jet(0, (j,))
    # eliminate jets: u_(j) in terms of (x, u, w, w_y, ...)
    bindings: dict[str, Expr] = {}
    for j in range(1, N):
        coord = space.jet_name(0, (j,))
        alpha, beta = _affine_split(chain[j - 1], coord, oracle)
        _pivot_nonzero(beta, oracle, coord)
        expr = div(add(w_jet(j - 1), neg(alpha)), beta)
        bindings[coord] = substitute(expr, bindings)
    # value of the top invariant on the solution manifold
    W = eq.restrict(chain[N - 1])
    G = substitute(W, bindings)
    # base coordinate
    x0, u0 = space.independent[0], space.dependent[0]
    if eta == space.x(0):
        G = substitute(G, {x0: rspace.x(0)})
    elif eta == space.u(0):
        G = substitute(G, {u0: rspace.x(0)})
    leftovers = G.free_symbols & {x0, u0}
    for s in sorted(leftovers):
        dep = oracle.check(partial(G, s))
        if not dep.passed:
            raise NotExpressibleError(s, dep.witness)
        G = substitute(G, {s: ONE})
    reduced_eq = DiffEq(rspace, {(0, (N - 1,)): G})
    substitution = {yname: eta, wname: zeta}
    for j in range(1, N):
        substitution[rspace.jet_name(0, (j,))] = chain[j]
    result = ReductionResult(rspace, reduced_eq, eta, zeta, substitution)
    chk = oracle.check(result.pullback_residual(eq))
    if not chk.passed:
        raise NotExpressibleError(
            f"pullback residual {chk.max_residual:.3e}", chk.witness
        )
    return result


def reconstruct(ys: np.ndarray, ws: np.ndarray, initial_value: float = 0.0) -> np.ndarray:
    """Antiderivative samples v with v' = w and v(ys[0]) = initial_value."""
    ys = np.asarray(ys, dtype=float)
    ws = np.asarray(ws, dtype=float)
    if ys.shape != ws.shape or ys.ndim != 1 or ys.size < 2:
        raise ValueError("need matching 1-d sample arrays with >= 2 points")
    if not (np.isfinite(ys).all() and np.isfinite(ws).all()):
        raise ValueError("samples must be finite")
    return initial_value + cumulative_simpson(ws, x=ys, initial=0.0)


def read_samples(path):
    """Two-column CSV with a header line; returns (y, w) arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: expected a two-column CSV with header")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def write_samples(path, ys, vs, header=("y", "v")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for y, v in zip(ys, vs):
            w.writerow([repr(float(y)), repr(float(v))])
