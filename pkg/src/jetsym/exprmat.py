"""Small dense matrices with symbolic entries (tuples of tuples of Expr)."""
from __future__ import annotations

from .expr import MINUS_ONE, ONE, ZERO, Expr, add, mul, neg, pow_


def mat(entries) -> tuple:
    return tuple(tuple(e for e in row) for row in entries)


def mat_shape(A):
    return len(A), len(A[0])


def identity(q: int):
    return tuple(tuple(ONE if i == j else ZERO for j in range(q)) for i in range(q))


def zeros(q: int, r: int | None = None):
    r = q if r is None else r
    return tuple(tuple(ZERO for _ in range(r)) for _ in range(q))


def mat_map(f, A):
    return tuple(tuple(f(e) for e in row) for row in A)


def mat_add(A, B):
    return tuple(tuple(add(a, b) for a, b in zip(ra, rb)) for ra, rb in zip(A, B))


def mat_sub(A, B):
    return tuple(tuple(add(a, neg(b)) for a, b in zip(ra, rb)) for ra, rb in zip(A, B))


def mat_scale(g, A):
    return mat_map(lambda e: mul(g, e), A)


def mat_mul(A, B):
    n, k = mat_shape(A)
    k2, m = mat_shape(B)
    if k != k2:
        raise ValueError("matrix shape mismatch")
    return tuple(
        tuple(add(*[mul(A[i][t], B[t][j]) for t in range(k)]) for j in range(m))
        for i in range(n)
    )


def mat_vec(A, v):
    return tuple(add(*[mul(a, x) for a, x in zip(row, v)]) for row in A)


def transpose(A):
    return tuple(map(tuple, zip(*A)))


def bracket(A, B):
    """Matrix commutator [A, B] = AB - BA."""
    return mat_sub(mat_mul(A, B), mat_mul(B, A))


def det(A) -> Expr:
    q, r = mat_shape(A)
    if q != r:
        raise ValueError("determinant needs a square matrix")
    if q == 1:
        return A[0][0]
    if q == 2:
        return add(mul(A[0][0], A[1][1]), neg(mul(A[0][1], A[1][0])))
    # Laplace expansion along the first row; fine for the small sizes used here
    terms = []
    for j in range(q):
        minor = tuple(row[:j] + row[j + 1 :] for row in A[1:])
        s = ONE if j % 2 == 0 else MINUS_ONE
        terms.append(mul(s, A[0][j], det(minor)))
    return add(*terms)


def adjugate(A):
    q, _ = mat_shape(A)
    if q == 1:
        return ((ONE,),)
    cof = []
    for i in range(q):
        row = []
        for j in range(q):
            minor = tuple(
                r[:j] + r[j + 1 :] for t, r in enumerate(A) if t != i
            )
            s = ONE if (i + j) % 2 == 0 else MINUS_ONE
            row.append(mul(s, det(minor)))
        cof.append(tuple(row))
    return transpose(tuple(cof))


def inverse(A):
    """Symbolic inverse via adjugate/determinant; intended for q <= 3."""
    q, r = mat_shape(A)
    if q != r:
        raise ValueError("inverse needs a square matrix")
    if q > 3:
        raise ValueError("symbolic inverse only supported for q <= 3")
    dinv = pow_(det(A), -1)
    return mat_map(lambda e: mul(dinv, e), adjugate(A))
