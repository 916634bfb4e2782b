"""Probabilistic numeric equality oracle.

Identities between expressions are certified by evaluating both sides at
randomly sampled points: coordinates are drawn uniformly from rationals
with denominator <= 64 in [-2, 2] excluding (-1e-3, 1e-3).  Samples that
hit singular loci are redrawn (up to 100 rounds); verdicts are
deterministic given the seed, which is derived stably from the base seed
and the structural hashes of the compared expressions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PersistentDomainFailureError
from .expr import ZERO, Expr, evaluate_many, stable_hash

DEFAULT_SEED = 20072011
DEFAULT_TRIALS = 50
DEFAULT_TOL = 1e-9

_MAX_ROUNDS = 100
_DENOM_FLOOR = 1e-6


@dataclass
class Check:
    """Outcome of one oracle comparison."""

    passed: bool
    max_residual: float
    trials: int
    witness: dict | None = None
    witness_value: float | None = None

    def as_json(self):
        out = {
            "passed": bool(self.passed),
            "max_residual": float(self.max_residual),
            "trials": int(self.trials),
        }
        if self.witness is not None:
            out["witness"] = {k: float(v) for k, v in self.witness.items()}
            out["witness_value"] = float(self.witness_value)
        return out


def _sample_rationals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Rationals with denominator <= 64, values in [-2,2] \\ (-1e-3, 1e-3)."""
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        den = rng.integers(1, 65, size=todo.size)
        num = rng.integers(-2 * den, 2 * den + 1)
        vals = num / den
        ok = np.abs(vals) >= 1e-3
        out[todo[ok]] = vals[ok]
        todo = todo[~ok]
    return out


@dataclass
class Oracle:
    """Seed-deterministic random-evaluation identity checker."""

    seed: int = DEFAULT_SEED
    trials: int = DEFAULT_TRIALS
    tol: float = DEFAULT_TOL
    _counter: int = field(default=0, repr=False)

    def rng(self, *salt) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(stable_hash(self.seed, *salt)))

    def fresh_rng(self) -> np.random.Generator:
        self._counter += 1
        return self.rng("fresh", self._counter)

    def sample(self, symbols, count: int, rng=None) -> dict[str, np.ndarray]:
        """Sample points for the given symbol names (no domain screening)."""
        names = sorted(symbols)
        rng = rng if rng is not None else self.rng("sample", count, *names)
        return {s: _sample_rationals(rng, count) for s in names}

    def check(self, a: Expr, b: Expr = ZERO, trials=None, tol=None) -> Check:
        """Compare two expressions at sampled points; returns the evidence."""
        trials = self.trials if trials is None else trials
        tol = self.tol if tol is None else tol
        syms = sorted(a.free_symbols | b.free_symbols)
        rng = self.rng(a, b, trials)
        if not syms:
            trials = 1
        have: list[dict[str, np.ndarray]] = []
        n_have = 0
        for _ in range(_MAX_ROUNDS):
            need = trials - n_have
            if need <= 0:
                break
            pts = {s: _sample_rationals(rng, need) for s in syms}
            va = evaluate_many(a, pts, size=need, denom_floor=_DENOM_FLOOR)
            vb = evaluate_many(b, pts, size=need, denom_floor=_DENOM_FLOOR)
            ok = np.isfinite(va) & np.isfinite(vb)
            if ok.any():
                have.append(
                    {
                        "_va": va[ok],
                        "_vb": vb[ok],
                        **{s: pts[s][ok] for s in syms},
                    }
                )
                n_have += int(ok.sum())
        if n_have < max(1, int(np.ceil(0.1 * trials))):
            raise PersistentDomainFailureError(
                f"only {n_have}/{trials} sample points evaluable"
            )
        va = np.concatenate([h["_va"] for h in have])
        vb = np.concatenate([h["_vb"] for h in have])
        rel = np.abs(va - vb) / (1.0 + np.maximum(np.abs(va), np.abs(vb)))
        worst = int(np.argmax(rel)) if rel.size else 0
        max_rel = float(rel[worst]) if rel.size else 0.0
        passed = max_rel <= tol
        witness = None
        value = None
        if not passed and syms:
            cols = {s: np.concatenate([h[s] for h in have]) for s in syms}
            witness = {s: float(cols[s][worst]) for s in syms}
            value = float(va[worst] - vb[worst])
        return Check(passed, max_rel, n_have, witness, value)

    def equal(self, a: Expr, b: Expr, trials=None, tol=None) -> bool:
        return self.check(a, b, trials=trials, tol=tol).passed

    def zero(self, e: Expr, trials=None, tol=None) -> bool:
        return self.check(e, ZERO, trials=trials, tol=tol).passed

    def check_all(self, exprs, trials=None, tol=None) -> Check:
        """Check a batch of expressions against zero; worst case wins."""
        worst = Check(True, 0.0, 0)
        for e in exprs:
            c = self.check(e, ZERO, trials=trials, tol=tol)
            if c.max_residual >= worst.max_residual:
                worst = Check(
                    worst.passed and c.passed,
                    c.max_residual,
                    c.trials,
                    c.witness,
                    c.witness_value,
                )
            elif not c.passed:
                worst = Check(False, worst.max_residual, worst.trials, c.witness, c.witness_value)
        return worst

    def find_nonzero(self, e: Expr, trials=None, tol=None) -> dict | None:
        """Witness point where ``e`` is significantly nonzero, if any."""
        c = self.check(e, ZERO, trials=trials, tol=tol)
        return None if c.passed else c.witness

    def settings(self) -> dict:
        return {"seed": int(self.seed), "trials": int(self.trials), "tol": float(self.tol)}


def equal_numeric(
    a: Expr,
    b: Expr,
    trials: int = DEFAULT_TRIALS,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
) -> bool:
    """True iff |a-b| <= tol*(1+max(|a|,|b|)) at every sampled point."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return Oracle(seed=seed, trials=trials, tol=tol).equal(a, b)
