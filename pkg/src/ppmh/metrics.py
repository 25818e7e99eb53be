"""Error norms and linear-solve accounting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

A_TOL = 1e-6
R_TOL = 1e-3


def mixed_norm(u, v, a_tol=A_TOL, r_tol=R_TOL):
    """Distance of `v` from `u`, scaled by ``a_tol + r_tol * ||u||``.

    The scaling uses the first argument only, so the norm is not symmetric.
    A value below 1 means `v` agrees with `u` within the tolerances.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v) / (a_tol + r_tol * np.linalg.norm(u)))


def blockwise_mixed_norms(U, V, a_tol=A_TOL, r_tol=R_TOL):
    """Vector of ``mixed_norm(U[n], V[n])`` over the rows of two block arrays."""
    U = np.asarray(U)
    V = np.asarray(V)
    if U.shape != V.shape:
        raise ValueError(f"shape mismatch: {U.shape} vs {V.shape}")
    num = np.linalg.norm(U - V, axis=1)
    den = a_tol + r_tol * np.linalg.norm(U, axis=1)
    return num / den


def pp_error(U, fine_values, a_tol=A_TOL, r_tol=R_TOL):
    """Largest jump between coarse values and fine propagations.

    Parameters
    ----------
    U : (N, d) array
        Values at the synchronization points ``T_0, ..., T_{N-1}``.
    fine_values : (N, d) array
        Row ``n-1`` holds the fine propagation of ``U[n-1]`` to ``T_n``,
        ``n = 1, ..., N``.

    Interior jumps compare ``U[n]`` with ``fine_values[n-1]``; the periodicity
    jump compares ``U[0]`` with ``fine_values[N-1]``.
    """
    U = np.asarray(U)
    F = np.asarray(fine_values)
    # U[n] pairs with F[n-1]; rolling F by one puts F_N against U_0.
    return float(np.max(blockwise_mixed_norms(U, np.roll(F, 1, axis=0), a_tol, r_tol)))


def inner_error(U_new, U_old, a_tol=A_TOL, r_tol=R_TOL):
    """Max over blocks of ``mixed_norm(U_new[n], U_old[n])``."""
    return float(np.max(blockwise_mixed_norms(U_new, U_old, a_tol, r_tol)))


@dataclass
class Tally:
    """Linear solves done by one worker."""

    factor_solves: int = 0
    cached_resolves: int = 0

    @property
    def solves(self):
        return self.factor_solves + self.cached_resolves

    def __iadd__(self, other):
        self.factor_solves += other.factor_solves
        self.cached_resolves += other.cached_resolves
        return self


@dataclass
class SolveCounter:
    """Per-worker linear-solve tallies.

    ``effective()`` is the largest per-worker count (the cost when every worker
    runs concurrently); ``total()`` sums all workers.
    """

    workers: int = 1
    per_worker: list = field(default_factory=list)

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.per_worker:
            self.per_worker = [Tally() for _ in range(self.workers)]
        if len(self.per_worker) != self.workers:
            raise ValueError("per_worker length must equal workers")

    @property
    def master(self):
        """Tally used for work done outside parallel sections."""
        return self.per_worker[0]

    def effective(self):
        return max(t.solves for t in self.per_worker)

    def total(self):
        return sum(t.solves for t in self.per_worker)

    def factor_solves(self):
        return sum(t.factor_solves for t in self.per_worker)

    def cached_resolves(self):
        return sum(t.cached_resolves for t in self.per_worker)

    def snapshot(self):
        return [(t.factor_solves, t.cached_resolves) for t in self.per_worker]

    def to_dict(self):
        return {
            "workers": self.workers,
            "effective": self.effective(),
            "total": self.total(),
            "factor_solves": self.factor_solves(),
            "cached_resolves": self.cached_resolves(),
            "per_worker": [
                {"factor_solves": t.factor_solves, "cached_resolves": t.cached_resolves}
                for t in self.per_worker
            ],
        }
