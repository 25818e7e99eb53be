"""Problem, grid and report types shared by every solver.

A time-periodic problem is ``M u'(t) + K(u) u = j(t)`` on ``(0, T)`` with
``u(0) = u(T)``.  Block vectors are plain ``(num_blocks, d)`` numpy arrays;
row ``n`` is the value at the ``n``-th synchronization (or fine) time point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .metrics import SolveCounter


class SingularPencilError(ValueError):
    """``K + lambda M`` is numerically singular for every probe shift."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A linear system could not be solved because its matrix is singular."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(RuntimeError):
    """An iteration hit its cap (or diverged) before meeting its tolerance."""

    def __init__(self, message, last_error=None, iterations=None):
        super().__init__(message)
        self.last_error = last_error
        self.iterations = iterations


@dataclass(frozen=True)
class PeriodicProblem:
    """The triple ``(M, K(.), j(.))`` with period ``T``.

    ``stiffness_jacobian(x)`` returns ``d/dx [K(x) x]``.  All callables must be
    pure; solvers call them concurrently from worker threads.
    """

    dim: int
    period: float
    mass: np.ndarray
    stiffness: Callable[[np.ndarray], np.ndarray]
    stiffness_jacobian: Callable[[np.ndarray], np.ndarray]
    rhs: Callable[[float], np.ndarray]
    is_linear: bool = False
    name: str = "problem"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive")
        mass = np.array(self.mass, dtype=float).reshape(self.dim, self.dim)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        j0 = np.asarray(self.rhs(0.0), dtype=float)
        jT = np.asarray(self.rhs(self.period), dtype=float)
        if j0.shape != (self.dim,):
            raise ValueError(f"rhs must return shape ({self.dim},), got {j0.shape}")
        if np.linalg.norm(j0 - jT) > 1e-14 * (1.0 + np.linalg.norm(j0)):
            raise ValueError("rhs is not periodic: j(0) != j(T)")

    def apply_stiffness(self, u):
        """``K(u) u``."""
        return self.stiffness(u) @ u


@dataclass(frozen=True)
class TimeGrid:
    """``num_windows`` coarse windows of one period, each split into fine steps."""

    num_windows: int
    fine_steps_per_window: int
    period: float

    def __post_init__(self):
        if self.num_windows < 1 or self.fine_steps_per_window < 1:
            raise ValueError("num_windows and fine_steps_per_window must be >= 1")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @classmethod
    def from_fine_step(cls, num_windows, fine_step, period):
        """Grid whose fine step is (close to) `fine_step`; N_f must split into N windows."""
        num_fine = int(round(period / fine_step))
        if num_fine % num_windows:
            raise ValueError(f"{num_fine} fine steps do not split into {num_windows} windows")
        return cls(num_windows, num_fine // num_windows, period)

    @property
    def coarse_step(self):
        return self.period / self.num_windows

    @property
    def num_fine(self):
        return self.num_windows * self.fine_steps_per_window

    @property
    def fine_step(self):
        return self.period / self.num_fine

    def sync_time(self, n):
        """``T_n = n T / N`` (computed, never accumulated)."""
        return n * self.period / self.num_windows

    def sync_times(self):
        return np.arange(self.num_windows) * self.period / self.num_windows

    def fine_time(self, i):
        return i * self.period / self.num_fine

    def fine_as_windows(self):
        """The grid that treats every fine step as its own window."""
        return TimeGrid(self.num_fine, 1, self.period)


@dataclass
class SolverReport:
    """Outcome of one solver run.

    ``solution`` holds the values at ``times`` (one row per time point).
    ``error_history`` lists the governing error per outer iteration; PP drivers
    that check the starting iterate record that initial error as well.
    """

    method: str
    converged: bool
    outer_iterations: int
    inner_iterations: list
    error_history: list
    solution: np.ndarray
    times: np.ndarray
    counters: SolveCounter
    iterates: list = field(default_factory=list)
    inner_error_history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {
            "method": self.method,
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": list(self.inner_iterations),
            "error_history": [float(e) for e in self.error_history],
            "inner_error_history": [[float(e) for e in h] for h in self.inner_error_history],
            "times": [float(t) for t in self.times],
            "solution": np.asarray(self.solution).tolist(),
            "counters": self.counters.to_dict(),
            "extras": {k: _jsonable(v) for k, v in self.extras.items()},
            "message": self.message,
        }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _check_pencil(M, K, probes=3, cond_limit=1e14):
    rng = np.random.default_rng(20200604)
    nm, nk = np.linalg.norm(M), np.linalg.norm(K)
    scale = nk / nm if nm > 0 and nk > 0 else 1.0
    for lam in rng.uniform(0.1, 10.0, size=probes):
        if np.linalg.cond(K + lam * scale * M) <= cond_limit:
            return
    raise SingularPencilError("matrix pencil (M, K) is singular for all probe shifts")


def make_problem_linear(M, K, rhs, period, name="linear"):
    """Linear problem ``M u' + K u = j(t)``; ``K`` is used for both stiffness callables."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if M.shape != K.shape or M.shape[0] != M.shape[1]:
        raise ValueError(f"M and K must be square and equal in shape, got {M.shape}, {K.shape}")
    _check_pencil(M, K)
    K = K.copy()
    K.setflags(write=False)
    d = K.shape[0]

    def stiffness(u):
        return K

    def j(t):
        return np.asarray(rhs(t), dtype=float).reshape(d)

    return PeriodicProblem(d, float(period), M, stiffness, stiffness, j, is_linear=True, name=name)


def make_problem_scalar_nonlinear(m, kappa, kappa_prime, rhs, period, name="scalar"):
    """Scalar problem ``m u' + kappa(|u|) u = j(t)``.

    The Jacobian is ``kappa'(|x|) |x| + kappa(|x|)``.
    """
    if m < 0:
        raise ValueError("m must be non-negative")

    def stiffness(u):
        return np.array([[kappa(abs(u[0]))]])

    def jacobian(x):
        s = abs(x[0])
        return np.array([[kappa_prime(s) * s + kappa(s)]])

    def j(t):
        return np.asarray(rhs(t), dtype=float).reshape(1)

    return PeriodicProblem(1, float(period), np.array([[float(m)]]), stiffness, jacobian, j, name=name)
