"""Fine and coarse time propagators built on implicit Euler steps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConvergenceError
from .linalg import solve_dense
from .metrics import A_TOL, R_TOL

FULL_NEWTON = "full_newton"
SUCCESSIVE_SUBSTITUTION = "successive_substitution"
IMPLICIT_EULER = "implicit_euler"
TRAPEZOIDAL = "trapezoidal"


class StepConvergenceError(ConvergenceError):
    """The nonlinear solve of a single time step did not converge."""


@dataclass(frozen=True)
class PropagatorConfig:
    """Per-step nonlinear solver settings.

    A step has converged once the last update ``du`` satisfies
    ``||du|| <= newton_tol * (a_tol + r_tol ||u||)``, or once ``du`` is at
    round-off level.  ``coarse_scheme`` selects the coarse discretization; the
    trapezoidal rule is available for linear problems only.
    """

    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    per_step_solver: str = FULL_NEWTON
    coarse_scheme: str = IMPLICIT_EULER
    a_tol: float = A_TOL
    r_tol: float = R_TOL

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.per_step_solver not in (FULL_NEWTON, SUCCESSIVE_SUBSTITUTION):
            raise ValueError(f"unknown per_step_solver {self.per_step_solver!r}")
        if self.coarse_scheme not in (IMPLICIT_EULER, TRAPEZOIDAL):
            raise ValueError(f"unknown coarse_scheme {self.coarse_scheme!r}")


DEFAULT_CONFIG = PropagatorConfig()


def _small_update(du, u, cfg):
    nu = np.linalg.norm(u)
    ndu = np.linalg.norm(du)
    return ndu <= cfg.newton_tol * (cfg.a_tol + cfg.r_tol * nu) or ndu <= 8 * np.finfo(float).eps * nu


def implicit_euler_step(problem, t_prev, u_prev, h, cfg=DEFAULT_CONFIG, tally=None, t_next=None):
    """Solve ``(M/h + K(u)) u = (M/h) u_prev + j(t_prev + h)`` for ``u``.

    `t_next` overrides ``t_prev + h`` as the evaluation time of ``j`` so that
    callers can pass exactly computed grid times.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    u_prev = np.asarray(u_prev, dtype=float)
    t = t_prev + h if t_next is None else t_next
    C = problem.mass / h
    rhs = C @ u_prev + problem.rhs(t)
    if problem.is_linear:
        return solve_dense(C + problem.stiffness(u_prev), rhs, tally)

    u = u_prev
    du = None
    for _ in range(cfg.newton_max_iter):
        if cfg.per_step_solver == FULL_NEWTON:
            residual = C @ u + problem.apply_stiffness(u) - rhs
            du = -solve_dense(C + problem.stiffness_jacobian(u), residual, tally)
            u_new = u + du
        else:
            u_new = solve_dense(C + problem.stiffness(u), rhs, tally)
            du = u_new - u
        u = u_new
        if _small_update(du, u, cfg):
            return u
    raise StepConvergenceError(
        f"step to t={t:.6g} did not converge in {cfg.newton_max_iter} iterations "
        f"(last update {np.linalg.norm(du):.3e})",
        last_error=float(np.linalg.norm(du)),
        iterations=cfg.newton_max_iter,
    )


def trapezoidal_step(problem, t_prev, u_prev, h, tally=None, t_next=None):
    """Implicit trapezoidal step for a linear problem."""
    if not problem.is_linear:
        raise ValueError("the trapezoidal step is only available for linear problems")
    t = t_prev + h if t_next is None else t_next
    K = problem.stiffness(u_prev)
    C = problem.mass / h - 0.5 * K
    rhs = C @ u_prev + 0.5 * (problem.rhs(t) + problem.rhs(t_prev))
    return solve_dense(C + K, rhs, tally)


def _steps_between(t_start, t_end, step, period):
    span = t_end - t_start
    n = int(round(span / step))
    if n < 0 or abs(n * step - span) > 1e-12 * period:
        raise ValueError(f"[{t_start}, {t_end}] is not a whole number of steps of size {step}")
    return n


def propagate_fine(problem, t_start, u_start, t_end, grid, cfg=DEFAULT_CONFIG, tally=None):
    """Chain implicit Euler steps of size ``grid.fine_step`` from `t_start` to `t_end`."""
    h = grid.fine_step
    n = _steps_between(t_start, t_end, h, grid.period)
    first = int(round(t_start / h))
    u = np.asarray(u_start, dtype=float)
    for i in range(n):
        u = implicit_euler_step(
            problem, grid.fine_time(first + i), u, h, cfg, tally, t_next=grid.fine_time(first + i + 1)
        )
    return u


def propagate_coarse(problem, t_start, u_start, t_end, cfg=DEFAULT_CONFIG, tally=None):
    """One step of size ``t_end - t_start`` with the configured coarse scheme."""
    h = t_end - t_start
    if cfg.coarse_scheme == TRAPEZOIDAL:
        return trapezoidal_step(problem, t_start, u_start, h, tally, t_next=t_end)
    return implicit_euler_step(problem, t_start, u_start, h, cfg, tally, t_next=t_end)
