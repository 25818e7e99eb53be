"""Solver drivers for periodic steady-state problems.

Block vectors are ``(N, d)`` arrays whose row ``n`` is the value at the
synchronization time ``T_n``.  Defect arrays ``b`` and fine/coarse value arrays
are indexed by the end of their window: row ``n-1`` belongs to ``[T_{n-1}, T_n]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import ConvergenceError, SolverReport
from .linalg import BlockCyclicSystem, MultiHarmonicSolver, build_spectrum
from .metrics import A_TOL, R_TOL, SolveCounter, inner_error, mixed_norm, pp_error
from .parallel import WorkerPool
from .propagators import DEFAULT_CONFIG, IMPLICIT_EULER, TRAPEZOIDAL, propagate_coarse, propagate_fine

log = logging.getLogger(__name__)

Z_ZERO = "zero"
Z_MEAN = "mean_of_previous_iterate"
DIVERGENCE_WINDOW = 5


@dataclass(frozen=True, eq=False)
class OuterConfig:
    """Iteration caps, tolerances and the Newton linearization point.

    ``z_choice`` is ``"zero"``, ``"mean_of_previous_iterate"`` or a length-d
    vector used as the linearization point ``Z``.
    """

    max_outer: int = 50
    max_inner: int = 100
    a_tol: float = A_TOL
    r_tol: float = R_TOL
    z_choice: Union[str, np.ndarray] = Z_ZERO

    def __post_init__(self):
        if not (self.a_tol > 0 and self.r_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        if isinstance(self.z_choice, str):
            if self.z_choice not in (Z_ZERO, Z_MEAN):
                raise ValueError(f"unknown z_choice {self.z_choice!r}")
        else:
            object.__setattr__(self, "z_choice", np.atleast_1d(np.asarray(self.z_choice, dtype=float)))

    def linearization_point(self, d, previous=None):
        if isinstance(self.z_choice, np.ndarray):
            if self.z_choice.shape != (d,):
                raise ValueError(f"z_choice must have length {d}")
            return self.z_choice.copy()
        if self.z_choice == Z_MEAN and previous is not None:
            return np.asarray(previous).mean(axis=0)
        return np.zeros(d)


DEFAULT_OUTER = OuterConfig()


def _window_ends(grid):
    """Exact start and end times of every window."""
    T = grid.sync_times()
    return T, np.append(T[1:], grid.period)


def _rhs_at_window_ends(problem, grid):
    """Row ``n-1`` holds ``j(T_n)``, ``n = 1..N``."""
    _, ends = _window_ends(grid)
    return np.array([problem.rhs(t) for t in ends])


def _coarse_matrices(problem, dt, scheme=IMPLICIT_EULER):
    """Linear coarse blocks ``(Q, C)`` with ``Q = C + K``."""
    K = problem.stiffness(np.zeros(problem.dim))
    C = problem.mass / dt - (0.5 * K if scheme == TRAPEZOIDAL else 0.0)
    return C + K, C


def assemble_defects(problem, grid, U, prop_cfg=DEFAULT_CONFIG, counter=None, pool=None):
    """Fine minus coarse propagation of every window.

    Returns ``(b, fine, coarse)``, each ``(N, d)`` with row ``n-1`` the value at
    ``T_n`` obtained from ``U[n-1]``.
    """
    U = np.asarray(U, dtype=float)
    N = grid.num_windows
    if U.shape != (N, problem.dim):
        raise ValueError(f"U must have shape {(N, problem.dim)}")
    starts, ends = _window_ends(grid)
    pool = pool or WorkerPool(1)
    counter = counter or SolveCounter(pool.workers)
    fine = pool.map(lambda n, t: propagate_fine(problem, starts[n], U[n], ends[n], grid, prop_cfg, t), N, counter)
    coarse = pool.map(lambda n, t: propagate_coarse(problem, starts[n], U[n], ends[n], prop_cfg, t), N, counter)
    fine, coarse = np.array(fine), np.array(coarse)
    return fine - coarse, fine, coarse


def residual_R(problem, grid, U, b):
    """Nonlinear periodic coarse residual.

    ``R_n = Q(X_n) X_n - C U_{n-1} - j(T_n)`` with ``X_n = U_n - b_n``,
    ``C = M / dT`` and ``Q(x) = C + K(x)``; indices are cyclic so block 0 uses
    ``b_N``, ``U_{N-1}`` and ``j(T_N)``.  Its root is the PP-PC update.
    """
    U = np.asarray(U, dtype=float)
    b = np.asarray(b, dtype=float)
    if U.shape != b.shape or U.shape != (grid.num_windows, problem.dim):
        raise ValueError("U and b must both have shape (N, d)")
    C = problem.mass / grid.coarse_step
    X = U - np.roll(b, 1, axis=0)
    J = np.roll(_rhs_at_window_ends(problem, grid), 1, axis=0)
    KX = np.array([problem.apply_stiffness(x) for x in X])
    return X @ C.T + KX - np.roll(U, 1, axis=0) @ C.T - J


def _frozen_matrix_iteration(residual, H, solver, U0, cfg, counter, affine=False, guard=False):
    """Iterate ``H U_new = H U - R(U)`` until the inner error drops below 1.

    With `affine` the map is known to be exact after one solve and the loop
    stops there.  With `guard` five consecutive increases of the update norm
    ``||U_new - U||`` abort; the mixed-norm error saturates near ``1/r_tol``
    under geometric growth, so it cannot serve as the divergence signal.
    """
    U = U0
    errors, iterates = [], []
    rho1 = None
    rising = 0
    last_step = np.inf
    for s in range(1, cfg.max_inner + 1):
        h = H.matvec(U) - residual(U)
        U_new = solver.solve(h, counter)
        err = inner_error(U_new, U, cfg.a_tol, cfg.r_tol)
        step = float(np.linalg.norm(U_new - U))
        if s == 1:
            rho1 = step
        rising = rising + 1 if step > last_step else 0
        last_step = step
        errors.append(err)
        iterates.append(U_new)
        U = U_new
        if err < 1 or affine:
            return U, errors, iterates, rho1
        if guard and rising >= DIVERGENCE_WINDOW:
            raise ConvergenceError(
                f"inner iteration diverging: update norm rose {DIVERGENCE_WINDOW} times in a row "
                f"(last {err:.3e} after {s} iterations)",
                last_error=err, iterations=s,
            )
    raise ConvergenceError(
        f"inner iteration hit the cap of {cfg.max_inner} (last error {errors[-1]:.3e})",
        last_error=errors[-1], iterations=cfg.max_inner,
    )


def _pppc_outer(method, problem, grid, cfg, prop_cfg, workers, inner_solve):
    """Outer PP-PC loop shared by every periodic-coarse driver.

    Starts from ``b = 0``; each pass solves the coarse periodic problem with
    `inner_solve`, propagates all windows and checks the PP error.
    """
    N, d = grid.num_windows, problem.dim
    counter = SolveCounter(workers)
    b = np.zeros((N, d))
    U_prev = np.zeros((N, d))
    history, inner_its, inner_hist, iterates, inner_iterates = [], [], [], [], []
    converged = False
    extras = {}
    with WorkerPool(workers) as pool:
        for k in range(1, cfg.max_outer + 1):
            U, errs, its, info = inner_solve(b, U_prev, pool, counter)
            inner_its.append(len(its))
            inner_hist.append(errs)
            inner_iterates.append(its)
            extras.update(info)
            b, fine, _ = assemble_defects(problem, grid, U, prop_cfg, counter, pool)
            eps = pp_error(U, fine, cfg.a_tol, cfg.r_tol)
            history.append(eps)
            iterates.append(U)
            log.debug("%s outer %d: eps_pp=%.3e inner=%d", method, k, eps, len(its))
            U_prev = U
            if eps < 1:
                converged = True
                break
    extras["inner_iterates"] = inner_iterates
    return SolverReport(
        method=method, converged=converged, outer_iterations=len(history), inner_iterations=inner_its,
        error_history=history, solution=U_prev, times=grid.sync_times(), counters=counter,
        iterates=iterates, inner_error_history=inner_hist, extras=extras,
        message="" if converged else f"outer cap of {cfg.max_outer} reached",
    )


def sequential_steady_state(problem, grid, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1):
    """Integrate from ``u(0) = 0`` period after period until ``u(kT)`` stops changing.

    ``error_history[k-1]`` is ``||u(kT) - u((k-1)T)||_*``; the solution holds
    the last period's values at the synchronization times.
    """
    counter = SolveCounter(workers)
    starts, ends = _window_ends(grid)
    u = np.zeros(problem.dim)
    history, values = [], []
    converged = False
    for k in range(1, cfg.max_outer + 1):
        start = u
        values = []
        for n in range(grid.num_windows):
            values.append(u)
            u = propagate_fine(problem, starts[n], u, ends[n], grid, prop_cfg, counter.master)
        eps = mixed_norm(u, start, cfg.a_tol, cfg.r_tol)
        history.append(eps)
        if eps < 1:
            converged = True
            break
    return SolverReport(
        method="sequential", converged=converged, outer_iterations=len(history),
        inner_iterations=[], error_history=history, solution=np.array(values),
        times=grid.sync_times(), counters=counter, extras={"end_value": u},
        message="" if converged else f"period cap of {cfg.max_outer} reached",
    )


def pp_ic(problem, grid, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1):
    """Periodic Parareal with initial-value coarse problem.

    Iterates ``U_0 <- U_N`` and ``U_n <- F(U_{n-1}^old) + G(U_{n-1}^new) - G(U_{n-1}^old)``
    with the coarse sweep run in order on the master worker.  The PP error of
    the starting iterate ``U = 0`` is recorded as ``error_history[0]``.
    """
    N, d = grid.num_windows, problem.dim
    starts, ends = _window_ends(grid)
    counter = SolveCounter(workers)
    U = np.zeros((N + 1, d))
    history, iterates = [], []
    converged = False
    with WorkerPool(workers) as pool:
        _, fine, coarse_old = assemble_defects(problem, grid, U[:N], prop_cfg, counter, pool)
        for k in range(cfg.max_outer + 1):
            eps = pp_error(U[:N], fine, cfg.a_tol, cfg.r_tol)
            history.append(eps)
            if eps < 1:
                converged = True
                break
            if k == cfg.max_outer:
                break
            new = np.empty_like(U)
            new[0] = U[N]
            coarse_new = np.empty((N, d))
            for n in range(N):
                coarse_new[n] = propagate_coarse(problem, starts[n], new[n], ends[n], prop_cfg, counter.master)
                new[n + 1] = fine[n] + coarse_new[n] - coarse_old[n]
            U, coarse_old = new, coarse_new
            iterates.append(U[:N])
            fine = np.array(pool.map(
                lambda n, t: propagate_fine(problem, starts[n], U[n], ends[n], grid, prop_cfg, t), N, counter))
    return SolverReport(
        method="pp_ic", converged=converged, outer_iterations=len(history) - 1, inner_iterations=[],
        error_history=history, solution=U[:N], times=grid.sync_times(), counters=counter,
        iterates=iterates, extras={"end_value": U[N]},
        message="" if converged else f"outer cap of {cfg.max_outer} reached",
    )


def pp_pc_jacobi(problem, grid, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1):
    """PP-PC with the coarse periodic system solved by a block Jacobi fixed point.

    Each inner sweep applies all N coarse steps in parallel:
    ``U_n <- G(U_{n-1}) + b_n`` (cyclic), starting from the previous outer iterate.
    """
    starts, ends = _window_ends(grid)
    N = grid.num_windows

    def inner(b, U_prev, pool, counter):
        shifted_b = np.roll(b, 1, axis=0)
        starts_c, ends_c = np.roll(starts, 1), np.roll(ends, 1)
        U = U_prev
        errors, iterates = [], []
        for s in range(1, cfg.max_inner + 1):
            src = np.roll(U, 1, axis=0)
            G = pool.map(lambda n, t: propagate_coarse(problem, starts_c[n], src[n], ends_c[n], prop_cfg, t),
                         N, counter)
            U_new = np.array(G) + shifted_b
            err = inner_error(U_new, U, cfg.a_tol, cfg.r_tol)
            errors.append(err)
            iterates.append(U_new)
            U = U_new
            if err < 1:
                return U, errors, iterates, {}
        raise ConvergenceError(
            f"Jacobi inner iteration hit the cap of {cfg.max_inner} (last error {errors[-1]:.3e})",
            last_error=errors[-1], iterations=cfg.max_inner,
        )

    return _pppc_outer("pp_pc_jacobi", problem, grid, cfg, prop_cfg, workers, inner)


def linear_pppc_mh(problem, grid, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1):
    """PP-PC for linear problems with the coarse system solved by the multi-harmonic method.

    The right-hand side is ``r_n = Q b_n + j(T_n)`` (implicit Euler) or
    ``Q b_n + (j(T_n) + j(T_{n-1})) / 2`` (trapezoidal); the frequency-block
    factorizations are reused across outer iterations.
    """
    if not problem.is_linear:
        raise ValueError("linear_pppc_mh requires a linear problem")
    Q, C = _coarse_matrices(problem, grid.coarse_step, prop_cfg.coarse_scheme)
    system = BlockCyclicSystem(Q, C, grid.num_windows)
    spectrum = build_spectrum(grid.num_windows, grid.period)
    J = _rhs_at_window_ends(problem, grid)
    if prop_cfg.coarse_scheme == TRAPEZOIDAL:
        J = 0.5 * (J + np.roll(J, 1, axis=0))
    state = {}

    def inner(b, U_prev, pool, counter):
        if "solver" not in state:
            state["solver"] = MultiHarmonicSolver(system, spectrum, grid.coarse_step, pool)
        r = np.roll(b @ Q.T + J, 1, axis=0)
        U = state["solver"].solve(r, counter)
        return U, [], [U], {}

    return _pppc_outer("linear_pppc_mh", problem, grid, cfg, prop_cfg, workers, inner)


def _newton_system(problem, z, dt, num_blocks):
    C = problem.mass / dt
    return BlockCyclicSystem(C + problem.stiffness_jacobian(z), C, num_blocks)


def _check_splitting_matrix(H, problem, grid):
    if H.num_blocks != grid.num_windows or H.block_dim != problem.dim:
        raise ValueError("H does not match the grid and problem dimensions")
    if not np.allclose(H.offdiag_block, problem.mass / grid.coarse_step, rtol=1e-14, atol=0):
        raise ValueError("the off-diagonal block of H must be M / dT")


def _is_exact_linear_splitting(problem, H, dt):
    if not problem.is_linear:
        return False
    C = problem.mass / dt
    return np.array_equal(H.diag_block, C + problem.stiffness(np.zeros(problem.dim)))


def _pppc_frozen(method, problem, grid, cfg, prop_cfg, workers, system_for, guard):
    """PP-PC driver whose coarse problem is solved with a frozen block-cyclic matrix.

    `system_for(Z)` returns ``(H, cache_key)``; solvers are reused while the key
    stays the same.
    """
    if prop_cfg.coarse_scheme != IMPLICIT_EULER:
        raise ValueError(f"{method} supports the implicit Euler coarse scheme only")
    spectrum = build_spectrum(grid.num_windows, grid.period)
    dt = grid.coarse_step
    cache = {}

    def inner(b, U_prev, pool, counter):
        Z = cfg.linearization_point(problem.dim, U_prev)
        H, key = system_for(Z)
        if key is None or cache.get("key") != key:
            cache["key"] = key
            cache["solver"] = MultiHarmonicSolver(H, spectrum, dt, pool)
        U0 = Z + np.roll(b, 1, axis=0)
        U, errs, its, rho1 = _frozen_matrix_iteration(
            lambda V: residual_R(problem, grid, V, b), H, cache["solver"], U0, cfg, counter,
            affine=_is_exact_linear_splitting(problem, H, dt), guard=guard,
        )
        return U, errs, its, {"z": Z, "rho1": rho1}

    return _pppc_outer(method, problem, grid, cfg, prop_cfg, workers, inner)


def pppc_mh_newton(problem, grid, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1):
    """PP-PC with a simplified Newton inner solve and multi-harmonic linear solves.

    Per outer iteration the Jacobian ``Q_d(Z) = M/dT + K_d(Z)`` is frozen at the
    linearization point ``Z`` and the start is ``U_n = Z + b_n`` (block 0 takes
    ``b_N``).  On linear problems the inner loop is exact after one iteration.
    """
    def system_for(Z):
        return _newton_system(problem, Z, grid.coarse_step, grid.num_windows), None

    return _pppc_frozen("pppc_mh_newton", problem, grid, cfg, prop_cfg, workers, system_for, guard=False)


def _tp_run(method, problem, grid, cfg, H, workers, z):
    fg = grid.fine_as_windows()
    spectrum = build_spectrum(fg.num_windows, fg.period)
    counter = SolveCounter(workers)
    b = np.zeros((fg.num_windows, problem.dim))
    with WorkerPool(workers) as pool:
        solver = MultiHarmonicSolver(H, spectrum, fg.coarse_step, pool)
        U0 = np.tile(z, (fg.num_windows, 1))
        U, errs, its, rho1 = _frozen_matrix_iteration(
            lambda V: residual_R(problem, fg, V, b), H, solver, U0, cfg, counter,
            affine=_is_exact_linear_splitting(problem, H, fg.coarse_step), guard=method == "splitting",
        )
    return SolverReport(
        method=method, converged=True, outer_iterations=len(errs), inner_iterations=[len(errs)],
        error_history=errs, solution=U, times=fg.sync_times(), counters=counter, iterates=its,
        inner_error_history=[errs], extras={"z": z, "rho1": rho1},
    )


def tp_mh(problem, grid, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1, z=None):
    """All-at-once periodic implicit Euler system over every fine step.

    Solved by simplified Newton with the Jacobian frozen at ``[z, ..., z]``
    (one multi-harmonic pass for linear problems).  `z` overrides
    ``cfg.z_choice``; the mean-of-iterate choice falls back to zero.
    The iteration cap raises `ConvergenceError`.
    """
    fg = grid.fine_as_windows()
    z = cfg.linearization_point(problem.dim) if z is None else np.atleast_1d(np.asarray(z, dtype=float))
    H = _newton_system(problem, z, fg.coarse_step, fg.num_windows)
    return _tp_run("tp_mh", problem, grid, cfg, H, workers, z)


def splitting_iteration(problem, grid, H, cfg=DEFAULT_OUTER, prop_cfg=DEFAULT_CONFIG, workers=1, mode="pppc"):
    """Fixed point ``H U_new = H U - R(U)`` with a user-chosen constant block-cyclic ``H``.

    ``H`` must have off-diagonal block ``M / dT`` for the chosen `mode`:
    ``"pppc"`` (PP-PC outer loop, ``dT`` the window length) or ``"tp"`` (one
    block per fine step).  A diagonal of ``M/dT + K_d(Z)`` reproduces the
    simplified Newton iterates exactly.  Five consecutive rising inner errors
    abort with `ConvergenceError`.
    """
    if not isinstance(H, BlockCyclicSystem):
        raise TypeError("H must be a BlockCyclicSystem")
    if mode == "tp":
        fg = grid.fine_as_windows()
        _check_splitting_matrix(H, problem, fg)
        return _tp_run("splitting", problem, grid, cfg, H, workers, cfg.linearization_point(problem.dim))
    if mode != "pppc":
        raise ValueError(f"unknown mode {mode!r}")
    _check_splitting_matrix(H, problem, grid)
    return _pppc_frozen("splitting", problem, grid, cfg, prop_cfg, workers, lambda Z: (H, "fixed"), guard=True)
