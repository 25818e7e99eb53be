"""Periodic steady state of a nonlinear RL circuit, five ways.

The circuit obeys ``m u' + kappa(|u|) u = 1e-3 sin(2 pi t / T)`` with a
saturating coefficient.  Marching from rest takes about ten periods before
the transient has died down; the periodic Parareal variants below reach the
same state with far fewer sequential steps per worker.
"""
import time

import numpy as np

from ppmh import (OuterConfig, TimeGrid, pp_ic, pp_pc_jacobi, pppc_mh_newton, rl_circuit_1d,
                  sequential_steady_state, tp_mh)

problem = rl_circuit_1d()
grid = TimeGrid.from_fine_step(10, 1e-5, problem.period)
workers = 4

runs = {
    "sequential": lambda: sequential_steady_state(problem, grid),
    "PP-IC": lambda: pp_ic(problem, grid, workers=workers),
    "PP-PC Jacobi": lambda: pp_pc_jacobi(problem, grid, OuterConfig(max_inner=3000), workers=workers),
    "PP-PC MH Newton": lambda: pppc_mh_newton(problem, grid, workers=workers),
    "TP MH": lambda: tp_mh(problem, grid, workers=workers),
}

print(f"{'method':18s} {'iters':>5s} {'effective':>10s} {'total':>8s} {'seconds':>8s}")
solutions = {}
for name, run in runs.items():
    start = time.perf_counter()
    rep = run()
    elapsed = time.perf_counter() - start
    solutions[name] = rep.solution[:: len(rep.solution) // 10]
    print(f"{name:18s} {rep.outer_iterations:5d} {rep.counters.effective():10d} "
          f"{rep.counters.total():8d} {elapsed:8.2f}")

print("\nvalues at the ten synchronization points (units of 1e-5):")
for name, sol in solutions.items():
    print(f"{name:18s}", np.array2string(sol[:, 0] / 1e-5, precision=3, max_line_width=200))
