"""How the linearization point affects the simplified Newton method.

Every fine step of one period is one block of the all-at-once periodic
system.  The Jacobian is frozen at ``[z, ..., z]`` and factored once per
frequency.  Near ``z = 0`` and in the saturated region ``|z| >= 0.2`` the
frozen Jacobian is close to the true one and few iterations are needed.  The
``h0`` column confirms the Kantorovich-type bound ``h0 <= 1/2`` everywhere.
"""
import numpy as np

from ppmh import KappaPiecewise, TimeGrid, estimate_constants, rl_circuit_1d, tp_mh

problem = rl_circuit_1d()
grid = TimeGrid(10, 1, problem.period)
kappa = KappaPiecewise()

consts = estimate_constants(kappa)
print(f"c1 = {consts.c1}, L2 = {consts.L2:.4f}, delta0 = {consts.delta0:.4f}\n")
print(f"{'z':>6s} {'iters':>5s} {'rho1':>8s} {'h0':>8s}")
for z in np.round(np.arange(-24, 25, 2) * 0.01, 2):
    rep = tp_mh(problem, grid, z=z)
    c = estimate_constants(kappa, rho1=rep.extras["rho1"])
    print(f"{z:6.2f} {rep.outer_iterations:5d} {c.rho1:8.4f} {c.h0:8.4f}")
