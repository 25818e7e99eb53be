"""Acceptance checks, one per criterion; the summary hook prints a pass/fail line for each."""
import itertools
import time

import numpy as np
import pytest

from oracles import block_cyclic_dense, dft_matrix
from ppmh import (BlockCyclicSystem, OuterConfig, TimeGrid, build_spectrum, estimate_constants,
                  linear_pppc_mh, nonlinear_diffusion_1d, pp_ic, pp_pc_jacobi, pppc_mh_newton,
                  rl_circuit_1d, sequential_steady_state, solve_block_cyclic_mh, tp_mh)
from ppmh.algorithms import splitting_iteration
from ppmh.linalg import diagonal_blocks, dft_forward, dft_inverse
from ppmh.metrics import mixed_norm
from ppmh.models import KappaPiecewise, random_linear

criterion = pytest.mark.criterion

REFERENCE_U = 1e-5 * np.array([-3.02, -1.8, 0.1, 1.9, 3.07, 3.01, 1.8, -0.1, -1.96, -3.07])
Z_GRID = np.round(np.arange(-24, 25) * 0.01, 12)


@pytest.fixture(scope="module")
def rl1d():
    return rl_circuit_1d()


@pytest.fixture(scope="module")
def z_sweep(rl1d):
    start = time.perf_counter()
    grid = TimeGrid(10, 1, rl1d.period)
    runs = {}
    for z in Z_GRID:
        try:
            rep = tp_mh(rl1d, grid, z=z)
            runs[z] = (rep.outer_iterations, rep.converged, rep.extras["rho1"])
        except Exception:
            runs[z] = (None, False, np.nan)
    return runs, time.perf_counter() - start


@criterion(1, "sequential steady state of rl1d converges in exactly 10 periods, < 10 s")
def test_sequential_rl1d_periods(rl1d):
    start = time.perf_counter()
    rep = sequential_steady_state(rl1d, TimeGrid.from_fine_step(10, 1e-5, 0.02))
    elapsed = time.perf_counter() - start
    print(f"k* = {rep.outer_iterations}, last error {rep.error_history[-1]:.4f}, {elapsed:.2f} s")
    assert rep.converged
    assert rep.outer_iterations == 10
    assert elapsed < 10


@criterion(2, "rl1d periodic solution at the N=10 coarse points matches the reference values within 2%")
def test_periodic_solution_values(rl1d):
    start = time.perf_counter()
    rep = tp_mh(rl1d, TimeGrid(10, 1, rl1d.period))
    elapsed = time.perf_counter() - start
    u = rep.solution[:, 0]
    dev = np.abs(u - REFERENCE_U)
    print("computed/1e-5:", np.round(u / 1e-5, 4))
    print("deviation / max|reference|:", np.round(dev / np.abs(REFERENCE_U).max(), 4))
    assert rep.converged and elapsed < 10
    assert np.all(dev <= 0.02 * np.abs(REFERENCE_U).max())


@criterion(3, "TP Newton z-sweep: 2 iterations for |z|<=0.1 and |z|>=0.2, 3..5 between, all converged, < 2 min")
def test_newton_iteration_map(z_sweep):
    runs, elapsed = z_sweep
    counts = {z: r[0] for z, r in runs.items()}
    print("iterations:", {float(z): c for z, c in counts.items()})
    mismatches = []
    for z, c in counts.items():
        if abs(z) <= 0.1 + 1e-12 or abs(z) >= 0.2 - 1e-12:
            if c != 2:
                mismatches.append((float(z), c))
        elif c is None or not 3 <= c <= 5:
            mismatches.append((float(z), c))
    print("mismatches (z, iterations):", mismatches)
    assert all(r[1] for r in runs.values())
    assert elapsed < 120
    assert not mismatches


@criterion(4, "z-sweep: h0 < 0.5 for every z, c1 == 1 exactly, L2 in [0.58, 0.62]")
def test_newton_convergence_hypothesis(z_sweep):
    runs, _ = z_sweep
    kappa = KappaPiecewise()
    consts = [estimate_constants(kappa, (-0.25, 0.25), 1001, rho1=r[2]) for r in runs.values()]
    h0 = np.array([c.h0 for c in consts])
    print(f"c1 = {consts[0].c1!r}, L2 = {consts[0].L2:.6f}, delta0 = {consts[0].delta0:.6f}, max h0 = {h0.max():.4f}")
    assert consts[0].c1 == 1.0
    assert 0.58 <= consts[0].L2 <= 0.62
    assert np.all(h0 < 0.5)


def _random_pairs(count=50, seed=5):
    rng = np.random.default_rng(seed)
    shapes = list(itertools.product((2, 3, 4, 5, 8), (1, 2, 3)))
    for i in range(count):
        N, d = shapes[i % len(shapes)]
        C = rng.standard_normal((d, d))
        Q = C + rng.standard_normal((d, d)) + 3 * np.eye(d)
        yield N, d, Q, C, rng


@criterion(5, "F G F^H equals blockdiag(Q - C exp(-i dT w_j)) to 1e-12 ||G||_F on 50 random pairs, < 5 s")
def test_diagonalization_identity():
    start = time.perf_counter()
    worst = 0.0
    for N, d, Q, C, _ in _random_pairs():
        T = 1.0
        F = dft_matrix(N, T, d)
        G = block_cyclic_dense(Q, C, N)
        blocks = diagonal_blocks(BlockCyclicSystem(Q, C, N), build_spectrum(N, T), T / N)
        D = np.zeros((N * d, N * d), dtype=complex)
        for j in range(N):
            D[j * d:(j + 1) * d, j * d:(j + 1) * d] = blocks[j]
        err = np.linalg.norm(F @ G @ F.conj().T - D) / np.linalg.norm(G)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    print(f"worst relative error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed < 5


@criterion(6, "multi-harmonic solve matches dense LU on the materialized system to 1e-10 relative")
def test_mh_solve_vs_dense():
    worst = 0.0
    for N, d, Q, C, rng in _random_pairs():
        grid = TimeGrid(N, 1, 1.0)
        rhs = rng.standard_normal((N, d))
        U = solve_block_cyclic_mh(BlockCyclicSystem(Q, C, N), rhs, build_spectrum(N, 1.0), grid)
        ref = np.linalg.solve(block_cyclic_dense(Q, C, N), rhs.ravel()).reshape(N, d)
        worst = max(worst, np.linalg.norm(U - ref) / np.linalg.norm(ref))
    print(f"worst relative difference {worst:.2e}")
    assert worst <= 1e-10


@criterion(7, "FFT DFT equals the naive DFT matrix and is unitary to 1e-12, N <= 64, d <= 4")
def test_fft_vs_naive():
    rng = np.random.default_rng(7)
    worst_fwd = worst_unit = 0.0
    for N in list(range(1, 17)) + [31, 32, 63, 64]:
        for d in (1, 2, 3, 4):
            T = rng.uniform(0.1, 10)
            x = rng.standard_normal((N, d))
            F = dft_matrix(N, T, d)
            spec = build_spectrum(N, T)
            worst_fwd = max(worst_fwd, np.abs(dft_forward(x, spec).ravel() - F @ x.ravel()).max())
            worst_unit = max(worst_unit, np.abs(F @ F.conj().T - np.eye(N * d)).max())
            worst_unit = max(worst_unit, np.abs(dft_inverse(dft_forward(x, spec), spec) - x).max())
    print(f"forward {worst_fwd:.2e}, unitarity/roundtrip {worst_unit:.2e}")
    assert worst_fwd <= 1e-12
    assert worst_unit <= 1e-12


@criterion(8, "linear problem: Newton inner loop takes exactly 1 iteration and matches linear PP-PC MH to 1e-12")
def test_affine_exactness():
    problem = random_linear(4, seed=3)
    grid = TimeGrid(8, 16, problem.period)
    newton = pppc_mh_newton(problem, grid)
    linear = linear_pppc_mh(problem, grid)
    print("inner iterations:", newton.inner_iterations)
    assert newton.converged and linear.converged
    assert all(s == 1 for s in newton.inner_iterations)
    assert len(newton.iterates) == len(linear.iterates)
    for a, b in zip(newton.iterates, linear.iterates):
        assert np.abs(a - b).max() <= 1e-12 * max(1.0, np.abs(b).max())


@criterion(9, "coarse equals fine: linear PP-PC MH converges in 1 outer iteration")
def test_coarse_equals_fine():
    problem = random_linear(4, seed=3)
    rep = linear_pppc_mh(problem, TimeGrid(8, 1, problem.period))
    print("errors:", rep.error_history)
    assert rep.converged and rep.outer_iterations == 1


def _sample(rep, N):
    sol = np.asarray(rep.solution)
    return sol[:: len(sol) // N][:N]


def _all_methods(problem, grid_for):
    jacobi_cfg = OuterConfig(max_inner=3000)
    out = {}
    for N in (5, 10):
        g = grid_for(N)
        out[f"sequential/N={N}"] = sequential_steady_state(problem, g)
        out[f"pp_ic/N={N}"] = pp_ic(problem, g)
        out[f"pp_pc_jacobi/N={N}"] = pp_pc_jacobi(problem, g, jacobi_cfg)
        out[f"pppc_mh_newton/N={N}"] = pppc_mh_newton(problem, g)
        out[f"tp_mh/N={N}"] = tp_mh(problem, g)
    return out


@criterion(10, "all drivers agree pairwise (rTol 2.5e-2, aTol 2.5e-5) on rl1d and diffusion1d:21, < 10 min")
@pytest.mark.parametrize("name", ["rl1d", "diffusion1d:21"])
def test_cross_method_agreement(name):
    start = time.perf_counter()
    if name == "rl1d":
        problem = rl_circuit_1d()
        reports = _all_methods(problem, lambda N: TimeGrid.from_fine_step(N, 1e-5, problem.period))
    else:
        problem = nonlinear_diffusion_1d(21)
        reports = _all_methods(problem, lambda N: TimeGrid(N, 200 // N, problem.period))
    assert all(r.converged for r in reports.values())
    samples = {k: _sample(r, 5) for k, r in reports.items()}
    worst, pair = 0.0, None
    for a, b in itertools.permutations(samples, 2):
        e = max(mixed_norm(x, y, 2.5e-5, 2.5e-2) for x, y in zip(samples[a], samples[b]))
        if e > worst:
            worst, pair = e, (a, b)
    elapsed = time.perf_counter() - start
    print(f"{name}: worst pairwise norm {worst:.3f} for {pair}, {elapsed:.1f} s")
    assert worst < 1
    assert elapsed < 300


@criterion(11, "rl1d: PP-PC MH Newton outer iterations non-increasing over N = 5, 10, 20")
def test_outer_iterations_monotone(rl1d):
    counts = [pppc_mh_newton(rl1d, TimeGrid.from_fine_step(N, 1e-5, rl1d.period)).outer_iterations
              for N in (5, 10, 20)]
    print("outer iterations:", counts)
    assert counts[0] >= counts[1] >= counts[2]


def _parallel_runs(workers):
    rl = rl_circuit_1d()
    grid = TimeGrid.from_fine_step(10, 1e-4, rl.period)
    diff = nonlinear_diffusion_1d(9)
    dgrid = TimeGrid(10, 4, diff.period)
    H = BlockCyclicSystem(diff.mass / dgrid.coarse_step + diff.stiffness(np.zeros(9)),
                          diff.mass / dgrid.coarse_step, 10)
    return [
        sequential_steady_state(rl, grid, workers=workers),
        pp_ic(rl, grid, workers=workers),
        pp_pc_jacobi(rl, grid, OuterConfig(max_inner=3000), workers=workers),
        pppc_mh_newton(rl, grid, workers=workers),
        tp_mh(rl, grid, workers=workers),
        pppc_mh_newton(diff, dgrid, workers=workers),
        splitting_iteration(diff, dgrid, H, workers=workers),
        linear_pppc_mh(random_linear(3, seed=1), TimeGrid(8, 4, 1.0), workers=workers),
    ]


@criterion(12, "counters: effective <= total <= workers*effective, rerun-stable; 1 vs 8 workers iterates agree to 1e-13")
def test_counter_invariants():
    serial = _parallel_runs(1)
    par = _parallel_runs(8)
    again = _parallel_runs(8)
    for a, b, c in zip(serial, par, again):
        cnt = b.counters
        assert cnt.effective() <= cnt.total() <= cnt.workers * cnt.effective()
        assert cnt.to_dict() == c.counters.to_dict()
        assert a.counters.total() == b.counters.total()
        assert len(a.iterates) == len(b.iterates)
        for x, y in zip(a.iterates, b.iterates):
            assert np.abs(x - y).max() <= 1e-13 * max(1.0, np.abs(x).max())
        np.testing.assert_allclose(a.solution, b.solution, rtol=0, atol=1e-13 * max(1.0, np.abs(a.solution).max()))
        print(f"{a.method}: effective {cnt.effective()} total {cnt.total()} (workers 8), serial {a.counters.total()}")
