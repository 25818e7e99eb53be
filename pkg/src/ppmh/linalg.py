"""Spectrum, unitary DFT on block vectors and block-cyclic solves.

A block-cyclic system has the constant block ``Q`` on its diagonal and ``-C``
on the block subdiagonal and in the top-right corner, so row ``n`` reads
``Q U_n - C U_{n-1}`` with ``U_{-1} = U_{N-1}``.  The unitary DFT turns it into
``N`` independent ``d x d`` systems, one per frequency.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import SingularMatrixError
from .metrics import SolveCounter, Tally

log = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14
IMAG_WARN_RTOL = 1e-8


class ImaginaryResidueWarning(RuntimeWarning):
    """Inverse DFT of a supposedly real signal left a large imaginary part."""


@dataclass(frozen=True)
class Spectrum:
    """Integer harmonics ``p`` in ascending order and ``omega = 2 pi p / T``."""

    indices: np.ndarray
    frequencies: np.ndarray
    period: float

    @property
    def size(self):
        return len(self.indices)

    @property
    def fft_order(self):
        """Position of each harmonic in numpy's FFT output."""
        return self.indices % self.size


def build_spectrum(N, T):
    """``p = [-floor(N/2) + delta, ..., floor(N/2)]`` with ``delta = 1`` for even ``N``."""
    if N < 1 or not T > 0:
        raise ValueError("need N >= 1 and T > 0")
    delta = 1 if N % 2 == 0 else 0
    p = np.arange(-(N // 2) + delta, N // 2 + 1)
    return Spectrum(p, 2 * np.pi * p / T, float(T))


def _as_blocks(x, N):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != N:
        raise ValueError(f"expected a block vector with {N} blocks, got shape {x.shape}")
    return x


def dft_forward(x, spectrum):
    """``xhat_j = N^{-1/2} sum_q x_q exp(-i omega_j T_q)``, rows in spectrum order."""
    x = _as_blocks(x, spectrum.size)
    return np.fft.fft(x, axis=0, norm="ortho")[spectrum.fft_order]


def dft_inverse(xhat, spectrum, real=True):
    """Adjoint of `dft_forward`.

    With ``real=True`` the imaginary part is dropped; a residue above
    ``1e-8 * ||xhat||`` raises an `ImaginaryResidueWarning`.
    """
    xhat = _as_blocks(xhat, spectrum.size)
    X = np.empty(xhat.shape, dtype=complex)
    X[spectrum.fft_order] = xhat
    x = np.fft.ifft(X, axis=0, norm="ortho")
    if not real:
        return x
    residue = np.linalg.norm(x.imag)
    scale = np.linalg.norm(xhat)
    if residue > IMAG_WARN_RTOL * scale:
        warnings.warn(
            f"inverse DFT imaginary residue {residue:.3e} exceeds {IMAG_WARN_RTOL:g} relative",
            ImaginaryResidueWarning,
            stacklevel=2,
        )
    else:
        log.debug("inverse DFT discarded imaginary residue %.3e", residue)
    return np.ascontiguousarray(x.real)


@dataclass(frozen=True)
class BlockCyclicSystem:
    diag_block: np.ndarray
    offdiag_block: np.ndarray
    num_blocks: int

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.diag_block))
        C = np.atleast_2d(np.asarray(self.offdiag_block))
        if Q.shape != C.shape or Q.shape[0] != Q.shape[1]:
            raise ValueError("diagonal and off-diagonal blocks must be square and equal in shape")
        object.__setattr__(self, "diag_block", Q)
        object.__setattr__(self, "offdiag_block", C)

    @property
    def block_dim(self):
        return self.diag_block.shape[0]

    def matvec(self, U):
        U = _as_blocks(U, self.num_blocks)
        return U @ self.diag_block.T - np.roll(U, 1, axis=0) @ self.offdiag_block.T

    def to_dense(self):
        """Materialized ``N d x N d`` matrix (test oracles only)."""
        N, d = self.num_blocks, self.block_dim
        dtype = np.result_type(self.diag_block, self.offdiag_block)
        G = np.zeros((N * d, N * d), dtype=dtype)
        for n in range(N):
            G[n * d:(n + 1) * d, n * d:(n + 1) * d] += self.diag_block
            m = (n - 1) % N
            G[n * d:(n + 1) * d, m * d:(m + 1) * d] -= self.offdiag_block
        return G


def diagonal_blocks(system, spectrum, dt):
    """Frequency blocks ``Q - C exp(-i dt omega_j)``, shape ``(N, d, d)``."""
    if spectrum.size != system.num_blocks:
        raise ValueError("spectrum size differs from the number of blocks")
    phase = np.exp(-1j * dt * spectrum.frequencies)
    return system.diag_block[None, :, :] - phase[:, None, None] * system.offdiag_block[None, :, :]


class DenseLU:
    """LU factorization with partial pivoting; 1x1 matrices are kept as a scalar."""

    def __init__(self, A, index=None):
        A = np.atleast_2d(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        norm = np.abs(A).sum(axis=0).max()
        if A.shape == (1, 1):
            self._scalar = A[0, 0]
            pivots = np.array([self._scalar])
        else:
            self._scalar = None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                self._lu = scipy.linalg.lu_factor(A, check_finite=False)
            pivots = np.diag(self._lu[0])
        if norm == 0 or np.min(np.abs(pivots)) <= PIVOT_RTOL * norm:
            where = "" if index is None else f" (frequency index {index})"
            raise SingularMatrixError(f"matrix is numerically singular{where}", index=index)

    @property
    def factors(self):
        if self._scalar is not None:
            return np.array([[self._scalar]])
        return self._lu[0]

    def solve(self, b):
        if self._scalar is not None:
            return np.asarray(b) / self._scalar
        return scipy.linalg.lu_solve(self._lu, b, check_finite=False)


def solve_dense(A, b, tally=None):
    """Factor and solve ``A x = b``; counts one factor-solve on `tally`."""
    lu = DenseLU(A)
    if tally is not None:
        tally.factor_solves += 1
    return lu.solve(b)


class MultiHarmonicSolver:
    """Solves a fixed block-cyclic system for many right-hand sides.

    Each frequency block is factored the first time it is needed and reused
    afterwards; a first solve counts as a factor-solve and every later solve as
    a cached re-solve on the tally of the worker owning that frequency.
    """

    def __init__(self, system, spectrum, dt, pool=None):
        if spectrum.size != system.num_blocks:
            raise ValueError("spectrum size differs from the number of blocks")
        self.system = system
        self.spectrum = spectrum
        self.dt = dt
        self.pool = pool
        self.blocks = diagonal_blocks(system, spectrum, dt)
        self._lu = [None] * spectrum.size

    def factorizations(self):
        """The cached LU factors (``None`` where not yet factored)."""
        return [None if lu is None else lu.factors for lu in self._lu]

    def _solve_one(self, j, rhs_hat, tally):
        lu = self._lu[j]
        if lu is None:
            lu = self._lu[j] = DenseLU(self.blocks[j], index=j)
            tally.factor_solves += 1
        else:
            tally.cached_resolves += 1
        return lu.solve(rhs_hat[j])

    def solve(self, rhs, counter=None, real=True):
        """Time-domain solution ``U`` of the block-cyclic system with right-hand side `rhs`."""
        rhs = _as_blocks(rhs, self.system.num_blocks)
        if counter is None:
            counter = SolveCounter(self.pool.workers if self.pool else 1)
        rhs_hat = dft_forward(rhs, self.spectrum)
        if self.pool is None:
            tally = Tally()
            U_hat = [self._solve_one(j, rhs_hat, tally) for j in range(self.spectrum.size)]
            counter.per_worker[0] += tally
        else:
            U_hat = self.pool.map(lambda j, t: self._solve_one(j, rhs_hat, t), self.spectrum.size, counter)
        return dft_inverse(np.array(U_hat), self.spectrum, real=real)


def solve_block_cyclic_mh(system, rhs, spectrum, grid, counter=None, pool=None, solver=None):
    """One-shot multi-harmonic solve; pass `solver` to reuse cached factorizations."""
    if solver is None:
        solver = MultiHarmonicSolver(system, spectrum, grid.coarse_step, pool=pool)
    return solver.solve(rhs, counter)
