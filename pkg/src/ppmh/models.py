"""Benchmark problems and convergence constants of the simplified Newton method."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PeriodicProblem, make_problem_linear, make_problem_scalar_nonlinear


def _horner(coeffs, x):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _derive(coeffs):
    return tuple(k * c for k, c in enumerate(coeffs))[1:] or (0.0,)


class KappaPiecewise:
    """Piecewise cubic ``kappa(s)``, ``s >= 0``, saturating at 1.02 from ``s = 0.2``.

    Each branch is a polynomial in ``s - start`` (ascending coefficients), so
    derivatives are exact.  Calls accept scalars or arrays and use ``|s|``.
    """

    breakpoints = (0.1, 0.2)
    branches = (
        (0.0, (1.0, 0.0, 1.5, -5.0)),
        (0.1, (1.01, 0.15, 0.0, -5.0)),
        (0.2, (1.02,)),
    )

    def __init__(self):
        self._coeffs = [[c for _, c in self.branches]]
        for _ in range(2):
            self._coeffs.append([_derive(c) for c in self._coeffs[-1]])
        self._starts = [s for s, _ in self.branches]

    def _eval(self, order, s):
        coeffs = self._coeffs[order]
        if np.ndim(s) == 0:
            s = abs(float(s))
            k = 0 if s < self.breakpoints[0] else 1 if s < self.breakpoints[1] else 2
            return _horner(coeffs[k], s - self._starts[k])
        s = np.abs(np.asarray(s, dtype=float))
        k = np.searchsorted(self.breakpoints, s, side="right")
        out = np.empty_like(s)
        for b in range(3):
            mask = k == b
            out[mask] = _horner(coeffs[b], s[mask] - self._starts[b])
        return out

    def __call__(self, s):
        return self._eval(0, s)

    def derivative(self, s):
        return self._eval(1, s)

    def second_derivative(self, s):
        return self._eval(2, s)


def kappa_d(kappa, kappa_prime, x):
    """``kappa'(|x|) |x| + kappa(|x|)``, the derivative of ``x -> kappa(|x|) x``."""
    s = np.abs(x)
    return kappa_prime(s) * s + kappa(s)


def kappa_d_prime(kappa_prime, kappa_second, x):
    """Derivative of `kappa_d`: ``sign(x) (kappa''(|x|) |x| + 2 kappa'(|x|))``."""
    s = np.abs(x)
    return np.sign(x) * (kappa_second(s) * s + 2.0 * kappa_prime(s))


def rl_circuit_1d(m=0.1, amplitude=1e-3, period=0.02, kappa=None):
    """Nonlinear RL circuit ``m u' + kappa(|u|) u = amplitude sin(2 pi t / T)``."""
    kappa = kappa or KappaPiecewise()
    omega = 2 * math.pi / period

    def rhs(t):
        return amplitude * math.sin(omega * t)

    return make_problem_scalar_nonlinear(m, kappa, kappa.derivative, rhs, period, name="rl1d")


@dataclass(frozen=True)
class ConvergenceConstants:
    """Constants of the simplified Newton convergence theorem.

    ``delta0 = L2 / c1`` and ``h0 = delta0 * rho1``; the ball radius ``rho`` is
    only defined when ``h0 <= 0.5`` and is ``None`` otherwise.
    """

    c1: float
    L2: float
    delta0: float
    h0: float
    rho: Optional[float]
    rho1: float

    @property
    def hypothesis_holds(self):
        return self.h0 <= 0.5

    @property
    def verdict(self):
        return "h0 <= 1/2: convergence guaranteed" if self.hypothesis_holds else "h0 > 1/2: no convergence guarantee"


def convergence_constants(c1, L2, rho1):
    delta0 = L2 / c1
    h0 = delta0 * rho1
    if h0 > 0.5:
        rho = None
    elif delta0 == 0:
        rho = rho1
    else:
        rho = (1.0 - math.sqrt(1.0 - 2.0 * h0)) / delta0
    return ConvergenceConstants(c1, L2, delta0, h0, rho, rho1)


def estimate_constants(kappa, domain=(-0.25, 0.25), grid_points=1001, rho1=0.0,
                       kappa_prime=None, kappa_second=None):
    """Sample ``kappa_d`` on `domain` to get ``c1 = min kappa_d`` and ``L2 = max |kappa_d'|``.

    Derivatives are taken from ``kappa.derivative`` / ``kappa.second_derivative``
    when available (or passed explicitly); otherwise ``kappa_d'`` falls back to
    central differences.
    """
    if grid_points < 100:
        raise ValueError("grid_points must be >= 100")
    kappa_prime = kappa_prime or getattr(kappa, "derivative", None)
    kappa_second = kappa_second or getattr(kappa, "second_derivative", None)
    x = np.linspace(domain[0], domain[1], grid_points)
    if kappa_prime is None:
        kappa_prime = _central_difference(kappa)
    kd = np.asarray(kappa_d(kappa, kappa_prime, x), dtype=float)
    if kappa_second is not None:
        slope = kappa_d_prime(kappa_prime, kappa_second, x)
    else:
        h = 1e-6 * (domain[1] - domain[0])
        slope = (kappa_d(kappa, kappa_prime, x + h) - kappa_d(kappa, kappa_prime, x - h)) / (2 * h)
    return convergence_constants(float(kd.min()), float(np.max(np.abs(slope))), rho1)


def _central_difference(f, h=1e-7):
    def df(s):
        s = np.asarray(s, dtype=float)
        return (f(s + h) - f(np.abs(s - h))) / (2 * h)
    return df


def nonlinear_diffusion_1d(d, period=0.2, amplitude=3.0, gradient_scale=1.0, kappa=None):
    """Finite-volume ``u_t - (kappa(|u_x| / s) u_x)_x = f(t, x)`` on (0, 1), zero Dirichlet ends.

    ``d`` interior nodes, spacing ``h = 1/(d+1)``, lumped mass ``M = h I`` and
    source ``f = amplitude sin(2 pi t / T) sin(pi x)``.  The coefficient is
    evaluated on edges, so ``K(u)`` is symmetric tridiagonal and ``K_d`` has the
    same stencil with ``kappa`` replaced by ``kappa_d``.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    kappa = kappa or KappaPiecewise()
    hx = 1.0 / (d + 1)
    x = hx * np.arange(1, d + 1)
    profile = hx * amplitude * np.sin(np.pi * x)
    omega = 2 * np.pi / period
    idx = np.arange(d)

    def edge_gradients(u):
        return np.diff(np.concatenate(([0.0], u, [0.0]))) / hx

    def assemble(k):
        A = np.zeros((d, d))
        A[idx, idx] = (k[:-1] + k[1:]) / hx
        A[idx[:-1], idx[:-1] + 1] = -k[1:-1] / hx
        A[idx[1:], idx[1:] - 1] = -k[1:-1] / hx
        return A

    def stiffness(u):
        return assemble(kappa(edge_gradients(u) / gradient_scale))

    def jacobian(u):
        g = edge_gradients(u) / gradient_scale
        return assemble(kappa_d(kappa, kappa.derivative, g))

    def rhs(t):
        return math.sin(omega * t) * profile

    return PeriodicProblem(d, float(period), hx * np.eye(d), stiffness, jacobian, rhs,
                           name=f"diffusion1d:{d}")


def _harmonic_rhs(period, sin=None, cos=None, const=None, d=None):
    omega = 2 * np.pi / period
    parts = [np.zeros(d) if v is None else np.asarray(v, dtype=float) for v in (sin, cos, const)]

    def rhs(t):
        return parts[0] * math.sin(omega * t) + parts[1] * math.cos(omega * t) + parts[2]

    return rhs


def random_linear(d, seed=0, period=1.0):
    """Random linear test problem with SPD stiffness and a one-harmonic source."""
    rng = np.random.default_rng(seed)
    M = np.diag(rng.uniform(0.5, 1.5, d))
    A = rng.standard_normal((d, d))
    K = A @ A.T / d + 0.5 * np.eye(d)
    rhs = _harmonic_rhs(period, rng.standard_normal(d), rng.standard_normal(d), d=d)
    return make_problem_linear(M, K, rhs, period, name=f"random_linear:{d}:{seed}")


def load_linear_problem(path):
    """Linear problem from a JSON file.

    Keys: ``M`` and ``K`` (square nested lists), ``period``, and optional
    ``rhs`` with any of ``sin``, ``cos``, ``const`` (length-d lists); the
    source is ``sin * sin(2 pi t/T) + cos * cos(2 pi t/T) + const``.
    """
    with open(path) as fh:
        data = json.load(fh)
    unknown = set(data) - {"M", "K", "period", "rhs"}
    if unknown:
        raise ValueError(f"unknown keys in linear problem file: {sorted(unknown)}")
    K = np.atleast_2d(np.asarray(data["K"], dtype=float))
    d = K.shape[0]
    rhs_spec = data.get("rhs", {})
    unknown = set(rhs_spec) - {"sin", "cos", "const"}
    if unknown:
        raise ValueError(f"unknown rhs keys: {sorted(unknown)}")
    rhs = _harmonic_rhs(float(data["period"]), d=d, **rhs_spec)
    return make_problem_linear(data["M"], K, rhs, float(data["period"]), name=f"linear:{path}")
