"""Nonlinear Gronwall bound U(t) <= Phi^-1(Phi(C0) + int_0^t psi), Phi(l) = int_0^l dk/g(k),
its closed form for power kernels and nonlinearities, and a numerical certifier
driven by Picard iteration of the integral map."""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import sympy
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import HypothesisError, ValidationError


# -- descriptors -------------------------------------------------------------------
@dataclass(frozen=True)
class PowerKernel:
    """psi(s) = C1 s^-beta, beta in (0, 1)."""

    C1: float
    beta: float

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValidationError("kernel exponent beta must lie in (0, 1)")
        if not self.C1 >= 0:
            raise ValidationError("kernel constant C1 must be nonnegative")

    def __call__(self, s):
        return self.C1 * np.asarray(s, dtype=float) ** -self.beta

    def integral(self, t):
        return self.C1 * np.asarray(t, dtype=float) ** (1 - self.beta) / (1 - self.beta)

    def cell_weights(self, mesh):
        """Weights (left, right) with int_a^b psi L = wl f(a) + wr f(b) for linear L."""
        a, b = mesh[:-1], mesh[1:]
        be = self.beta
        m0 = (b ** (1 - be) - a ** (1 - be)) / (1 - be)
        m1 = (b ** (2 - be) - a ** (2 - be)) / (2 - be)
        h = b - a
        return self.C1 * (b * m0 - m1) / h, self.C1 * (m1 - a * m0) / h


@dataclass(frozen=True)
class TabulatedKernel:
    """psi given by nonnegative samples on a mesh starting at 0, linear in between."""

    nodes: tuple
    values: tuple

    def __post_init__(self):
        s, v = np.asarray(self.nodes, float), np.asarray(self.values, float)
        if s.ndim != 1 or s.shape != v.shape or s.size < 2 or s[0] != 0 or np.any(np.diff(s) <= 0):
            raise ValidationError("tabulated kernel needs increasing nodes from 0 and matching values")
        if np.any(v < 0):
            raise ValidationError("kernel values must be nonnegative")

    def __call__(self, s):
        return np.interp(s, self.nodes, self.values)

    def integral(self, t):
        s, v = np.asarray(self.nodes), np.asarray(self.values)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(s))])
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(s, t, side="right") - 1, 0, s.size - 2)
        dt = t - s[i]
        slope = (v[i + 1] - v[i]) / (s[i + 1] - s[i])
        return cum[i] + v[i] * dt + 0.5 * slope * dt * dt

    def cell_weights(self, mesh):
        # trapezoid on the product; the kernel is bounded so no endpoint loss
        h = np.diff(mesh)
        return 0.5 * h * self(mesh[:-1]), 0.5 * h * self(mesh[1:])


@dataclass(frozen=True)
class PowerNonlinearity:
    """g(k) = k^gamma, gamma in (0, 1)."""

    gamma: float

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValidationError("nonlinearity exponent gamma must lie in (0, 1)")

    def __call__(self, k):
        return np.asarray(k, dtype=float) ** self.gamma


@dataclass(frozen=True)
class TabulatedNonlinearity:
    """g given by strictly increasing samples from k = 0 with g(0) > 0 (so 1/g is
    bounded), monotone cubic in between and linear past the last node."""

    nodes: tuple
    values: tuple

    def __post_init__(self):
        k, v = np.asarray(self.nodes, float), np.asarray(self.values, float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2 or k[0] != 0 or np.any(np.diff(k) <= 0):
            raise ValidationError("tabulated nonlinearity needs increasing nodes from 0")
        if np.any(np.diff(v) <= 0) or v[0] <= 0:
            raise ValidationError("tabulated nonlinearity must be positive and strictly increasing")

    @cached_property
    def _spline(self):
        return PchipInterpolator(np.asarray(self.nodes, float), np.asarray(self.values, float))

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        kn, vn = np.asarray(self.nodes), np.asarray(self.values)
        inside = self._spline(np.clip(k, 0, kn[-1]))
        slope = (vn[-1] - vn[-2]) / (kn[-1] - kn[-2])
        return np.where(k > kn[-1], vn[-1] + slope * (k - kn[-1]), inside)


@dataclass(frozen=True)
class GronwallProblem:
    C0: float
    T: float
    psi: object
    g: object

    def __post_init__(self):
        if not self.C0 > 0:
            raise ValidationError("C0 must be positive")
        if not self.T > 0:
            raise ValidationError("T must be positive")
        if not isinstance(self.psi, (PowerKernel, TabulatedKernel)):
            raise ValidationError("psi must be a PowerKernel or TabulatedKernel")
        if not isinstance(self.g, (PowerNonlinearity, TabulatedNonlinearity)):
            raise ValidationError("g must be a PowerNonlinearity or TabulatedNonlinearity")


def power_problem(C0, C1, beta, gamma, T):
    return GronwallProblem(float(C0), float(T), PowerKernel(float(C1), float(beta)),
                           PowerNonlinearity(float(gamma)))


# -- Phi and its inverse ------------------------------------------------------------
def phi(problem, l):
    """Phi(l) = int_0^l dk / g(k)."""
    if not l >= 0:
        raise ValidationError("Phi is defined for l >= 0")
    g = problem.g
    if isinstance(g, PowerNonlinearity):
        return float(l ** (1 - g.gamma) / (1 - g.gamma))
    nodes = [k for k in g.nodes if 0 < k < l]
    return float(integrate.quad(lambda k: 1.0 / g(k), 0.0, l, points=nodes or None,
                                limit=200, epsabs=0, epsrel=1e-13)[0])


def phi_inverse(problem, y, rtol=1e-12):
    """Solve Phi(l) = y by bracketing, bisection and Newton polishing."""
    if not y >= 0:
        raise ValidationError("Phi takes values in [0, inf); y must be >= 0")
    if y == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while phi(problem, hi) < y:
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise ValidationError("y lies outside the range of Phi")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if phi(problem, mid) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-3 * hi:
            break
    x = 0.5 * (lo + hi)
    for _ in range(50):
        step = (phi(problem, x) - y) * float(problem.g(x))
        nx = min(max(x - step, lo), hi)
        if abs(nx - x) <= rtol * 1e-2 * abs(nx):
            x = nx
            break
        x = nx
    return float(x)


def gronwall_bound(problem, t):
    if not 0 <= t <= problem.T * (1 + 1e-14):
        raise ValidationError(f"t must lie in [0, T = {problem.T}]")
    if t == 0:
        return float(problem.C0)
    extra = float(problem.psi.integral(t))
    if extra == 0:
        return float(problem.C0)
    return phi_inverse(problem, phi(problem, problem.C0) + extra)


def power_case_bound(C0, C1, beta, gamma, t):
    """(1-gamma)^(1/(1-gamma)) [C0^(1-gamma)/(1-gamma) + C1 t^(1-beta)/(1-beta)]^(1/(1-gamma)).

    Accepts sympy expressions as well as numbers."""
    numeric = all(isinstance(x, (int, float, np.floating, np.integer))
                  for x in (C0, C1, beta, gamma, t))
    if numeric:
        if not (0 < beta < 1 and 0 < gamma < 1):
            raise ValidationError("beta and gamma must lie in (0, 1)")
        if not (C0 > 0 and C1 >= 0 and t >= 0):
            raise ValidationError("need C0 > 0, C1 >= 0, t >= 0")
    e = 1 / (1 - gamma)
    inner = C0 ** (1 - gamma) / (1 - gamma) + C1 * t ** (1 - beta) / (1 - beta)
    return (1 - gamma) ** e * inner ** e


def monotonicity_form_check(q=8, dim=3):
    """Symbolic check that the power case with gamma = (q-2)/q, beta = 2N/q,
    C0 = omega_N, C1 = c t reproduces (2/q)^(q/2) [q/2 omega^(2/q) + c/(1-beta) t^(2-beta)]^(q/2)."""
    om, c, t = sympy.symbols("omega c t", positive=True)
    q = sympy.Integer(q)
    gamma = (q - 2) / q
    beta = 2 * sympy.Integer(dim) / q
    lhs = power_case_bound(om, c * t, beta, gamma, t)
    rhs = (2 / q) ** (q / 2) * (q / 2 * om ** (2 / q) + c / (1 - beta) * t ** (2 - beta)) ** (q / 2)
    return sympy.simplify(lhs - rhs) == 0


# -- certification -------------------------------------------------------------------
def integral_map(problem, mesh, U):
    """C0 + int_0^t psi(s) g(U(s)) ds at every mesh point, by product integration of
    psi against the linear interpolant of g(U)."""
    mesh = np.asarray(mesh, dtype=float)
    gU = problem.g(np.maximum(np.asarray(U, dtype=float), 0.0))
    wl, wr = problem.psi.cell_weights(mesh)
    pieces = wl * gU[:-1] + wr * gU[1:]
    return problem.C0 + np.concatenate([[0.0], np.cumsum(pieces)])


@dataclass(frozen=True)
class FixedPointRun:
    mesh: np.ndarray
    U: np.ndarray
    sup_differences: tuple


def fixed_point_iterates(problem, iterations=20, n_mesh=2048):
    """U_(j+1) = C0 + int_0^t psi g(U_j) from U_0 = C0; returns the last iterate."""
    if iterations < 1 or n_mesh < 2:
        raise ValidationError("need iterations >= 1 and n_mesh >= 2")
    mesh = np.linspace(0.0, problem.T, int(n_mesh))
    U = np.full(mesh.shape, float(problem.C0))
    diffs = []
    for _ in range(int(iterations)):
        nxt = integral_map(problem, mesh, U)
        diffs.append(float(np.max(np.abs(nxt - U))))
        U = nxt
    return FixedPointRun(mesh, U, tuple(diffs))


@dataclass(frozen=True)
class Certificate:
    hypothesis_holds: bool
    hypothesis_margin: float      # min over mesh of (rhs - U) / rhs
    bound_holds: Optional[bool]   # None when the hypothesis fails
    bound_margin: float           # min over mesh of (bound - U) / bound
    passed: bool

    def to_dict(self):
        return {"hypothesis_holds": self.hypothesis_holds,
                "hypothesis_margin": self.hypothesis_margin,
                "bound_holds": self.bound_holds, "bound_margin": self.bound_margin,
                "passed": self.passed}


def bound_curve(problem, mesh):
    """The bound at every mesh point.  For tabulated g, l = Phi^-1(y) solves
    dl/dy = g(l), l(Phi(C0)) = C0, which is integrated once over the whole mesh."""
    mesh = np.minimum(np.asarray(mesh, dtype=float), problem.T)
    if isinstance(problem.g, PowerNonlinearity):
        return np.array([gronwall_bound(problem, t) for t in mesh])
    y0 = phi(problem, problem.C0)
    ys = y0 + np.asarray(problem.psi.integral(mesh), dtype=float)
    if ys.max() <= y0:
        return np.full(mesh.shape, float(problem.C0))
    sol = integrate.solve_ivp(lambda y, l: problem.g(l), (y0, float(ys.max())), [problem.C0],
                              method="DOP853", dense_output=True, rtol=1e-12, atol=1e-14)
    return np.maximum(sol.sol(ys)[0], problem.C0)


def certify_bound(problem, mesh, U, tolerance=1e-4, strict=False):
    """Check the integral hypothesis on the mesh, then U <= bound (1 + tolerance).

    No verdict on the bound is issued when the hypothesis fails (bound_holds is
    None); with ``strict`` a HypothesisError is raised instead.
    """
    mesh = np.asarray(mesh, dtype=float)
    U = np.asarray(U, dtype=float)
    if mesh.ndim != 1 or mesh.shape != U.shape or mesh[0] != 0 or np.any(np.diff(mesh) <= 0):
        raise ValidationError("U must be tabulated on an increasing mesh starting at 0")
    if mesh[-1] > problem.T * (1 + 1e-14):
        raise ValidationError("mesh extends beyond T")
    if np.any(U < 0):
        raise ValidationError("U must be nonnegative")
    rhs = integral_map(problem, mesh, U)
    hyp = float(np.min((rhs - U) / rhs))
    holds = hyp >= -tolerance
    bound = bound_curve(problem, mesh)
    bmargin = float(np.min((bound - U) / bound))
    if not holds:
        if strict:
            raise HypothesisError(f"U violates the integral hypothesis (margin {hyp:.3e})")
        return Certificate(False, hyp, None, bmargin, False)
    ok = bmargin >= -tolerance
    return Certificate(True, hyp, ok, bmargin, ok)
