"""Truncated p-Laplacian series: coefficients of 1 - sqrt(1 - s), the truncated
energies sum_h c_h int |grad u|^(2h) - int rho u, their minimizers, and a
direct sparse Poisson solve used as an independent oracle for k = 1."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import fields
from .charge import BumpCharge, ChargeDensity, sample_to_grid
from .errors import ValidationError
from .minimizer import (ARMIJO_C, EnergyConfig, MinimizeResult, _edge_gather, _neg_divergence,
                        _rho_values, _state, poisson_solve, trapezoid_weights)


@dataclass(frozen=True)
class SeriesCoefficients:
    """c_1..c_k with c_h the coefficient of s^h in 1 - sqrt(1 - s)."""

    order: int
    exact: tuple
    coefficients: tuple

    def partial_sum(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c in reversed(self.coefficients):
            out = (out + c) * s
        return out

    def derivative(self, s):
        """d/ds of the partial sum."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for h in range(self.order, 0, -1):
            out = out * s + h * self.coefficients[h - 1]
        return out


def series_coefficients(k):
    """Binomial-series recurrence c_1 = 1/2, c_(h+1) = c_h (2h - 1) / (2h + 2), exact."""
    if int(k) != k or k < 1:
        raise ValidationError(f"order k must be an integer >= 1, got {k}")
    exact = [Fraction(1, 2)]
    for h in range(1, int(k)):
        exact.append(exact[-1] * Fraction(2 * h - 1, 2 * h + 2))
    return SeriesCoefficients(int(k), tuple(exact), tuple(float(c) for c in exact))


def _corner_weight(grid):
    return grid.cell_volume / 2**grid.dim


def truncated_energy(u, rho, coeffs):
    """I_k(u) = sum_h c_h int |grad u|^(2h) - int rho u (corner quadrature)."""
    grid = u.grid
    _, s = _state(u.values, grid)
    first = float(np.sum(coeffs.partial_sum(s))) * _corner_weight(grid)
    return first - float(np.sum(trapezoid_weights(grid) * _rho_values(rho, grid) * u.values))


def truncated_gradient(values, rho_vals, coeffs, grid):
    edges, s = _state(values, grid)
    dphi = 2.0 * coeffs.derivative(s)
    gathered = _edge_gather(dphi, grid)
    flux = [_corner_weight(grid) * W * D for W, D in zip(gathered, edges)]
    G = _neg_divergence(flux, grid) - trapezoid_weights(grid) * rho_vals
    G[grid.boundary_mask()] = 0.0
    return G


@dataclass(frozen=True)
class XNorm:
    grad2_sq: float      # |grad u|_2^2
    grad2k: float        # |grad u|_2k
    combined: float      # (|grad u|_2^2 + |grad u|_2k^2)^(1/2)


def xnorm_2k(u, k):
    """Both summands of the X_2k norm and their combination."""
    if int(k) != k or k < 1:
        raise ValidationError("k must be an integer >= 1")
    grid = u.grid
    _, s = _state(u.values, grid)
    w = _corner_weight(grid)
    two = float(np.sum(s) * w)
    top = float(s.max())
    if top == 0:
        return XNorm(0.0, 0.0, 0.0)
    # scale by the max to avoid overflow for large k
    two_k = float(np.sqrt(top) * (np.sum((s / top) ** k) * w) ** (1.0 / (2 * k)))
    return XNorm(two, two_k, float(np.sqrt(two + two_k**2)))


def minimize_truncated(rho, grid, k, config=None, initial=None):
    """Minimize I_k by Poisson-preconditioned descent with Armijo backtracking.

    No gradient constraint is imposed; the result may have |grad u| > 1 for
    small k and this is reported through ``sup_gradient_norm``.
    """
    config = config or EnergyConfig()
    coeffs = series_coefficients(k)
    rho_vals = _rho_values(rho, grid)
    u = np.zeros(grid.shape) if initial is None else np.array(
        initial.values if isinstance(initial, fields.GridField) else initial, dtype=float)
    u[grid.boundary_mask()] = 0.0
    field = fields.GridField(grid, u)
    E = truncated_energy(field, rho_vals, coeffs)
    history = [E]
    alpha = config.initial_step
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        G = truncated_gradient(u, rho_vals, coeffs, grid)
        d = -poisson_solve(G, grid) / grid.cell_volume
        slope = float(np.sum(G * d))
        if slope >= -config.tolerance * max(abs(E), 1e-300):
            converged = True
            it -= 1
            break
        alpha = min(1.0, 2.0 * alpha) if config.step_rule == "backtracking" else config.initial_step
        accepted = False
        while alpha > 1e-16:
            trial = u + alpha * d
            E_t = truncated_energy(fields.GridField(grid, trial), rho_vals, coeffs)
            need = E + ARMIJO_C * alpha * slope if config.step_rule == "backtracking" else E
            if np.isfinite(E_t) and E_t <= need:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True
            it -= 1
            break
        decrease = E - E_t
        u, E = trial, E_t
        history.append(E)
        if decrease <= config.tolerance * max(abs(E), 1e-300):
            converged = True
            break
    out = fields.GridField(grid, u)
    sup = fields.sup_gradient_norm(fields.gradient(out))
    return MinimizeResult(out, E, it, sup, tuple(history), float("nan"), converged,
                          extra={"order": int(k)})


def sparse_poisson_solve(rhs, grid):
    """-Lap_h u = rhs with zero boundary values, by a sparse direct solve."""
    m, h, N = grid.points_per_axis - 2, grid.spacing, grid.dim
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / h**2
    eye = sp.identity(m, format="csr")
    L = sp.csr_matrix((m**N, m**N))
    for i in range(N):
        term = None
        for j in range(N):
            f = T if j == i else eye
            term = f if term is None else sp.kron(term, f, format="csr")
        L = L + term
    sol = spsolve(L.tocsc(), np.asarray(rhs)[grid.interior].ravel())
    out = np.zeros(grid.shape)
    out[grid.interior] = sol.reshape((m,) * N)
    return out


def standard_test_datum(grid, charge=1.0, radius=0.5):
    """Smooth bump of total charge `charge` and radius `radius`, sampled on grid."""
    dens = ChargeDensity.analytic(BumpCharge(grid.dim, charge, radius))
    return ChargeDensity.on_grid(sample_to_grid(dens, grid), grid)
