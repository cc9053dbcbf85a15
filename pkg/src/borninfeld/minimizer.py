"""Discrete Born-Infeld energy on box grids, its exact gradient, projection onto
the gradient constraint, preconditioned projected descent, and the weak-form
residual.

Quadrature: the gradient term averages the 2^N corner gradients of every cell
(weights h^N / 2^N); the coupling term uses trapezoidal nodal weights.  The
constraint |grad u| <= 1 is imposed on every corner gradient, which implies it
for the cell-centred gradient.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dstn, idstn

from . import fields
from .charge import ChargeDensity
from .errors import ConstraintViolation, ConvergenceError, ValidationError

ARMIJO_C = 1e-4


@dataclass(frozen=True)
class EnergyConfig:
    max_iterations: int = 500
    step_rule: str = "backtracking"
    initial_step: float = 1.0
    tolerance: float = 1e-12
    margin: float = 1e-6

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ValidationError("max_iterations must be a nonnegative integer")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValidationError("step_rule must be 'fixed' or 'backtracking'")
        if not self.initial_step > 0:
            raise ValidationError("initial_step must be positive")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if not 0 <= self.margin < 0.1:
            raise ValidationError("margin must lie in [0, 0.1)")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad energy config: {exc}") from None


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    field: fields.GridField
    energy: float
    iterations: int
    sup_gradient_norm: float
    energy_history: tuple
    weak_residual: float
    converged: bool
    min_v: float = 1.0
    extra: dict = field(default_factory=dict)

    def diagnostics(self):
        return {"energy": self.energy, "iterations": self.iterations,
                "sup_gradient_norm": self.sup_gradient_norm,
                "weak_residual": self.weak_residual, "converged": self.converged,
                "min_v": self.min_v, "energy_history": list(self.energy_history), **self.extra}


# -- discrete operators -----------------------------------------------------
def _corner_slices(dim, m, axis):
    """For each corner offset, the slice of an axis-`axis` edge array."""
    out = []
    for b in fields.corner_offsets(dim):
        out.append(tuple(slice(None) if j == axis else slice(b[j], b[j] + m) for j in range(dim)))
    return out


def corner_sq_norms(edges, grid):
    """|g_c|^2 for every corner c and cell: shape (2^N, *cell_shape)."""
    N, m = grid.dim, grid.points_per_axis - 1
    out = np.zeros((2**N,) + grid.cell_shape)
    for i in range(N):
        sq = edges[i] ** 2
        for c, sl in enumerate(_corner_slices(N, m, i)):
            out[c] += sq[sl]
    return out


def _edge_gather(cornerwise, grid):
    """For each axis, sum a per-corner cell quantity over the corners touching each edge."""
    N, m = grid.dim, grid.points_per_axis - 1
    out = []
    for i in range(N):
        acc = np.zeros(tuple(m if j == i else m + 1 for j in range(N)))
        for c, sl in enumerate(_corner_slices(N, m, i)):
            acc[sl] += cornerwise[c]
        out.append(acc)
    return out


def _neg_divergence(edge_flux, grid):
    """Adjoint of forward differences: nodal sum_i (F_i(x - h e_i) - F_i(x)) / h."""
    N, h = grid.dim, grid.spacing
    out = np.zeros(grid.shape)
    for i, F in enumerate(edge_flux):
        hi = tuple(slice(1, None) if j == i else slice(None) for j in range(N))
        lo = tuple(slice(None, -1) if j == i else slice(None) for j in range(N))
        out[hi] += F / h
        out[lo] -= F / h
    return out


def trapezoid_weights(grid):
    """Nodal weights h^N prod_i (1/2 on boundary faces)."""
    w1 = np.ones(grid.points_per_axis)
    w1[[0, -1]] = 0.5
    out = np.ones(grid.shape) * grid.cell_volume
    for i in range(grid.dim):
        shape = [1] * grid.dim
        shape[i] = -1
        out = out * w1.reshape(shape)
    return out


def _rho_values(rho, grid):
    if rho is None:
        return np.zeros(grid.shape)
    if isinstance(rho, ChargeDensity):
        return rho.grid_values(grid)
    vals = np.asarray(rho, dtype=float)
    if vals.shape != grid.shape:
        raise ValidationError("density values do not match the grid")
    return vals


def _values(u):
    return u.values if isinstance(u, fields.GridField) else np.asarray(u, dtype=float)


def _state(values, grid):
    edges = fields.edge_differences(values, grid.spacing)
    s = corner_sq_norms(edges, grid)
    return edges, s


def _energy_from(values, s, rho_vals, weights, grid):
    v = np.sqrt(np.clip(1.0 - s, 0.0, None))
    first = np.sum(s / (1.0 + v)) * grid.cell_volume / 2**grid.dim
    return float(first - np.sum(weights * rho_vals * values))


def energy(u, rho, grid=None):
    """I(u) = int (1 - sqrt(1 - |grad u|^2)) - int rho u (discrete)."""
    grid = u.grid if isinstance(u, fields.GridField) else grid
    values = _values(u)
    if not np.any(values):
        return 0.0
    _, s = _state(values, grid)
    worst = float(np.sqrt(s.max()))
    if worst > 1.0 + fields.CONSTRAINT_TOL:
        raise ConstraintViolation(f"gradient norm {worst!r} exceeds 1")
    return _energy_from(values, s, _rho_values(rho, grid), trapezoid_weights(grid), grid)


def _gradient_from(edges, s, rho_vals, weights, grid, margin):
    v = np.sqrt(np.clip(1.0 - s, 0.0, None))
    vmin = float(v.min())
    if vmin < margin or vmin == 0.0:
        raise ConstraintViolation(f"minimum v = {vmin!r} below margin {margin!r}")
    gathered = _edge_gather(1.0 / v, grid)
    scale = grid.cell_volume / 2**grid.dim
    flux = [scale * W * D for W, D in zip(gathered, edges)]
    G = _neg_divergence(flux, grid) - weights * rho_vals
    G[grid.boundary_mask()] = 0.0
    return G


def energy_gradient(u, rho, margin=0.0, grid=None):
    """Exact nodal gradient of the discrete energy (zero at fixed boundary nodes)."""
    grid = u.grid if isinstance(u, fields.GridField) else grid
    values = _values(u)
    edges, s = _state(values, grid)
    return _gradient_from(edges, s, _rho_values(rho, grid), trapezoid_weights(grid), grid, margin)


# -- Poisson solves -----------------------------------------------------------
def _laplace_eigenvalues(grid):
    n, h, N = grid.points_per_axis, grid.spacing, grid.dim
    k = np.arange(1, n - 1)
    lam1 = (2 - 2 * np.cos(np.pi * k / (n - 1))) / h**2
    total = np.zeros((n - 2,) * N)
    for i in range(N):
        shape = [1] * N
        shape[i] = -1
        total = total + lam1.reshape(shape)
    return total


def poisson_solve(rhs, grid):
    """Solve -Lap_h w = rhs on interior nodes with w = 0 on the boundary (DST-I)."""
    eig = _laplace_eigenvalues(grid)
    inner = np.asarray(rhs)[grid.interior]
    sol = idstn(dstn(inner, type=1, norm="ortho") / eig, type=1, norm="ortho")
    out = np.zeros(grid.shape)
    out[grid.interior] = sol
    return out


def neg_laplacian(values, grid):
    """-Lap_h applied to nodal values, returned at interior nodes (zero elsewhere)."""
    out = _neg_divergence(fields.edge_differences(values, grid.spacing), grid)
    out[grid.boundary_mask()] = 0.0
    return out


def harmonic_extension(boundary_values, grid):
    """Discrete harmonic function with the boundary values of `boundary_values`."""
    B = np.where(grid.boundary_mask(), boundary_values, 0.0)
    return B + poisson_solve(-neg_laplacian(B, grid), grid)


# -- projection -------------------------------------------------------------
def _max_corner_norm(values, grid):
    return float(np.sqrt(corner_sq_norms(fields.edge_differences(values, grid.spacing), grid).max()))


def project_constraint(u, margin=1e-6, max_sweeps=500, anchor=None):
    """Nearly nearest field whose corner gradients all have norm <= 1 - margin.

    Alternates pointwise clipping of the corner gradients with least-squares
    re-integration (a Poisson solve); a final convex combination with the
    anchor (zero, or the harmonic lift of the boundary data) makes the bound
    exact.  Admissible inputs are returned unchanged.
    """
    grid = u.grid
    target = 1.0 - margin
    if _max_corner_norm(u.values, grid) <= target:
        return u
    N, m, h = grid.dim, grid.points_per_axis - 1, grid.spacing
    if anchor is None:
        anchor = harmonic_extension(u.values, grid) if u.dirichlet else np.zeros(grid.shape)
    if _max_corner_norm(anchor, grid) >= target:
        raise ConstraintViolation("boundary data admit no field with the requested margin")
    lift = np.where(grid.boundary_mask(), u.values, 0.0)
    cur = u.values.copy()
    corners_slices = [_corner_slices(N, m, i) for i in range(N)]
    for _ in range(max_sweeps):
        edges = fields.edge_differences(cur, h)
        s = corner_sq_norms(edges, grid)
        worst = float(np.sqrt(s.max()))
        if worst <= target * (1 + 1e-3):
            break
        factor = np.minimum(1.0, target / np.sqrt(np.maximum(s, 1e-300)))
        # least squares: 2^N (-Lap_h) w = A^T y - A^T A lift  (A = corner gradients)
        rhs_edges = []
        for i in range(N):
            acc = np.zeros_like(edges[i])
            for c, sl in enumerate(corners_slices[i]):
                acc[sl] += factor[c] * edges[i][sl]
            rhs_edges.append(acc)
        rhs = _neg_divergence(rhs_edges, grid) / 2**N
        w = poisson_solve(rhs - neg_laplacian(lift, grid), grid)
        cur = lift + w
    worst = _max_corner_norm(cur, grid)
    if worst > target * 1.01:
        raise ConvergenceError(f"projection did not converge in {max_sweeps} sweeps "
                               f"(max corner gradient {worst:.6g})")
    if worst > target:
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if _max_corner_norm(anchor + mid * (cur - anchor), grid) <= target:
                lo = mid
            else:
                hi = mid
        cur = anchor + lo * (cur - anchor)
    return fields.GridField(grid, cur, dirichlet=u.dirichlet)


# -- minimization -------------------------------------------------------------
def minimize(rho, grid, config=None, boundary=None, initial=None, weak_tests=None):
    """Minimize the discrete energy by Poisson-preconditioned projected descent.

    ``boundary`` (nodal array or GridField) prescribes Dirichlet values on the
    box boundary; by default they are zero.  Steps that leave the admissible
    set v >= margin are rejected by backtracking, so the energy history is
    nonincreasing.
    """
    config = config or EnergyConfig()
    rho_vals = _rho_values(rho, grid)
    dirichlet = boundary is not None
    if dirichlet:
        bvals = _values(boundary)
        if bvals.shape != grid.shape:
            raise ValidationError("boundary values do not match the grid")
        lift = harmonic_extension(bvals, grid)
    else:
        lift = np.zeros(grid.shape)
    proj_margin = 1.0 - np.sqrt(1.0 - config.margin**2) if config.margin > 0 else 0.0
    proj_margin = max(proj_margin, 1e-12)
    if initial is None:
        start = fields.GridField(grid, lift, dirichlet=dirichlet)
    else:
        vals = _values(initial).copy()
        if dirichlet:
            vals[grid.boundary_mask()] = lift[grid.boundary_mask()]
        start = fields.GridField(grid, vals, dirichlet=dirichlet)
    start = project_constraint(start, margin=proj_margin, anchor=lift)
    u = start.values.copy()
    weights = trapezoid_weights(grid)
    h_n = grid.cell_volume

    edges, s = _state(u, grid)
    E = _energy_from(u, s, rho_vals, weights, grid)
    history = [E]
    alpha = config.initial_step
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        G = _gradient_from(edges, s, rho_vals, weights, grid, config.margin)
        d = -poisson_solve(G, grid) / h_n
        slope = float(np.sum(G * d))
        if slope >= -config.tolerance * max(abs(E), 1e-300):
            converged = True
            it -= 1
            break
        if config.step_rule == "backtracking":
            alpha = min(1.0, 2.0 * alpha)
        else:
            alpha = config.initial_step
        accepted = False
        while alpha > 1e-16:
            trial = u + alpha * d
            t_edges, t_s = _state(trial, grid)
            vmin = np.sqrt(max(0.0, 1.0 - float(t_s.max())))
            if vmin >= config.margin and vmin > 0:
                E_t = _energy_from(trial, t_s, rho_vals, weights, grid)
                need = E + ARMIJO_C * alpha * slope if config.step_rule == "backtracking" else E
                if E_t <= need:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            converged = True
            it -= 1
            break
        decrease = E - E_t
        u, edges, s, E = trial, t_edges, t_s, E_t
        history.append(E)
        if decrease <= config.tolerance * max(abs(E), 1e-300):
            converged = True
            break
    result_field = fields.GridField(grid, u, dirichlet=dirichlet)
    v_min = float(np.sqrt(max(0.0, 1.0 - s.max())))
    try:
        wr = weak_residual(result_field, rho_vals, weak_tests).residual
    except ConstraintViolation:
        wr = float("nan")
    return MinimizeResult(result_field, E, it, fields.sup_gradient_norm(fields.gradient(result_field)),
                          tuple(history), wr, converged, v_min)


# -- weak formulation -----------------------------------------------------------
@dataclass(frozen=True)
class WeakResidual:
    residual: float
    per_test: tuple
    lhs: float          # int |grad u|^2 / sqrt(1 - |grad u|^2)  (cell-centred gradient)
    rhs: float          # int rho u
    defect: float       # rhs - lhs, nonnegative at a minimizer

    def to_dict(self):
        return {"residual": self.residual, "lhs": self.lhs, "rhs": self.rhs,
                "defect": self.defect, "per_test": list(self.per_test)}


def default_test_functions(grid, n_random=3, seed=0):
    """Nodal hat functions at fixed interior nodes plus seeded smooth bumps."""
    n, N = grid.points_per_axis, grid.dim
    c = n // 2
    q = max(1, (n - 1) // 4)
    nodes = [(c,) * N]
    for i in range(N):
        for sgn in (-1, 1):
            idx = [c] * N
            idx[i] = c + sgn * q
            nodes.append(tuple(idx))
    tests = []
    for idx in nodes:
        vals = np.zeros(grid.shape)
        vals[idx] = 1.0
        tests.append(vals)
    rng = np.random.default_rng(seed)
    ell = grid.extent
    for _ in range(n_random):
        centre = rng.uniform(-ell / 2, ell / 2, size=N)
        radius = rng.uniform(ell / 4, ell / 2)
        r = grid.node_distance(centre) / radius
        inside = r < 1
        vals = np.where(inside, np.exp(-1.0 / np.where(inside, 1 - r * r, 1.0)), 0.0)
        vals[grid.boundary_mask()] = 0.0
        tests.append(vals)
    return [fields.GridField(grid, t) for t in tests]


def dirichlet_norm(values, grid):
    """Discrete X-norm (int |grad psi|^2)^(1/2) with the corner quadrature."""
    s = corner_sq_norms(fields.edge_differences(values, grid.spacing), grid)
    return float(np.sqrt(np.sum(s) * grid.cell_volume / 2**grid.dim))


def weak_residual(u, rho, tests=None, seed=0):
    """max over tests of |int grad u . grad psi / v - int rho psi| / ||psi||_X,
    plus the pair (int |grad u|^2 / v, int rho u) and its defect."""
    grid = u.grid
    rho_vals = _rho_values(rho, grid)
    if tests is None:
        tests = default_test_functions(grid, seed=seed)
    G = energy_gradient(u, rho_vals, margin=0.0)
    per = []
    for psi in tests:
        pv = _values(psi)
        nrm = dirichlet_norm(pv, grid)
        per.append(abs(float(np.sum(G * pv))) / nrm if nrm > 0 else 0.0)
    avg = fields.gradient(u).cell_average()
    s = np.sum(avg**2, axis=0)
    if s.max() >= 1.0:
        raise ConstraintViolation("degenerate cell (v = 0)")
    lhs = float(np.sum(s / np.sqrt(1.0 - s)) * grid.cell_volume)
    rhs = float(np.sum(trapezoid_weights(grid) * rho_vals * u.values))
    return WeakResidual(max(per) if per else 0.0, tuple(per), lhs, rhs, rhs - lhs)
