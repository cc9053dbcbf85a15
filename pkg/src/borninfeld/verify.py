"""Numerical checks of the quantitative estimates: the mean-value inequality on
Lorentz balls, the small-data constants and v-lower bound, the regularized
operator's structure conditions, and the scaling identities."""

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma as gamma_fn

from . import fields
from .charge import ChargeDensity, PowerDatum, RadialDensity, ScaledDensity, sample_to_grid
from .errors import ConstraintViolation, HypothesisError, ValidationError
from .minimizer import energy, project_constraint
from .quadrature import polar_rule, radial_integral, unit_ball_volume
from .radial import RadialProfile

REPORT_VERSION = 1
SPACELIKE_FLOOR = 1e-3


# -- Lorentz balls -------------------------------------------------------------
def _interpolator(u):
    axis = u.grid.axis()
    return RegularGridInterpolator((axis,) * u.grid.dim, u.values, method="linear")


def lorentz_ball_mask(u, x0, R, tol=1e-9):
    """Cells whose centre x satisfies |x - x0|^2 - (u(x) - u(x0))^2 < R^2.

    u at cell centres and at x0 is the multilinear interpolant, which is
    1-Lipschitz whenever every corner gradient has norm <= 1.
    """
    grid = u.grid
    x0 = np.asarray(x0, dtype=float)
    if not R > 0:
        raise ValidationError("R must be positive")
    u0 = float(_interpolator(u)(x0[None, :])[0])
    N = grid.dim
    m = grid.points_per_axis - 1
    uc = np.zeros(grid.cell_shape)
    for b in fields.corner_offsets(N):
        uc += u.values[tuple(slice(bj, bj + m) for bj in b)]
    uc /= 2**N
    d2 = sum((c - x) ** 2 for c, x in zip(grid.cell_coordinates(), x0))
    du2 = (uc - u0) ** 2
    if np.any(du2 > d2 * (1 + tol) + tol * grid.spacing**2):
        raise ConstraintViolation("field is not weakly spacelike around x0")
    return d2 - du2 < R * R


def euclidean_ball_mask(grid, x0, R):
    d2 = sum((c - x) ** 2 for c, x in zip(grid.cell_coordinates(), np.asarray(x0, float)))
    return d2 < R * R


# -- estimate terms -------------------------------------------------------------
def c_rho(norm_q):
    """c(rho) = 9/4 |rho|_q^2."""
    return 2.25 * norm_q**2


def datum_term(norm_q, q, R, dim):
    """c(rho) R (2/q)^((q-2)/2) int_0^R s^-b [q/2 w^(2/q) + c(rho)/(1-b) s^(2-b)]^((q-2)/2) ds,
    with b = 2N/q."""
    if not q > 2 * dim:
        raise HypothesisError(f"need q > 2N = {2 * dim}, got {q}")
    c = c_rho(norm_q)
    if c == 0:
        return 0.0
    b = 2 * dim / q
    om = unit_ball_volume(dim)
    e = (q - 2) / 2
    f = lambda s: (q / 2 * om ** (2 / q) + c / (1 - b) * s ** (2 - b)) ** e
    val = integrate.quad(f, 0, R, weight="alg", wvar=(-b, 0), epsabs=0, epsrel=1e-12,
                         limit=200)[0]
    return float(c * R * (2 / q) ** e * val)


@dataclass(frozen=True)
class EstimateReport:
    center: tuple
    radius: float
    gamma: float
    C: float
    q: float
    beta: float
    c_rho: float
    term_lhs: float
    term_volume: float
    term_datum: float
    term_hessian: float
    hessian_integral: float
    margin: float
    version: int = REPORT_VERSION

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_params(gamma, C, R, q, dim):
    if not 0 < gamma < 1 / dim:
        raise ValidationError(f"gamma must lie in (0, 1/N), got {gamma}")
    if not C >= 0:
        raise ValidationError("C must be nonnegative")
    if not R > 0:
        raise ValidationError("R must be positive")
    if not q > 2 * dim:
        raise HypothesisError(f"need q > 2N = {2 * dim}, got {q}")


def _ray_exit(profile, d, cth, R):
    """Distance t along each ray from x0 (|x0| = d) where the Lorentz distance reaches R."""
    u0 = float(profile.potential_at(d))

    def l2(t):
        r = np.sqrt(np.maximum(d * d + t * t + 2 * d * t * cth, 0.0))
        return t * t - (profile.potential_at(r) - u0) ** 2

    lo = np.full_like(cth, R * (1 - 1e-12))
    hi = np.full_like(cth, R)
    for _ in range(200):
        grow = l2(hi) < R * R
        if not np.any(grow):
            break
        hi = np.where(grow, 2 * hi, hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = l2(mid) < R * R
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _radial_terms(profile, x0, R, gamma, n_polar, n_radial):
    d = float(np.linalg.norm(x0))
    N = profile.dim
    floor = profile.mesh[0]

    def v_of(r):
        return profile.v_at(np.maximum(r, floor))

    def hess_of(r):
        r = np.maximum(r, floor)
        w1 = profile.slope_at(r)
        w2 = profile.second_derivative_at(r)
        return w2**2 + (N - 1) * (w1 / r) ** 2

    cth, _ = polar_rule(N, n_polar)
    t_full = _ray_exit(profile, d, cth, R)
    t_half = _ray_exit(profile, d, cth, R / 2)
    vmin = [float(v_of(d))]

    def vol_f(r):
        vals = v_of(r)
        vmin.append(float(vals.min()))
        return vals ** (gamma + 1)

    # the exits are tabulated on the same polar nodes radial_integral uses
    vol = radial_integral(vol_f, d, lambda c: t_full, N, n_polar, n_radial)
    hess = radial_integral(hess_of, d, lambda c: t_half, N, n_polar, n_radial)
    return float(v_of(d)), vol, hess, min(vmin)


def _grid_terms(u, x0, R, gamma):
    grid = u.grid
    vcell = fields.v_field(fields.gradient(u))
    mask = lorentz_ball_mask(u, x0, R)
    half = lorentz_ball_mask(u, x0, R / 2)
    vol = float(np.sum(vcell[mask] ** (gamma + 1)) * grid.cell_volume)
    integrand = fields.hessian_frobenius_sq(u.values, grid.spacing)
    # node-level mask for K_{R/2}: l computed from nodal values
    u0 = float(_interpolator(u)(np.asarray(x0, float)[None, :])[0])
    d2 = sum((c - x) ** 2 for c, x in zip(grid.coordinates(), np.asarray(x0, float)))
    node_mask = (d2 - (u.values - u0) ** 2 < (R / 2) ** 2)[grid.interior]
    hess = float(np.sum(integrand[node_mask]) * grid.cell_volume)
    cell_axis = grid.cell_axis()
    v0 = float(RegularGridInterpolator((cell_axis,) * grid.dim, vcell, method="nearest",
                                       bounds_error=False, fill_value=None)(
        np.asarray(x0, float)[None, :])[0])
    vmin = float(min(vcell[mask].min() if mask.any() else 1.0, v0))
    return v0, vol, hess, vmin


def evaluate_estimate(u, rho, x0, R, gamma=None, C=0.0, q=None, n_polar=48, n_radial=64):
    """All terms of the mean-value inequality at (x0, R) and the margin lhs - rhs.

    ``u`` is a RadialProfile (preferred: exact second derivatives) or a
    GridField.  ``rho`` supplies |rho|_q (ChargeDensity, RadialDensity or a number).
    """
    dim = u.dim if isinstance(u, RadialProfile) else u.grid.dim
    gamma = 1 / (2 * dim) if gamma is None else gamma
    if q is None:
        raise ValidationError("the integrability exponent q is required")
    _check_params(gamma, C, R, q, dim)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (dim,):
        raise ValidationError(f"x0 must have {dim} coordinates")
    if isinstance(rho, (int, float)):
        norm_q = float(rho)
    elif isinstance(rho, ChargeDensity):
        norm_q = rho.norm(q)
    elif isinstance(rho, RadialDensity):
        norm_q = rho.lq_norm(q)
    else:
        raise ValidationError("rho must be a density or a norm value")
    if isinstance(u, RadialProfile):
        v0, vol, hess, vmin = _radial_terms(u, x0, R, gamma, n_polar, n_radial)
    else:
        v0, vol, hess, vmin = _grid_terms(u, x0, R, gamma)
    if vmin < SPACELIKE_FLOOR:
        raise HypothesisError(f"solution not strictly spacelike on the region (min v = {vmin:.3g})")
    om = unit_ball_volume(dim)
    ef = np.exp(-gamma / 4)
    lhs = om * v0**gamma
    t_vol = ef * R ** (-dim) * vol
    t_dat = datum_term(norm_q, q, R, dim)
    h_int = R ** (2 - dim) * ef * hess
    t_hes = C * h_int
    margin = lhs - (t_vol - t_dat + t_hes)
    return EstimateReport(tuple(float(x) for x in x0), float(R), float(gamma), float(C), float(q),
                          2 * dim / q, c_rho(norm_q), float(lhs), float(t_vol), float(t_dat),
                          float(t_hes), float(h_int), float(margin))


@dataclass(frozen=True)
class Calibration:
    C: float
    gamma: float
    min_base_margin: float
    binding_ratio: float
    samples: int


def calibrate_constant(cases, gamma=None, q=None, safety=1e-9):
    """Largest C keeping every margin nonnegative over `cases` = [(profile, rho, x0, R), ...].

    With C = 0 the margin is m0; the Hessian term is C * H, so C* = min m0 / H.
    """
    reports = []
    for prof, rho, x0, R in cases:
        reports.append(evaluate_estimate(prof, rho, x0, R, gamma=gamma, C=0.0, q=q))
    m0 = np.array([r.margin for r in reports])
    H = np.array([r.hessian_integral for r in reports])
    if np.any(m0 < 0):
        raise HypothesisError(f"margin negative even with C = 0 (min {m0.min():.3g})")
    ratios = np.where(H > 0, m0 / np.where(H > 0, H, 1.0), np.inf)
    Cstar = float(np.min(ratios)) * (1 - safety)
    if not Cstar > 0:
        raise HypothesisError("no positive C keeps the margins nonnegative")
    return Calibration(Cstar, reports[0].gamma, float(m0.min()), float(np.min(ratios)), len(reports))


def calibration_suite(dim=3, betas=(-0.25, -0.5, -0.75), q_factor=7, n_pairs=20, seed=0,
                      core=0.1, taper=0.5, r0=1.0, design="random", n_d=6, n_R=12):
    """Strictly spacelike radial solutions with (x0, R) samples.

    The data are C (r^2 + core^2)^(-(1+beta)/2) with C = N - 1 - beta and a
    smooth taper past r0, so they are C^1 and lie in every L^q.  Centres sit
    at distance d in [0, 2 r0] from the origin and R lies in [0.1 r0, 2 r0].
    ``design="random"`` draws n_pairs seeded pairs per datum; ``design="grid"``
    takes every pair of n_d equispaced distances (including 0) and n_R
    log-spaced radii, which is what calibration should use.
    """
    from .radial import solve_radial
    if design not in ("random", "grid"):
        raise ValidationError("design must be 'random' or 'grid'")
    rng = np.random.default_rng(seed)
    q = q_factor * dim
    cases = []
    for b in betas:
        dens = PowerDatum(dim, dim - 1 - b, b, r0=r0, core=core, taper=taper)
        prof = solve_radial(dens, r0=r0)
        if design == "grid":
            pairs = [(d, R) for d in np.linspace(0, 2 * r0, n_d)
                     for R in np.geomspace(0.1 * r0, 2 * r0, n_R)]
        else:
            pairs = [(rng.uniform(0, 2 * r0), rng.uniform(0.1 * r0, 2 * r0))
                     for _ in range(n_pairs)]
        for d, R in pairs:
            x0 = np.zeros(dim)
            x0[0] = d
            cases.append((prof, dens, x0, R))
    return cases, q


# -- small data ---------------------------------------------------------------------
def sobolev_constant(dim, k):
    """Sharp constant of |f|_{k*} <= c |grad f|_k on R^N, 1 < k < N (Talenti)."""
    if not 1 < k < dim:
        raise ValidationError(f"Sobolev exponent must lie in (1, N), got {k}")
    N = dim
    ratio = gamma_fn(1 + N / 2) * gamma_fn(N) / (gamma_fn(N / k) * gamma_fn(1 + N - N / k))
    return float(np.pi ** -0.5 * N ** (-1 / k) * ((k - 1) / (N - k)) ** (1 - 1 / k)
                 * ratio ** (1 / N))


def morrey_constant(dim, s):
    """A constant with |f|_inf <= c (|f|_s + |grad f|_s), s > N, from the mean-value
    bound on unit balls: max(w^(-1/s), 2^N/(N w) (N w 2^(N-(N-1)s')/(N-(N-1)s'))^(1/s'))."""
    if not s > dim:
        raise ValidationError("Morrey exponent must exceed N")
    N = dim
    om = unit_ball_volume(N)
    sp = s / (s - 1)
    kern = N * om * 2 ** (N - (N - 1) * sp) / (N - (N - 1) * sp)
    return float(max(om ** (-1 / s), 2**N / (N * om) * kern ** (1 / sp)))


@dataclass(frozen=True)
class SmallDataReport:
    dim: int
    m: float
    q: float
    gamma: float
    norm_q: float
    norm_m: float
    sobolev_exponent: float
    sobolev_constant: float
    c1: float
    c2: float
    positive_term: float
    datum_term: float
    v_gamma_bound: float
    delta: Optional[float]
    xnorm_bound: float
    morrey_constant: Optional[float] = None
    version: int = REPORT_VERSION

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def small_data_report(dim, m, q, norm_q, norm_m, gamma=None, sobolev="talenti", s=None):
    """Constants c1, c2 at R = 1 and the lower bound for v^gamma at any point."""
    N = dim
    gamma = 1 / (2 * N) if gamma is None else gamma
    if sobolev != "talenti":
        raise ValidationError("only the sharp ('talenti') Sobolev constant is available")
    if not q > 2 * N:
        raise ValidationError(f"need q > 2N = {2 * N}")
    lower = 2 * N / (N + 2)
    if not (m == 1 or 1 < m <= lower + 1e-15):
        raise ValidationError(f"m must be 1 or lie in (1, {lower}]")
    if norm_q < 0 or norm_m < 0:
        raise ValidationError("norms must be nonnegative")
    if not 0 < gamma < 1 / N:
        raise ValidationError("gamma must lie in (0, 1/N)")
    om = unit_ball_volume(N)
    morrey = None
    if m == 1:
        s = N + 1 if s is None else s
        k = N * s / (N + s)
        c0 = sobolev_constant(N, k)
        morrey = morrey_constant(N, s)
        cbar = morrey * (c0 + 1)
        extra = 2 ** (1 / (s - 1)) * (cbar * norm_m) ** (s / (s - 1))
        xbound = (2 * cbar * norm_m) ** (s / (2 * (s - 1)))
        sob = c0
    else:
        k = m * N / ((N + 1) * m - N)
        sob = sobolev_constant(N, k)
        mstar = N * m / (N - m)
        extra = 2 ** (((N + 1) * m - N) / (N - m)) * (sob * norm_m) ** mstar
        xbound = (2 * sob * norm_m) ** (m * N / (2 * (N - m)))
    c1 = om + extra
    c2 = om ** (gamma + 2) / c1 ** (1 + gamma)
    positive = np.exp(-gamma / 4) * om ** (gamma + 1) / c1 ** (1 + gamma)
    b = 2 * N / q
    c = c_rho(norm_q)
    e = (q - 2) / 2
    neg = 2 ** ((q - 4) / 2) * c * (om ** (-2 / q) / (1 - b)
                                   + c**e * (2 / q) ** e * om**-1 / ((1 - b) ** e * (q - N - 1)))
    bound = positive - neg
    delta = float(bound ** (1 / gamma)) if bound > 0 else None
    return SmallDataReport(N, float(m), float(q), float(gamma), float(norm_q), float(norm_m),
                           float(k), float(sob), float(c1), float(c2), float(positive),
                           float(neg), float(bound), delta, float(xbound), morrey)


def small_data_threshold(dim, m, q, shape_norm_q, shape_norm_m, gamma=None, tol=1e-12):
    """Largest multiplier t with a positive v-bound for the datum t * rho_shape.

    Returns (t, t * (|rho|_q + |rho|_m)), the latter an empirical c3.
    """
    if shape_norm_q <= 0 and shape_norm_m <= 0:
        raise ValidationError("datum shape must have a positive norm")

    def positive(t):
        return small_data_report(dim, m, q, t * shape_norm_q, t * shape_norm_m, gamma).v_gamma_bound > 0

    lo, hi = 0.0, 1.0
    while positive(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise ValidationError("bound stays positive for all multipliers")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo, lo * (shape_norm_q + shape_norm_m)


# -- regularized operator ------------------------------------------------------------
@dataclass(frozen=True)
class RegularizedOperator:
    """a(z) = z f(|z|), f(r) = (1 - phi(r)^2)^(-1/2), phi(r) = eta(r) r.

    phi(r) = r below 1 - eps, 1 - eps/2 above 1 - eps/2, and in between
    a + H p((r - a)/H) with a = 1 - eps, H = eps/2 and p(t) = t + 4t^3 - 7t^4 + 3t^5,
    which matches value, slope 1 and curvature 0 on the left and is flat to
    second order on the right; p'(t) = (1-t)^2 (15t^2 + 2t + 1) >= 0.
    """

    epsilon: float
    L: float = field(default=float("nan"))

    @property
    def lo(self):
        return 1.0 - self.epsilon

    @property
    def width(self):
        return self.epsilon / 2

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        t = np.clip((r - self.lo) / self.width, 0.0, 1.0)
        p = t + 4 * t**3 - 7 * t**4 + 3 * t**5
        return np.where(r < self.lo, r, self.lo + self.width * p)

    def phi_prime(self, r):
        r = np.asarray(r, dtype=float)
        t = np.clip((r - self.lo) / self.width, 0.0, 1.0)
        dp = (1 - t) ** 2 * (15 * t**2 + 2 * t + 1)
        return np.where(r < self.lo, 1.0, dp)

    def f(self, r):
        ph = self.phi(r)
        return 1.0 / np.sqrt(1.0 - ph * ph)

    def f_prime(self, r):
        ph = self.phi(r)
        return ph * self.phi_prime(r) / (1.0 - ph * ph) ** 1.5

    def plateau(self):
        e = self.epsilon
        return 1.0 / np.sqrt(e - e * e / 4)

    def growth_ratio(self, r):
        """(|a(z)| + |Da(z)|_F |z|) / |z| as a function of r = |z|."""
        r = np.asarray(r, dtype=float)
        f, fp = self.f(r), self.f_prime(r)
        return f + np.sqrt((f + fp * r) ** 2 + (self.dim_hint - 1) * f**2)

    dim_hint: int = 3


def make_regularized_operator(epsilon, dim=3):
    if not 0 < epsilon < 1:
        raise ValidationError("epsilon must lie in (0, 1)")
    op = RegularizedOperator(float(epsilon), dim_hint=int(dim))
    r = np.concatenate([np.linspace(0, op.lo, 2001), np.linspace(op.lo, 1.0, 20001), [2.0]])
    L = float(np.max(op.growth_ratio(r)))
    return RegularizedOperator(float(epsilon), L, int(dim))


def a_eps(op, z):
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    return z * op.f(r)


def a_eps_jacobian(op, z):
    """f'(|z|) z z^T / |z| + f(|z|) I (identity at z = 0)."""
    z = np.asarray(z, dtype=float)
    N = z.shape[-1]
    r = np.linalg.norm(z, axis=-1)
    f, fp = op.f(r), op.f_prime(r)
    safe = np.where(r > 0, r, 1.0)
    outer = z[..., :, None] * z[..., None, :]
    coef = np.where(r > 0, fp / safe, 0.0)
    return coef[..., None, None] * outer + f[..., None, None] * np.eye(N)


def fd_jacobian(op, z, h=1e-7):
    z = np.asarray(z, dtype=float)
    N = z.shape[-1]
    cols = []
    for j in range(N):
        e = np.zeros(N)
        e[j] = h
        cols.append((a_eps(op, z + e) - a_eps(op, z - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class StructureReport:
    epsilon: float
    samples: int
    min_ellipticity_ratio: float
    max_fd_error: float
    empirical_L: float
    analytic_L: float
    plateau_bound: float
    max_symmetry_error: float
    min_eigenvalue: float

    def to_dict(self):
        return asdict(self)


def check_structure_conditions(op, samples, dim=None, seed=0, rmax=2.5):
    """Sample (z, lambda) and check ellipticity, Jacobian accuracy and growth."""
    if int(samples) != samples or samples < 1:
        raise ValidationError("samples must be a positive integer")
    N = op.dim_hint if dim is None else dim
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, N))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # half uniform in [0, rmax], half concentrated in the transition band
    r = rng.uniform(0, rmax, samples)
    band = rng.uniform(op.lo - op.epsilon / 4, 1.0, samples)
    r = np.where(np.arange(samples) % 2 == 0, r, band)
    z = dirs * r[:, None]
    z[0] = 0.0
    lam = rng.standard_normal((samples, N))
    J = a_eps_jacobian(op, z)
    quad = np.einsum("ni,nij,nj->n", lam, J, lam)
    ratio = quad / np.sum(lam**2, axis=1)
    if np.any(ratio < 1 - 1e-10):
        raise ConstraintViolation(f"ellipticity fails (min ratio {ratio.min():.3e})")
    Jfd = fd_jacobian(op, z)
    scale = np.maximum(1.0, np.linalg.norm(J, axis=(1, 2)))
    fd_err = float(np.max(np.linalg.norm(J - Jfd, axis=(1, 2)) / scale))
    nz = r > 0
    growth = (np.linalg.norm(a_eps(op, z[nz]), axis=1)
              + np.linalg.norm(J[nz], axis=(1, 2)) * r[nz]) / r[nz]
    sym = float(np.max(np.abs(J - np.swapaxes(J, 1, 2))))
    eig = float(np.min(np.linalg.eigvalsh(J)))
    return StructureReport(op.epsilon, int(samples), float(ratio.min()), fd_err,
                           float(growth.max()), op.L, float(op.plateau()), sym, eig)


# -- scaling ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ScalingReport:
    t: float
    q: float
    norm_ratio: float           # |rho~|_q^q / |rho|_q^q on the grids
    norm_expected: float        # t^(N-q)
    norm_defect: float
    energy_ratio: float
    energy_expected: float
    energy_defect: float
    analytic_norm_defect: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def random_admissible_field(grid, seed=0, n_bumps=4, amplitude=0.3):
    """A seeded smooth field with zero boundary values and corner gradients below 1."""
    rng = np.random.default_rng(seed)
    vals = np.zeros(grid.shape)
    ell = grid.extent
    for _ in range(n_bumps):
        c = rng.uniform(-ell / 2, ell / 2, grid.dim)
        rad = rng.uniform(ell / 4, ell / 2)
        r = grid.node_distance(c) / rad
        inside = r < 1
        vals += rng.uniform(-1, 1) * amplitude * rad * np.where(
            inside, np.exp(1 - 1 / np.where(inside, 1 - r * r, 1.0)), 0.0)
    vals[grid.boundary_mask()] = 0.0
    return project_constraint(fields.GridField(grid, vals), margin=0.05)


def scaling_check(rho, t, grid, q=7, w=None, seed=0):
    """Both scaling identities: |rho~|_q^q = t^(N-q) |rho|_q^q and I_rho~(w~) = t^N I_rho(w),
    with rho~(x) = rho(x/t)/t on the box scaled by t and w~(x) = t w(x/t)."""
    if not t > 0:
        raise ValidationError("t must be positive")
    N = grid.dim
    rad = rho.radial if isinstance(rho, ChargeDensity) else rho
    if not isinstance(rad, RadialDensity):
        raise ValidationError("scaling_check needs an analytic radial density")
    sgrid = grid.scaled(t)
    if t == 1:
        srad, sgrid = rad, grid
    else:
        srad = ScaledDensity(rad, t)
    base_vals = sample_to_grid(ChargeDensity.analytic(rad), grid)
    scaled_vals = sample_to_grid(ChargeDensity.analytic(srad), sgrid)
    nq = fields.lq_norm(base_vals, grid, q) ** q
    nq_s = fields.lq_norm(scaled_vals, sgrid, q) ** q
    expected = t ** (N - q)
    ratio = nq_s / nq if nq > 0 else expected
    if w is None:
        w = random_admissible_field(grid, seed=seed)
    w_s = fields.GridField(sgrid, t * w.values) if t != 1 else w
    E = energy(w, base_vals)
    E_s = energy(w_s, scaled_vals)
    e_expected = t**N
    e_ratio = E_s / E if E != 0 else e_expected
    analytic = None
    law = rad.origin_power_law() if isinstance(rad, PowerDatum) else None
    if law is not None and rad.taper == 0 and q * law[1] < N:
        C, p, r0 = law
        twin = PowerDatum(N, C * t ** (p - 1), rad.beta, r0 * t)
        analytic = abs(twin.lq_norm(q) ** q / rad.lq_norm(q) ** q / expected - 1)
    return ScalingReport(float(t), float(q), float(ratio), float(expected),
                         float(abs(ratio / expected - 1)), float(e_ratio), float(e_expected),
                         float(abs(e_ratio / e_expected - 1)), analytic)
