"""Exact radial solutions: integrate the flux, invert the slope relation
w'/sqrt(1-w'^2) = -F(r) r^(1-N), integrate the potential with an analytic tail,
and classify the behaviour of the slope at the origin."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_legendre

from .charge import ChargeDensity, PowerDatum, RadialDensity
from .errors import ConvergenceError, DivergentIntegralError, ValidationError


def log_mesh(r0, rmin_factor=1e-8, rmax_factor=1e3, per_decade=200):
    """Logarithmic mesh with r0 as a node."""
    if not r0 > 0 or not 0 < rmin_factor < 1 < rmax_factor or per_decade < 2:
        raise ValidationError("invalid radial mesh parameters")
    lo, hi = np.log10(rmin_factor), np.log10(rmax_factor)
    n = int(round((hi - lo) * per_decade)) + 1
    exps = np.linspace(lo, hi, n)
    exps[np.argmin(np.abs(exps))] = 0.0
    return r0 * 10.0**exps


def _as_radial(density):
    if isinstance(density, ChargeDensity):
        if density.radial is None:
            raise ValidationError("radial solver needs an analytic radial density")
        return density.radial
    if not isinstance(density, RadialDensity):
        raise ValidationError("expected a radial density")
    return density


def cumulative_flux(density, mesh):
    """F(r) = int_0^r s^(N-1) rho(s) ds at each mesh radius."""
    rad = _as_radial(density)
    if rad.singular_exponent >= rad.dim:
        raise DivergentIntegralError("flux integral diverges at the origin")
    return np.asarray(rad.flux(np.asarray(mesh, dtype=float)), dtype=float)


def _slope_parts(F, mesh, dim):
    g = np.asarray(F, dtype=float) * np.asarray(mesh, dtype=float) ** (1 - dim)
    root = np.hypot(1.0, g)
    return g, -g / root, 1.0 / root


def slope_from_flux(F, mesh, dim):
    """w' = -g / sqrt(1 + g^2) with g = F r^(1-N); always |w'| < 1."""
    return _slope_parts(F, mesh, dim)[1]


_GL8 = roots_legendre(8)


def integrate_potential(slope, mesh, dim, total_flux, slope_fn=None):
    """u(r) = -int_r^inf w'(s) ds with the tail beyond r_max from w' ~ -F_inf s^(1-N).

    If ``slope_fn`` (a vectorized r -> w'(r)) is supplied, each mesh interval is
    integrated by 8-point Gauss-Legendre; otherwise a cubic spline of the
    tabulated slope is integrated.
    """
    mesh = np.asarray(mesh, dtype=float)
    slope = np.asarray(slope, dtype=float)
    if not np.isfinite(total_flux):
        raise DivergentIntegralError("potential tail is not integrable (infinite total charge)")
    rmax = mesh[-1]
    tail = total_flux * rmax ** (2 - dim) / (dim - 2)
    if slope_fn is not None:
        x, w = _GL8
        a, b = mesh[:-1], mesh[1:]
        half = 0.5 * (b - a)
        nodes = a[:, None] + half[:, None] * (x + 1.0)
        pieces = half * (slope_fn(nodes) @ w)
    else:
        spline = CubicSpline(mesh, slope)
        pieces = np.array([spline.integrate(a, b) for a, b in zip(mesh[:-1], mesh[1:])])
    # u(r_i) = tail - sum_{j >= i} int_{r_j}^{r_{j+1}} w'
    rev = np.cumsum(pieces[::-1])[::-1]
    return np.concatenate([tail - rev, [tail]])


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A solved radial profile on a logarithmic mesh.

    ``v`` holds sqrt(1 - w'^2) computed as 1/sqrt(1 + g^2), which stays accurate
    when |w'| is within rounding of 1.
    """

    dim: int
    density: RadialDensity
    mesh: np.ndarray
    flux: np.ndarray
    slope: np.ndarray
    v: np.ndarray
    potential: np.ndarray
    point_flux: float = 0.0
    r0: float = 1.0
    _splines: dict = field(default_factory=dict, repr=False)

    @property
    def g(self):
        return -self.slope / self.v

    def flux_ratio(self):
        """w' / sqrt(1 - w'^2), which must equal -F r^(1-N)."""
        return self.slope / self.v

    def _spline(self, name):
        if name not in self._splines:
            self._splines[name] = CubicSpline(np.log(self.mesh), getattr(self, name))
        return self._splines[name]

    def total_flux_at(self, r):
        r = np.asarray(r, dtype=float)
        return self.density.flux(r) + self.point_flux

    def slope_at(self, r):
        r = np.asarray(r, dtype=float)
        return _slope_parts(self.total_flux_at(r), r, self.dim)[1]

    def potential_at(self, r):
        """u(r); below r_min the value u(r_min) is used (error at most r_min)."""
        r = np.asarray(r, dtype=float)
        lo, hi = self.mesh[0], self.mesh[-1]
        inside = self._spline("potential")(np.log(np.clip(r, lo, hi)))
        far = self.total_flux_at(hi) * np.maximum(r, hi) ** (2 - self.dim) / (self.dim - 2)
        return np.where(r > hi, far, inside)

    def second_derivative_at(self, r):
        """w''(r) = -g'(r) / (1 + g^2)^(3/2) with g' = rho - (N-1) g / r."""
        r = np.asarray(r, dtype=float)
        g = self.total_flux_at(r) * r ** (1 - self.dim)
        gp = self.density.value(r) - (self.dim - 1) * g / r
        return -gp / (1 + g * g) ** 1.5

    def v_at(self, r):
        r = np.asarray(r, dtype=float)
        return _slope_parts(self.total_flux_at(r), r, self.dim)[2]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "rho", "F", "slope", "u"])
            rho = self.density.value(self.mesh)
            for row in zip(self.mesh, rho, self.flux, self.slope, self.potential):
                wr.writerow([repr(float(x)) for x in row])


def solve_radial(density, r0=None, per_decade=200, rmin_factor=1e-8, rmax_factor=1e3,
                 point_flux=0.0):
    """Solve the radial problem for a radial density (plus an optional point
    charge entering as the constant flux ``point_flux``)."""
    rad = _as_radial(density)
    if r0 is None:
        bps = [b for b in rad.breakpoints() if np.isfinite(b) and b > 0]
        r0 = bps[0] if bps else 1.0
    mesh = log_mesh(r0, rmin_factor, rmax_factor, per_decade)
    F = cumulative_flux(rad, mesh) + point_flux
    g, slope, v = _slope_parts(F, mesh, rad.dim)
    if rad.support > mesh[-1]:
        raise DivergentIntegralError("density support exceeds r_max; potential tail not closed")
    total = float(F[-1])

    def slope_fn(r):
        return _slope_parts(rad.flux(r) + point_flux, r, rad.dim)[1]

    u = integrate_potential(slope, mesh, rad.dim, total, slope_fn=slope_fn)
    return RadialProfile(rad.dim, rad, mesh, F, slope, v, u, float(point_flux), float(r0))


def radial_operator(profile):
    """-r^(1-N) d/dr (r^(N-1) w'/sqrt(1-w'^2)) by finite differences on the mesh."""
    r = profile.mesh
    N = profile.dim
    inner = r ** (N - 1) * profile.flux_ratio()
    return -r ** (1 - N) * np.gradient(inner, r)


@dataclass(frozen=True)
class OriginClassification:
    limit_slope: float
    critical_q: float
    verdict: str
    slope_samples: tuple

    def to_dict(self):
        return {"limit_abs_slope": self.limit_slope, "critical_q": self.critical_q,
                "verdict": self.verdict, "slope_samples": list(self.slope_samples)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _aitken(x1, x2, x3):
    """Aitken extrapolation of a sequence in [0, 1] sampled at r, 10r, 100r (x1 nearest 0)."""
    monotone = (x1 - x2) * (x2 - x3) > 0
    den = x1 + x3 - 2 * x2
    if not monotone or den == 0:
        return x1
    est = (x1 * x3 - x2 * x2) / den
    return float(np.clip(est, 0.0, x1) if x1 < x2 else np.clip(est, x1, 1.0))


def classify_origin_regularity(profile, degenerate_tol=1e-6, per_decade_change=0.01):
    """Extrapolate |w'| to the origin and report integrability and a verdict."""
    mesh = profile.mesh
    if mesh[0] > 1e-6 * profile.r0:
        raise ValidationError("profile must extend down to 1e-6 r0 for extrapolation")
    radii = mesh[0] * np.array([1.0, 10.0, 100.0])
    g = profile.total_flux_at(radii) * radii ** (1 - profile.dim)
    g = np.abs(g)
    root = np.hypot(1.0, g)
    deficit = 1.0 / (root * (root + g))       # 1 - |w'|, without cancellation
    if abs(deficit[1] - deficit[0]) > per_decade_change:
        raise ConvergenceError(
            "slope still changing by more than 1% per decade at r_min; refine the mesh")
    limit = 1.0 - _aitken(*deficit)
    limit = float(np.clip(limit, 0.0, 1.0))
    rad = profile.density
    if isinstance(rad, PowerDatum):
        crit = rad.critical_exponent()
    elif rad.singular_exponent > 0:
        crit = rad.dim / rad.singular_exponent
    else:
        crit = np.inf
    verdict = "gradient-degenerate" if limit >= 1 - degenerate_tol else "strictly-spacelike"
    return OriginClassification(limit, float(crit), verdict, tuple(float(1 - d) for d in deficit))
