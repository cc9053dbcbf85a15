"""Charge densities: analytic radial families, grid-sampled data, mollification,
and the linear Riesz and truncated Wolff potentials of |rho|."""

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve

from . import fields
from .errors import DivergentIntegralError, ValidationError
from .quadrature import gauss_legendre, sphere_rule, unit_ball_volume

_GL_NODES, _GL_WEIGHTS = special.roots_legendre(16)


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


class RadialDensity:
    """A radial charge profile rho(|x|) in dimension `dim`.

    Subclasses implement `value`; `flux` defaults to piecewise Gauss-Legendre
    integration between breakpoints, which is exact to rounding for smooth
    pieces.  `flux(r)` is int_0^r s^(N-1) rho(s) ds (no sphere-area factor).
    """

    family = "radial"
    support = np.inf
    singular_exponent = 0.0   # rho ~ r^(-p) at the origin

    def __init__(self, dim):
        if int(dim) != dim or dim < 3:
            raise ValidationError(f"dim must be an integer >= 3, got {dim}")
        self.dim = int(dim)

    def value(self, r):
        raise NotImplementedError

    def breakpoints(self):
        return []

    def origin_power_law(self):
        """(C, p, r0) when rho = C r^(-p) exactly on B(0, r0) with p > 0, else None."""
        return None

    def parameters(self):
        return {}

    def describe(self):
        return {"family": self.family, "dim": self.dim, **self.parameters()}

    # -- integrals ---------------------------------------------------------
    def _piece_integral(self, a, b, power=1.0):
        """int_a^b s^(N-1) |rho|^power ds on a smooth piece (vectorized in a, b)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        s = a[..., None] + half[..., None] * (_GL_NODES + 1.0)
        vals = np.abs(self.value(s)) ** power if power != 1.0 else self.value(s)
        return half * np.sum(vals * s ** (self.dim - 1) * _GL_WEIGHTS, axis=-1)

    def _cumulative(self, r, start=0.0, start_value=0.0, power=1.0):
        """Cumulative integral from `start` to each r >= start."""
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        top = np.max(flat) if flat.size else start
        knots = [b for b in self.breakpoints() if start < b < top]
        end = min(top, self.support)
        if np.isfinite(end) and end > start:
            knots = np.concatenate([knots, np.linspace(start, end, 257)])
        grid = np.unique(np.concatenate([[start], knots, flat[np.isfinite(flat)]]))
        grid = grid[grid >= start]
        # refine long pieces geometrically so each piece is well resolved
        pieces = []
        for a, b in zip(grid[:-1], grid[1:]):
            if a > 0 and b / a > 1.5:
                k = int(np.ceil(np.log(b / a) / np.log(1.5)))
                sub = a * (b / a) ** (np.arange(k + 1) / k)
                sub[-1] = b
                pieces.append(sub[:-1])
            else:
                pieces.append([a])
        nodes = np.concatenate(pieces + [[grid[-1]]]) if len(grid) > 1 else grid
        inc = self._piece_integral(nodes[:-1], nodes[1:], power) if len(nodes) > 1 else []
        cum = np.concatenate([[start_value], start_value + np.cumsum(inc)])
        out = np.interp(flat, nodes, cum) if len(nodes) > 1 else np.full(flat.shape, start_value)
        # exact lookup (interp is exact at nodes, all r are nodes)
        return out.reshape(r.shape)

    def flux(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValidationError("radii must be nonnegative")
        out = self._cumulative(np.minimum(r, self.support))
        return out

    def total_flux(self):
        if not np.isfinite(self.support):
            raise DivergentIntegralError(f"{self.family}: infinite total charge")
        return float(self.flux(self.support))

    def total_charge(self):
        return float(self.dim * unit_ball_volume(self.dim) * self.total_flux())

    def lq_norm(self, q):
        """(int_{R^N} |rho|^q)^(1/q) by radial quadrature; q = inf gives sup."""
        if not q >= 1:
            raise ValidationError(f"q must be >= 1, got {q}")
        if np.isinf(q):
            if self.singular_exponent > 0:
                return np.inf
            r = np.linspace(0, min(self.support, 1e3), 20001)
            return float(np.max(np.abs(self.value(r))))
        if q * self.singular_exponent >= self.dim:
            raise DivergentIntegralError(
                f"{self.family}: not in L^{q} near the origin (exponent {self.singular_exponent})")
        if not np.isfinite(self.support):
            if np.all(self.value(np.array([1e3, 1e4])) == 0):
                top = 1e3
            else:
                raise DivergentIntegralError(f"{self.family}: not in L^{q} at infinity")
        else:
            top = self.support
        integral = self._lq_integral(q, top)
        return float((self.dim * unit_ball_volume(self.dim) * integral) ** (1.0 / q))

    def _lq_integral(self, q, top):
        return float(self._cumulative(np.array([top]), power=q)[0])


class ZeroDensity(RadialDensity):
    family = "zero"
    support = 0.0

    def value(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def flux(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def lq_norm(self, q):
        if not q >= 1:
            raise ValidationError(f"q must be >= 1, got {q}")
        return 0.0


class ConstantDensity(RadialDensity):
    """rho = c on the ball of the given radius (the whole space by default)."""

    family = "constant"

    def __init__(self, dim, c, radius=np.inf):
        super().__init__(dim)
        if not radius > 0:
            raise ValidationError("radius must be positive")
        self.c = float(c)
        self.support = float(radius)

    def parameters(self):
        return {"c": self.c, "radius": self.support}

    def breakpoints(self):
        return [self.support] if np.isfinite(self.support) else []

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.support, self.c, 0.0)

    def flux(self, r):
        r = np.minimum(np.asarray(r, dtype=float), self.support)
        return self.c * r**self.dim / self.dim

    def _lq_integral(self, q, top):
        return abs(self.c) ** q * top**self.dim / self.dim


class PowerDatum(RadialDensity):
    """rho(r) = C (r^2 + core^2)^(-(1+beta)/2) for r < r0, zero beyond r0 + taper.

    With ``core = 0`` this is the singular profile C r^(-1-beta).  A positive
    ``taper`` multiplies by a C-infinity cutoff going from 1 at r0 to 0 at
    r0 + taper; otherwise the cutoff at r0 is sharp.
    """

    family = "power"

    def __init__(self, dim, amplitude, beta, r0=1.0, core=0.0, taper=0.0):
        super().__init__(dim)
        if not r0 > 0:
            raise ValidationError("cutoff radius r0 must be positive")
        if not beta < dim - 1:
            raise ValidationError(f"beta must be < N - 1 = {dim - 1}, got {beta}")
        if core < 0 or taper < 0:
            raise ValidationError("core and taper must be nonnegative")
        self.amplitude = float(amplitude)
        self.beta = float(beta)
        self.r0 = float(r0)
        self.core = float(core)
        self.taper = float(taper)
        self.support = self.r0 + self.taper
        p = 1.0 + self.beta
        self.singular_exponent = p if (self.core == 0 and p > 0) else 0.0

    def parameters(self):
        return {"amplitude": self.amplitude, "beta": self.beta, "r0": self.r0,
                "core": self.core, "taper": self.taper}

    def breakpoints(self):
        return [self.r0, self.support] if self.taper > 0 else [self.r0]

    def value(self, r):
        r = np.asarray(r, dtype=float)
        p = 1.0 + self.beta
        with np.errstate(divide="ignore"):
            base = self.amplitude * (r * r + self.core**2) ** (-p / 2)
        if self.taper > 0:
            cut = 1.0 - _smooth_step((r - self.r0) / self.taper)
        else:
            cut = (r < self.r0).astype(float)
        return np.where(cut > 0, base * cut, 0.0)

    def _inner_flux(self, r):
        """int_0^r s^(N-1) C (s^2+core^2)^(-p/2) ds for r <= r0 (closed form)."""
        N, p = self.dim, 1.0 + self.beta
        r = np.asarray(r, dtype=float)
        if self.core == 0:
            return self.amplitude * r ** (N - p) / (N - p)
        z = -(r / self.core) ** 2
        return (self.amplitude * r**N / N * self.core ** (-p)
                * special.hyp2f1(p / 2, N / 2, N / 2 + 1, z))

    def flux(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValidationError("radii must be nonnegative")
        inner = self._inner_flux(np.minimum(r, self.r0))
        if self.taper == 0:
            return inner
        f0 = float(self._inner_flux(self.r0))
        outer = self._cumulative(np.clip(r, self.r0, self.support), start=self.r0, start_value=f0)
        return np.where(r <= self.r0, inner, outer)

    def _lq_integral(self, q, top):
        N, p = self.dim, 1.0 + self.beta
        if self.core == 0:
            inner = abs(self.amplitude) ** q * self.r0 ** (N - q * p) / (N - q * p)
        else:
            inner = integrate.quad(lambda s: s ** (N - 1) * abs(self.value(s)) ** q,
                                   0, self.r0, epsabs=0, epsrel=1e-12, limit=200)[0]
        if self.taper == 0:
            return inner
        nodes = np.linspace(self.r0, self.support, 65)
        return inner + float(np.sum(self._piece_integral(nodes[:-1], nodes[1:], q)))

    def origin_power_law(self):
        if self.singular_exponent > 0:
            return self.amplitude, self.singular_exponent, self.r0
        return None

    def critical_exponent(self):
        """Supremum of q with rho in L^q near the origin: N/(beta+1), inf if bounded."""
        if self.singular_exponent <= 0:
            return np.inf
        return self.dim / self.singular_exponent


class BumpCharge(RadialDensity):
    """Total charge Q spread by the normalized bump exp(-1/(1-(r/R)^2))."""

    family = "bump"

    def __init__(self, dim, charge, radius):
        super().__init__(dim)
        if not radius > 0:
            raise ValidationError("radius must be positive")
        self.charge = float(charge)
        self.radius = float(radius)
        self.support = self.radius
        shape_mass = integrate.quad(
            lambda s: s ** (dim - 1) * _bump(s), 0, 1, epsabs=0, epsrel=1e-13)[0]
        self._amp = self.charge / (dim * unit_ball_volume(dim) * shape_mass * self.radius**dim)

    def parameters(self):
        return {"charge": self.charge, "radius": self.radius}

    def breakpoints(self):
        return [self.radius]

    def value(self, r):
        return self._amp * _bump(np.asarray(r, dtype=float) / self.radius)

    def total_flux(self):
        return self.charge / (self.dim * unit_ball_volume(self.dim))


class ScaledDensity(RadialDensity):
    """t^(-1) rho(r / t): the rescaled datum of the scaling identities."""

    def __init__(self, base, t):
        super().__init__(base.dim)
        if not t > 0:
            raise ValidationError("scale factor must be positive")
        self.base = base
        self.t = float(t)
        self.support = base.support * self.t
        self.singular_exponent = base.singular_exponent
        self.family = f"scaled-{base.family}"

    def parameters(self):
        return {"t": self.t, "base": self.base.describe()}

    def breakpoints(self):
        return [b * self.t for b in self.base.breakpoints()]

    def value(self, r):
        return self.base.value(np.asarray(r, dtype=float) / self.t) / self.t

    def origin_power_law(self):
        law = self.base.origin_power_law()
        if law is None:
            return None
        C, p, r0 = law
        return C * self.t ** (p - 1), p, r0 * self.t

    def flux(self, r):
        return self.t ** (self.dim - 1) * self.base.flux(np.asarray(r, dtype=float) / self.t)

    def lq_norm(self, q):
        if np.isinf(q):
            return self.base.lq_norm(q) / self.t
        return self.base.lq_norm(q) * self.t ** (self.dim / q - 1.0)


def _bump(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, 1.0 - x * x, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


FAMILIES = {"zero": ZeroDensity, "constant": ConstantDensity, "power": PowerDatum,
            "bump": BumpCharge}


def radial_from_config(cfg, dim):
    """Build a radial family from {"family": name, "parameters": {...}}."""
    cfg = dict(cfg)
    name = cfg.get("family")
    if name not in FAMILIES:
        raise ValidationError(f"unknown density family {name!r}; choose from {sorted(FAMILIES)}")
    params = dict(cfg.get("parameters", {}))
    if "cutoff" in cfg and name == "power":
        params.setdefault("r0", cfg["cutoff"])
    try:
        return FAMILIES[name](dim, **params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name}: {exc}") from None


# --------------------------------------------------------------------------
@dataclass(eq=False)
class ChargeDensity:
    """A charge datum: analytic radial, sampled on a grid, or mollified."""

    kind: str
    radial: Optional[RadialDensity] = None
    grid: Optional[fields.BoxGrid] = None
    values: Optional[np.ndarray] = None
    base: Optional["ChargeDensity"] = None
    scale: Optional[float] = None
    cached_norms: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("analytic-radial", "grid-sampled", "mollified"):
            raise ValidationError(f"unknown density kind {self.kind!r}")
        if self.kind == "analytic-radial" and self.radial is None:
            raise ValidationError("analytic-radial density needs a radial profile")
        if self.kind != "analytic-radial":
            if self.grid is None or self.values is None:
                raise ValidationError("sampled densities need a grid and values")
            vals = np.array(self.values, dtype=float)
            if vals.shape != self.grid.shape or not np.all(np.isfinite(vals)):
                raise ValidationError("density values must be finite with the grid's shape")
            vals.flags.writeable = False
            self.values = vals
        if self.kind == "mollified" and not (self.scale and self.scale > 0):
            raise ValidationError("mollification scale must be positive")

    @classmethod
    def analytic(cls, radial):
        return cls("analytic-radial", radial=radial)

    @classmethod
    def on_grid(cls, values, grid):
        return cls("grid-sampled", grid=grid, values=values)

    @property
    def dim(self):
        return self.radial.dim if self.radial is not None else self.grid.dim

    def norm(self, q):
        """|rho|_q, cached per exponent (continuous for analytic, discrete otherwise)."""
        key = float(q)
        if key not in self.cached_norms:
            if self.kind == "analytic-radial":
                val = self.radial.lq_norm(q)
            else:
                val = fields.lq_norm(self.values, self.grid, q)
            self.cached_norms[key] = float(val)
        return self.cached_norms[key]

    def grid_values(self, grid):
        if self.kind == "analytic-radial":
            return sample_to_grid(self, grid)
        if self.grid != grid:
            raise ValidationError("density was sampled on a different grid")
        return self.values


def point_charge(charge, grid):
    """A discrete Dirac mass at the origin node (charge / h^N at one node)."""
    vals = np.zeros(grid.shape)
    vals[(grid.points_per_axis // 2,) * grid.dim] = charge / grid.cell_volume
    return ChargeDensity.on_grid(vals, grid)


def _origin_cell_average(amplitude, p, h, dim):
    """Exact mean of C r^(-p) over the cube [-h/2, h/2]^N.

    Splitting the cube into N pyramids with apex at the origin reduces it to
    N a^(-p)/(N-p) * int_{[0,1]^(N-1)} (1+|t|^2)^(-p/2) dt, with a = h/2.
    """
    x, w = gauss_legendre(24, 0.0, 1.0)
    acc = 0.0
    for idx in itertools.product(range(len(x)), repeat=dim - 1):
        t2 = sum(x[i] ** 2 for i in idx)
        acc += np.prod([w[i] for i in idx]) * (1 + t2) ** (-p / 2)
    a = h / 2
    return amplitude * dim * a ** (-p) / (dim - p) * acc


def sample_to_grid(density, grid, order=4):
    """Dual-cell averages of an analytic radial density at the grid nodes.

    Each node receives the mean of rho over [x - h/2, x + h/2]^N by tensor
    Gauss-Legendre quadrature; for singular power data the origin cell is
    integrated in closed form.
    """
    if density.kind != "analytic-radial":
        return density.grid_values(grid)
    rad = density.radial
    if rad.dim != grid.dim:
        raise ValidationError("density and grid dimensions differ")
    if rad.singular_exponent >= grid.dim:
        raise DivergentIntegralError("density is not integrable at the origin")
    h = grid.spacing
    xq, wq = special.roots_legendre(order)
    xq, wq = 0.5 * h * xq, 0.5 * wq
    coords = grid.coordinates()
    out = np.zeros(grid.shape)
    for idx in itertools.product(range(order), repeat=grid.dim):
        r2 = sum((c + xq[i]) ** 2 for c, i in zip(coords, idx))
        out += np.prod([wq[i] for i in idx]) * rad.value(np.sqrt(r2))
    if rad.singular_exponent > 0:
        origin = (grid.points_per_axis // 2,) * grid.dim
        law = rad.origin_power_law()
        if law is not None and law[2] > np.sqrt(grid.dim) * h / 2:
            out[origin] = _origin_cell_average(law[0], law[1], h, grid.dim)
        else:
            raise ValidationError("singular datum must be a power law across the origin cell")
    return out


def mollify(density, n, grid):
    """Convolve with the normalized bump kernel of radius 1/n (zero extension)."""
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n}")
    eps = 1.0 / n
    h = grid.spacing
    if eps < h:
        raise ValidationError(f"mollification radius 1/n = {eps:g} is below the grid spacing {h:g}")
    vals = sample_to_grid(density, grid)
    m = int(np.floor(eps / h))
    ax = h * np.arange(-m, m + 1)
    r2 = sum(a**2 for a in np.meshgrid(*([ax] * grid.dim), indexing="ij", sparse=True))
    kernel = _bump(np.sqrt(r2) / eps)
    kernel /= kernel.sum()
    smoothed = fftconvolve(vals, kernel, mode="same")
    return ChargeDensity("mollified", grid=grid, values=smoothed, base=density, scale=eps)


# --------------------------------------------------------------------------
def _cap_fraction(c, dim):
    """Normalized measure of {omega in S^(N-1) : omega . e >= c}."""
    c = np.clip(c, -1.0, 1.0)
    half = 0.5 * special.betainc((dim - 1) / 2, 0.5, 1.0 - c * c)
    return np.where(c >= 0, half, 1.0 - half)


def ball_mass(radial, r, t, epsrel=1e-11):
    """|rho|(B_t(x)) for a radial density and |x| = r."""
    N = radial.dim
    area = N * unit_ball_volume(N)
    if t <= 0:
        return 0.0
    if r == 0:
        return area * abs(float(radial.flux(min(t, radial.support))))
    full = area * abs(float(radial.flux(min(t - r, radial.support)))) if t > r else 0.0
    lo, hi = abs(t - r), min(t + r, radial.support)
    if hi <= lo:
        return full

    def integrand(s):
        c = (s * s + r * r - t * t) / (2 * s * r)
        return s ** (N - 1) * abs(float(radial.value(s))) * float(_cap_fraction(c, N))

    pts = [b for b in radial.breakpoints() if lo < b < hi]
    part = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=0,
                          epsrel=epsrel, limit=200)[0]
    return full + area * part


def riesz_potential_radial(density, r, epsrel=1e-8):
    """int_0^inf |rho|(B_t(x)) t^(-N) dt at a point x with |x| = r."""
    rad = density.radial if isinstance(density, ChargeDensity) else density
    if rad is None:
        raise ValidationError("riesz_potential_radial needs an analytic radial density")
    if r < 0:
        raise ValidationError("distance must be nonnegative")
    N = rad.dim
    if isinstance(rad, ZeroDensity):
        return 0.0
    if not np.isfinite(rad.support):
        raise DivergentIntegralError("density with unbounded support has infinite mass")
    if r == 0 and rad.singular_exponent >= 1:
        raise DivergentIntegralError(
            f"Riesz potential diverges at the origin (singular exponent {rad.singular_exponent} >= 1)")
    top = rad.support + r
    mass = ball_mass(rad, r, top)
    tail = mass * top ** (1 - N) / (N - 1)
    f = lambda t: ball_mass(rad, r, t, epsrel=epsrel * 1e-2) * t ** (-N)
    knots = sorted({k for b in rad.breakpoints() for k in (abs(b - r), b + r) if 0 < k < top}
                   | ({r} if 0 < r < top else set()))
    edges = [0.0] + knots + [top]
    body = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            body += integrate.quad(f, a, b, epsabs=0, epsrel=epsrel, limit=200)[0]
    return float(body + tail)


@dataclass(frozen=True)
class WolffResult:
    value: float
    bound: float
    bound_applicable: bool


def wolff_potential_truncated(density, x, r, alpha, q=None, n_radial=256, n_sphere=16):
    """Truncated Wolff potential int_0^r |rho|(B_t(x)) t^(1-alpha-N) dt/t of a grid density.

    |rho| is the multilinear interpolant of the nodal |values|.  By Fubini the
    value equals int_{B_r(x)} |rho(y)| (s^(1-N-alpha) - r^(1-N-alpha)) / (N-1+alpha) dy
    with s = |y - x|, integrated in polar coordinates.  When ``q`` is given the
    Hoelder bound omega_N^(1-1/q) |rho|_q r^(1-alpha-N/q) / (1-alpha-N/q) is also
    returned.
    """
    grid = density.grid
    vals = np.abs(density.values)
    N = grid.dim
    x = np.asarray(x, dtype=float)
    if x.shape != (N,):
        raise ValidationError(f"point must have {N} coordinates")
    if not r > 0 or alpha < 0 or alpha >= 1:
        raise ValidationError("need r > 0 and 0 <= alpha < 1")
    if np.any(np.abs(x) + r > grid.extent * (1 + 1e-12)):
        raise ValidationError("ball B_r(x) leaves the box")
    axis = grid.axis()
    interp = RegularGridInterpolator((axis,) * N, vals, method="linear",
                                     bounds_error=False, fill_value=0.0)
    dirs, wdir = sphere_rule(N, n_sphere)
    # substitution s = r u^(1/(1-alpha)) absorbs the s^(-alpha) singularity
    panels = np.linspace(0.0, 1.0, n_radial // 4 + 1)
    u, wu = [], []
    for a, b in zip(panels[:-1], panels[1:]):
        uu, ww = gauss_legendre(4, a, b)
        u.append(uu)
        wu.append(ww)
    u, wu = np.concatenate(u), np.concatenate(wu)
    expo = 1.0 / (1.0 - alpha)
    s = r * u**expo
    pts = x[None, None, :] + s[:, None, None] * dirs[None, :, :]
    sphere_sum = interp(pts.reshape(-1, N)).reshape(len(s), len(wdir)) @ wdir
    kernel = (1.0 - (s / r) ** (N - 1 + alpha)) / (N - 1 + alpha)
    value = r ** (1 - alpha) / (1 - alpha) * float(np.sum(wu * sphere_sum * kernel))
    bound, ok = np.inf, False
    if q is not None:
        ok = alpha + N / q < 1
        if ok:
            om = unit_ball_volume(N)
            expn = 1 - alpha - N / q
            bound = om ** (1 - 1 / q) * fields.lq_norm(vals, grid, q) * r**expn / expn
    return WolffResult(value, float(bound), bool(ok))
