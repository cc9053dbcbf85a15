"""Small quadrature toolkit: unit-ball constants, product rules on spheres and
integration over star-shaped regions around a point."""

from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi, roots_legendre


def unit_ball_volume(dim):
    """Volume omega_N of the unit ball in R^dim."""
    return np.pi ** (dim / 2) / gamma_fn(dim / 2 + 1)


def sphere_area(dim):
    """Surface measure of the unit sphere S^{dim-1}."""
    return dim * unit_ball_volume(dim)


@lru_cache(maxsize=None)
def polar_rule(dim, n):
    """Nodes x = cos(theta) and weights for integrating a function of the polar
    angle over S^{dim-1}; the weights sum to the sphere area."""
    a = (dim - 3) / 2
    if a == 0:
        x, w = roots_legendre(n)
    else:
        x, w = roots_jacobi(n, a, a)
    w = w * sphere_area(dim - 1) if dim > 2 else w
    return x, w


@lru_cache(maxsize=None)
def sphere_rule(dim, n):
    """Product rule on S^{dim-1}: returns (directions (M, dim), weights (M,))."""
    if dim == 2:
        phi = 2 * np.pi * (np.arange(2 * n) + 0.5) / (2 * n)
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return dirs, np.full(2 * n, np.pi / n)
    a = (dim - 3) / 2
    x, w = (roots_legendre(n) if a == 0 else roots_jacobi(n, a, a))
    sub_dirs, sub_w = sphere_rule(dim - 1, n)
    s = np.sqrt(1 - x**2)
    dirs = np.concatenate(
        [x[:, None, None].repeat(len(sub_w), 1),
         s[:, None, None] * sub_dirs[None, :, :]], axis=2).reshape(-1, dim)
    weights = (w[:, None] * sub_w[None, :]).ravel()
    return dirs, weights


def gauss_legendre(n, a=0.0, b=1.0):
    x, w = roots_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1), half * w


def radial_integral(f, d, outer, dim, n_polar=48, n_radial=48):
    """Integrate a radial integrand f(|x|) over the star-shaped region
    {x0 + t*omega : 0 <= t < outer(cos_theta)} where |x0| = d.

    `outer` maps an array of cos(theta) values (angle measured from x0) to the
    exit distance along each ray; it must be vectorized.
    """
    cth, wth = polar_rule(dim, n_polar)
    tmax = np.asarray(outer(cth), dtype=float)
    u, wu = gauss_legendre(n_radial)
    t = tmax[:, None] * u[None, :]
    r = np.sqrt(np.maximum(d * d + t * t + 2 * d * t * cth[:, None], 0.0))
    vals = f(r) * t ** (dim - 1)
    return float(np.sum(wth * tmax * (vals @ wu)))
