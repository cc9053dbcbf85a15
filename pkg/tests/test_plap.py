from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from borninfeld import fields, minimizer, plap
from borninfeld.errors import ValidationError


def grid3(n=17, extent=1.0):
    return fields.BoxGrid(3, extent, n)


def test_first_coefficients_exact():
    c = plap.series_coefficients(4)
    assert c.exact[:3] == (Fraction(1, 2), Fraction(1, 8), Fraction(1, 16))
    assert c.coefficients[:3] == (0.5, 0.125, 0.0625)
    with pytest.raises(ValidationError):
        plap.series_coefficients(0)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_taylor_remainder_order(k):
    # remainder of the partial sum behaves like c_(k+1) s^(k+1)
    c = plap.series_coefficients(k + 1)
    ck = plap.series_coefficients(k)
    for s in (1e-3, 2e-3):
        rem = (1 - np.sqrt(1 - s)) - float(ck.partial_sum(s))
        assert rem == pytest.approx(c.coefficients[k] * s ** (k + 1), rel=5e-3)


def test_partial_sums_zero_and_monotone():
    sums = [float(plap.series_coefficients(k).partial_sum(0.7)) for k in range(1, 12)]
    assert float(plap.series_coefficients(3).partial_sum(0.0)) == 0.0
    assert np.all(np.diff(sums) > 0)
    assert sums[-1] < 1 - np.sqrt(1 - 0.7)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, 0.999))
def test_partial_sum_sandwich(k, s):
    c = plap.series_coefficients(k + 1)
    ps = float(plap.series_coefficients(k).partial_sum(s))
    exact = 1 - np.sqrt(1 - s)
    assert ps <= exact + 1e-15
    assert exact <= ps + c.coefficients[k] * s ** (k + 1) / (1 - s) + 1e-15


def test_derivative_of_partial_sum():
    c = plap.series_coefficients(6)
    s, h = 0.4, 1e-6
    fd = (float(c.partial_sum(s + h)) - float(c.partial_sum(s - h))) / (2 * h)
    assert float(c.derivative(s)) == pytest.approx(fd, rel=1e-8)


def test_truncated_energy_bounds_full_energy():
    g = grid3(9)
    rng = np.random.default_rng(0)
    vals = rng.uniform(-1, 1, g.shape)
    vals[g.boundary_mask()] = 0.0
    vals *= 0.9 / minimizer._max_corner_norm(vals, g)
    u = fields.GridField(g, vals)
    rho = rng.standard_normal(g.shape)
    assert plap.truncated_energy(fields.GridField.zeros(g), rho, plap.series_coefficients(2)) == 0.0
    full = minimizer.energy(u, rho)
    energies = [plap.truncated_energy(u, rho, plap.series_coefficients(k)) for k in (1, 2, 4, 8, 32)]
    assert np.all(np.diff(energies) > 0)
    assert energies[-1] <= full


def test_xnorm_examples():
    g = grid3(9)
    assert plap.xnorm_2k(fields.GridField.zeros(g), 3).combined == 0.0
    # unit-slope ramp in x on a slab: every corner gradient of the ramp cells has norm 1
    x = g.axis()
    vals = np.zeros(g.shape)
    vals[1:-1, 1:-1, 1:-1] = 0.0
    ramp = np.clip(x + 0.5, 0, None)[:, None, None] * np.ones((1,) + g.shape[1:])
    u = fields.GridField(g, ramp, dirichlet=True)
    _, s = minimizer._state(u.values, g)
    V = np.sum(s) * g.cell_volume / 8       # s is 0 or 1 at every corner
    assert np.all((s == 0) | np.isclose(s, 1))
    xn = plap.xnorm_2k(u, 3)
    assert xn.grad2_sq == pytest.approx(V, rel=1e-12)
    assert xn.grad2k == pytest.approx(V ** (1 / 6), rel=1e-12)


def test_xnorm_tends_to_sup():
    g = grid3(9)
    vals = np.random.default_rng(1).uniform(-1, 1, g.shape)
    vals[g.boundary_mask()] = 0.0
    u = fields.GridField(g, vals)
    top = fields.max_corner_gradient_norm(fields.gradient(u))
    # the box volume enters as vol^(1/2k), so the approach is monotone once k is moderate
    gaps = [abs(plap.xnorm_2k(u, k).grad2k - top) for k in (4, 16, 64, 256, 1024)]
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 0.01 * top


def test_truncated_minimizer_zero_charge():
    g = grid3()
    res = plap.minimize_truncated(None, g, 3)
    assert not np.any(res.field.values)


def test_k1_matches_direct_poisson_solve():
    g = grid3()
    rho = plap.standard_test_datum(g)
    res = plap.minimize_truncated(rho, g, 1)
    rhs = minimizer.trapezoid_weights(g) * rho.values / g.cell_volume
    direct = plap.sparse_poisson_solve(rhs, g)
    assert np.abs(res.field.values - direct).max() < 1e-8


def test_series_convergence_to_full_minimizer():
    g = grid3()
    rho = plap.standard_test_datum(g)
    ref = minimizer.minimize(rho, g)
    dists, energies = [], []
    for k in (1, 2, 4, 8, 16):
        res = plap.minimize_truncated(rho, g, k)
        assert res.extra["order"] == k
        dists.append(np.abs(res.field.values - ref.field.values).max())
        energies.append(res.energy)
    assert np.all(np.diff(dists) <= 0)
    assert dists[-1] < dists[0]
    # the truncated minimum energies rise toward the constrained minimum
    assert np.all(np.diff(energies) >= 0)
    assert energies[-1] == pytest.approx(ref.energy, rel=1e-8)


def test_small_order_may_exceed_unit_gradient():
    g = grid3()
    rho = plap.standard_test_datum(g, charge=6.0)
    res = plap.minimize_truncated(rho, g, 1)
    assert res.sup_gradient_norm > 1
