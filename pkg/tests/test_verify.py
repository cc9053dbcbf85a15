import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from borninfeld import fields, minimizer, verify
from borninfeld.charge import ChargeDensity, PowerDatum, ZeroDensity, mollify, point_charge
from borninfeld.errors import ConstraintViolation, HypothesisError, ValidationError
from borninfeld.quadrature import unit_ball_volume
from borninfeld.radial import solve_radial


def grid3(n=17, extent=1.0):
    return fields.BoxGrid(3, extent, n)


# -- Lorentz balls ----------------------------------------------------------------
def test_lorentz_ball_zero_field_is_euclidean():
    g = grid3()
    u = fields.GridField.zeros(g)
    for R in (0.2, 0.5, 0.9):
        mask = verify.lorentz_ball_mask(u, np.zeros(3), R)
        assert np.array_equal(mask, verify.euclidean_ball_mask(g, np.zeros(3), R))


def test_lorentz_ball_affine_field_is_ellipsoid():
    g = grid3(21)
    u = fields.GridField.from_function(g, lambda x, y, z: 0.8 * x, dirichlet=True)
    R = 0.4
    mask = verify.lorentz_ball_mask(u, np.zeros(3), R)
    ball = verify.euclidean_ball_mask(g, np.zeros(3), R)
    assert np.all(mask[ball]) and mask.sum() > ball.sum()
    x, y, z = g.cell_coordinates()
    # semi-axis R / 0.6 along the slope direction
    ellipsoid = 0.36 * x**2 + y**2 + z**2 < R * R
    assert np.array_equal(mask, ellipsoid)


def test_lorentz_ball_rejects_timelike_field():
    g = grid3()
    u = fields.GridField.from_function(g, lambda x, y, z: 1.5 * x, dirichlet=True)
    with pytest.raises(ConstraintViolation):
        verify.lorentz_ball_mask(u, np.zeros(3), 0.5)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), R=st.floats(0.1, 0.9),
       c=st.tuples(*[st.floats(-0.5, 0.5)] * 3))
def test_euclidean_ball_inside_lorentz_ball(seed, R, c):
    g = grid3()
    vals = np.random.default_rng(seed).uniform(-1, 1, g.shape)
    vals[g.boundary_mask()] = 0.0
    u = fields.GridField(g, 0.9 * vals / minimizer._max_corner_norm(vals, g))
    mask = verify.lorentz_ball_mask(u, np.array(c), R)
    ball = verify.euclidean_ball_mask(g, np.array(c), R)
    assert np.all(mask[ball])


# -- mean-value estimate ---------------------------------------------------------------
def test_unit_ball_volume():
    assert unit_ball_volume(3) == pytest.approx(4.18879020478639, rel=1e-14)


def test_trivial_estimate_margin():
    prof = solve_radial(ZeroDensity(3))
    gam = 1 / 6
    for R in (0.3, 1.0, 2.5):
        rep = verify.evaluate_estimate(prof, 0.0, np.zeros(3), R, gamma=gam, C=5.0, q=21)
        expected = unit_ball_volume(3) * (1 - np.exp(-gam / 4))
        assert rep.term_hessian == 0.0 and rep.term_datum == 0.0
        assert abs(rep.margin - expected) < 1e-12


def test_trivial_estimate_on_grid():
    g = grid3(33)
    rep = verify.evaluate_estimate(fields.GridField.zeros(g), 0.0, np.zeros(3), 0.5, q=21)
    # the cell-counted ball volume is first-order accurate, so compare the volume term
    assert rep.term_volume == pytest.approx(unit_ball_volume(3) * np.exp(-rep.gamma / 4), rel=0.03)
    assert rep.term_lhs == unit_ball_volume(3) and rep.term_hessian == 0.0


def test_estimate_hypotheses():
    prof = solve_radial(ZeroDensity(3))
    with pytest.raises(HypothesisError):
        verify.evaluate_estimate(prof, 0.0, np.zeros(3), 1.0, q=6)
    with pytest.raises(ValidationError):
        verify.evaluate_estimate(prof, 0.0, np.zeros(3), 1.0, gamma=0.5, q=21)
    with pytest.raises(ValidationError):
        verify.evaluate_estimate(prof, 0.0, np.zeros(3), -1.0, q=21)
    # a gradient-degenerate profile is not strictly spacelike at the origin
    dens = PowerDatum(3, 1.5, 0.5)
    with pytest.raises(HypothesisError):
        verify.evaluate_estimate(solve_radial(dens), 1.0,
                                 np.zeros(3), 0.5, q=21)


def test_datum_term_against_direct_quadrature():
    from scipy import integrate
    q, R, N, nq = 21.0, 0.7, 3, 0.3
    b = 2 * N / q
    c = 2.25 * nq**2
    om = unit_ball_volume(N)
    e = (q - 2) / 2
    # substitute s = x^(1/(1-b)) to remove the endpoint singularity
    f = lambda x: (q / 2 * om ** (2 / q) + c / (1 - b) * x ** ((2 - b) / (1 - b))) ** e / (1 - b)
    direct = c * R * (2 / q) ** e * integrate.quad(f, 0, R ** (1 - b), epsrel=1e-13)[0]
    assert verify.datum_term(nq, q, R, N) == pytest.approx(direct, rel=1e-10)


def test_calibration_small_suite_nonnegative():
    cases, q = verify.calibration_suite(n_pairs=3)
    cal = verify.calibrate_constant(cases, q=q)
    assert cal.C > 0
    margins = [verify.evaluate_estimate(p, r, x, R, C=cal.C, q=q).margin for p, r, x, R in cases]
    assert min(margins) >= 0
    # a slightly larger constant breaks the binding case
    over = [verify.evaluate_estimate(p, r, x, R, C=cal.C * 1.01, q=q).margin
            for p, r, x, R in cases]
    assert min(over) < 0


def test_calibration_grid_design():
    cases, q = verify.calibration_suite(betas=(-0.5,), design="grid", n_d=3, n_R=4)
    assert q == 21 and len(cases) == 12
    radii = sorted({R for _, _, _, R in cases})
    assert radii[0] == pytest.approx(0.1) and radii[-1] == pytest.approx(2.0)
    assert min(np.linalg.norm(x) for _, _, x, _ in cases) == 0.0
    with pytest.raises(ValidationError):
        verify.calibration_suite(design="sobol")


def test_report_json_roundtrip():
    import json
    prof = solve_radial(ZeroDensity(3))
    rep = verify.evaluate_estimate(prof, 0.0, np.zeros(3), 1.0, q=21)
    d = json.loads(rep.to_json())
    assert d["margin"] == rep.margin and d["version"] == verify.REPORT_VERSION


# -- constants and small data ----------------------------------------------------------
def test_sobolev_constant_known_value():
    # |u|_6 <= S^(-1/2) |grad u|_2 in R^3 with S = 3 (pi/2)^(4/3)
    assert verify.sobolev_constant(3, 2) == pytest.approx((3 * (np.pi / 2) ** (4 / 3)) ** -0.5,
                                                           rel=1e-14)
    with pytest.raises(ValidationError):
        verify.sobolev_constant(3, 3)


def test_small_data_zero_bound():
    rep = verify.small_data_report(3, 1.2, 21, 0.0, 0.0)
    assert abs(rep.v_gamma_bound - np.exp(-rep.gamma / 4)) < 1e-15
    assert abs(rep.delta - np.exp(-0.25)) < 1e-12
    rep1 = verify.small_data_report(3, 1, 21, 0.0, 0.0)
    assert abs(rep1.delta - np.exp(-0.25)) < 1e-12


def test_small_data_zero_bound_symbolic():
    g, w = sympy.symbols("gamma omega", positive=True)
    c1 = w
    positive = sympy.exp(-g / 4) * w ** (g + 1) / c1 ** (1 + g)
    assert sympy.simplify(positive ** (1 / g) - sympy.exp(sympy.Rational(-1, 4))) == 0


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 0.05), b=st.floats(0, 0.05), da=st.floats(1e-4, 0.01),
       db=st.floats(1e-4, 0.01))
def test_small_data_bound_decreasing(a, b, da, db):
    base = verify.small_data_report(3, 1.2, 21, a, b).v_gamma_bound
    assert verify.small_data_report(3, 1.2, 21, a + da, b).v_gamma_bound < base
    assert verify.small_data_report(3, 1.2, 21, a, b + db).v_gamma_bound < base


def test_small_data_constants_positive():
    rep = verify.small_data_report(3, 1.2, 21, 0.01, 0.02)
    assert rep.c1 > 0 and rep.c2 > 0 and 0 < rep.delta < 1
    rep1 = verify.small_data_report(3, 1, 21, 0.01, 0.02)
    assert rep1.morrey_constant > 0 and 0 < rep1.delta < 1


def test_small_data_validation():
    with pytest.raises(ValidationError):
        verify.small_data_report(3, 1.5, 21, 0.0, 0.0)
    with pytest.raises(ValidationError):
        verify.small_data_report(3, 1.2, 6, 0.0, 0.0)
    with pytest.raises(ValidationError):
        verify.small_data_report(3, 1.2, 21, -1.0, 0.0)


def test_small_data_threshold_point_charge_shape():
    g = grid3(17)
    shape = mollify(point_charge(1.0, g), 2, g)
    t, c3 = verify.small_data_threshold(3, 1.2, 21, shape.norm(21), shape.norm(1.2))
    assert t > 0 and c3 > 0
    below = verify.small_data_report(3, 1.2, 21, 0.99 * t * shape.norm(21),
                                     0.99 * t * shape.norm(1.2))
    above = verify.small_data_report(3, 1.2, 21, 1.01 * t * shape.norm(21),
                                     1.01 * t * shape.norm(1.2))
    assert below.v_gamma_bound > 0 >= above.v_gamma_bound


# -- regularized operator ------------------------------------------------------------
def test_regularized_operator_examples():
    op = verify.make_regularized_operator(0.1)
    assert np.array_equal(verify.a_eps(op, np.zeros(3)), np.zeros(3))
    assert np.allclose(verify.a_eps_jacobian(op, np.zeros(3)), np.eye(3), atol=0)
    z = np.array([0.3, 0.4, 0.0])
    assert np.allclose(verify.a_eps(op, z), z / np.sqrt(0.75), rtol=1e-15)
    z = np.array([2.0, 0.0, 0.0])
    assert verify.a_eps(op, z)[0] == pytest.approx(2 / np.sqrt(1 - 0.95**2), rel=1e-14)


def test_phi_is_c2():
    op = verify.make_regularized_operator(0.2)
    for r in (op.lo, op.lo + op.width):
        h = 1e-6
        left, right = op.phi_prime(r - h), op.phi_prime(r + h)
        assert abs(left - right) < 1e-5
        # one-sided second differences differ by O(h), a jump would be O(1)
        d2l = (op.phi_prime(r - h) - op.phi_prime(r - 2 * h)) / h
        d2r = (op.phi_prime(r + 2 * h) - op.phi_prime(r + h)) / h
        assert abs(d2l - d2r) < 1e-2
    r = np.linspace(0, 2, 4001)
    assert np.all(np.diff(op.phi(r)) >= 0)
    assert op.phi(5.0) == pytest.approx(1 - 0.1)


@settings(max_examples=50, deadline=None)
@given(eps=st.floats(0.02, 0.9), frac=st.floats(0, 1),
       d=st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_agrees_with_raw_flux_below_threshold(eps, frac, d):
    op = verify.RegularizedOperator(eps)
    z = np.array(d) / np.linalg.norm(d) * frac * (1 - eps)
    raw = z / np.sqrt(1 - z @ z)
    assert np.allclose(verify.a_eps(op, z), raw, rtol=1e-14, atol=0)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_structure_conditions(eps):
    op = verify.make_regularized_operator(eps)
    rep = verify.check_structure_conditions(op, 2000, seed=1)
    assert rep.min_ellipticity_ratio >= 1 - 1e-12
    assert rep.min_eigenvalue >= 1 - 1e-12
    assert rep.max_symmetry_error == 0.0
    assert rep.max_fd_error < 1e-6
    assert rep.empirical_L <= rep.analytic_L * (1 + 1e-9)
    assert rep.analytic_L >= rep.plateau_bound


def test_regularized_operator_validation():
    with pytest.raises(ValidationError):
        verify.make_regularized_operator(1.0)
    with pytest.raises(ValidationError):
        verify.check_structure_conditions(verify.make_regularized_operator(0.1), 0)


# -- scaling ------------------------------------------------------------------------
def test_scaling_identity_t1_exact():
    dens = PowerDatum(3, 2.5, -0.5, r0=0.5, core=0.1, taper=0.2)
    rep = verify.scaling_check(dens, 1.0, grid3())
    assert rep.norm_defect == 0.0 and rep.energy_defect == 0.0


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_scaling_identity(t):
    dens = PowerDatum(3, 2.5, -0.5, r0=0.5, core=0.1, taper=0.2)
    rep = verify.scaling_check(dens, t, grid3(), q=7)
    assert rep.norm_expected == pytest.approx(t ** -4)
    assert rep.norm_defect < 1e-6 and rep.energy_defect < 1e-6
    assert rep.energy_expected == pytest.approx(t**3)


def test_scaling_analytic_power_family():
    dens = PowerDatum(3, 2.75, -0.75, r0=0.5)
    rep = verify.scaling_check(dens, 2.0, grid3(), q=7)
    assert rep.analytic_norm_defect is not None and rep.analytic_norm_defect < 1e-10


def test_scaling_validation():
    with pytest.raises(ValidationError):
        verify.scaling_check(PowerDatum(3, 2.5, -0.5), 0.0, grid3())
