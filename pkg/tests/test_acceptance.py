"""End-to-end acceptance criteria.  Each test prints one PASS/FAIL line with the
measured quantities and the pinned tolerances, then asserts."""

import time
from fractions import Fraction

import numpy as np
import pytest
import sympy

from borninfeld import charge, cli, fields, gronwall, minimizer, plap, radial, verify
from borninfeld.charge import BumpCharge, PowerDatum
from borninfeld.quadrature import unit_ball_volume

# pinned tolerances
RADIAL_IDENTITY_TOL = 1e-10
ORIGIN_SLOPE_MIN = 0.999
RADIAL_RUNTIME_S = 5.0
GRID_RATIO_MAX = 0.6
GRID_RUNTIME_S = 600.0
ENERGY_PAIR_TOL = 1e-8
SCALING_TOL = 1e-6
TRIVIAL_MARGIN_TOL = 1e-12
SMALL_DATA_TOL = 1e-12
SMALL_DATA_RUNTIME_S = 1.0
ELLIPTICITY_TOL = 1e-10
FD_JACOBIAN_TOL = 1e-6
GRONWALL_TOL = 1e-4
GRONWALL_RUNTIME_S = 30.0
POISSON_MATCH_TOL = 1e-8


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return emit


def test_criterion_01_radial_toy_datum(report):
    start = time.perf_counter()
    N, beta = 3, 0.5
    dens = PowerDatum(N, N - 1 - beta, beta)
    prof = radial.solve_radial(dens)
    cls = radial.classify_origin_regularity(prof)
    elapsed = time.perf_counter() - start
    target = -prof.mesh ** -beta
    inside = prof.mesh <= dens.r0
    err = float(np.max(np.abs(prof.flux_ratio()[inside] / target[inside] - 1)))
    ok = (err <= RADIAL_IDENTITY_TOL and cls.limit_slope >= ORIGIN_SLOPE_MIN
          and cls.critical_q == 2.0 and elapsed < RADIAL_RUNTIME_S)
    report(1, ok, f"identity rel err {err:.2e} (tol {RADIAL_IDENTITY_TOL:g}), |w'(0)| "
                  f"{cls.limit_slope:.6f} (>= {ORIGIN_SLOPE_MIN}), critical q {cls.critical_q} "
                  f"(== 2), {elapsed:.2f}s (< {RADIAL_RUNTIME_S}s)")
    assert ok


def _point_charge_grid_errors():
    Q = 0.1 * 4 * np.pi
    prof = radial.solve_radial(BumpCharge(3, Q, 0.5))
    out = {}
    for n in (33, 65):
        g = fields.BoxGrid(3, 1.0, n)
        rho = charge.mollify(charge.point_charge(Q, g), 2, g)
        exact = prof.potential_at(g.node_distance())
        t0 = time.perf_counter()
        res = minimizer.minimize(rho, g, minimizer.EnergyConfig(tolerance=1e-13), boundary=exact)
        out[n] = (float(np.max(np.abs(res.field.values - exact))), time.perf_counter() - t0, res)
    return out


def test_criterion_02_radial_grid_oracle(report):
    errs = _point_charge_grid_errors()
    e33, e65, t65 = errs[33][0], errs[65][0], errs[65][1]
    ratio = e65 / e33
    ok = ratio <= GRID_RATIO_MAX and t65 < GRID_RUNTIME_S
    report(2, ok, f"sup err 33^3 {e33:.3e}, 65^3 {e65:.3e}, ratio {ratio:.3f} "
                  f"(<= {GRID_RATIO_MAX}), 65^3 time {t65:.1f}s (< {GRID_RUNTIME_S:.0f}s)")
    assert ok


def _sandwich_ok(u):
    _, s = minimizer._state(u.values, u.grid)
    dens = 1 - np.sqrt(1 - s)
    return bool(np.all(0.5 * s <= dens) and np.all(dens <= s))


def test_criterion_03_energy_identities(report):
    g = fields.BoxGrid(3, 1.0, 17)
    rho = plap.standard_test_datum(g)
    zero_energy = minimizer.energy(fields.GridField.zeros(g), rho)
    zero_ok = zero_energy == 0.0 and np.signbit(zero_energy) == np.signbit(0.0)
    sandwich, pair_ok, defects = True, True, []
    worst = -np.inf
    for n in (17, 33, 65):
        g = fields.BoxGrid(3, 1.0, n)
        rho = plap.standard_test_datum(g)
        res = minimizer.minimize(rho, g)
        sandwich &= _sandwich_ok(res.field)
        assert res.min_v > 0
        wr = minimizer.weak_residual(res.field, rho)
        scale = max(1.0, abs(wr.rhs))
        worst = max(worst, (wr.lhs - wr.rhs) / scale)
        pair_ok &= wr.lhs <= wr.rhs + ENERGY_PAIR_TOL * scale
        defects.append(wr.defect)
    # the point-charge minimizers of criterion 2 are also checked cellwise
    for _, _, res in _point_charge_grid_errors().values():
        sandwich &= _sandwich_ok(res.field)
    decreasing = bool(np.all(np.diff(defects) < 0))
    ok = zero_ok and sandwich and pair_ok and decreasing
    report(3, ok, f"I(0) = {zero_energy!r} bitwise; sandwich every cell {sandwich}; max "
                  f"(lhs-rhs)/scale {worst:.2e} (<= {ENERGY_PAIR_TOL:g}); defects "
                  f"{', '.join(f'{d:.2e}' for d in defects)} decreasing {decreasing}")
    assert ok


def test_criterion_04_scaling(report):
    g = fields.BoxGrid(3, 1.0, 17)
    dens = PowerDatum(3, 2.5, -0.5, r0=0.5, core=0.1, taper=0.2)
    reps = [verify.scaling_check(dens, t, g, q=7) for t in (0.5, 2.0)]
    worst = max(max(r.norm_defect, r.energy_defect) for r in reps)
    analytic = verify.scaling_check(PowerDatum(3, 2.75, -0.75, r0=0.5), 2.0, g, q=7)
    # power family A |x|^-(1+b) on B_r0 scales to A t^b |x|^-(1+b) on B_(t r0)
    t, A, r0, x = sympy.symbols("t A r0 x", positive=True)
    b, qq, N = sympy.Rational(-3, 4), 7, 3
    norm = lambda amp, rad: sympy.integrate((amp * x ** (-(1 + b))) ** qq * x ** (N - 1),
                                            (x, 0, rad))
    symbolic_ok = sympy.simplify(norm(A * t**b, r0 * t) / norm(A, r0) - t ** (N - qq)) == 0
    ok = worst <= SCALING_TOL and analytic.analytic_norm_defect < 1e-12 and symbolic_ok
    report(4, ok, f"max rel defect {worst:.2e} over t in (0.5, 2) (tol {SCALING_TOL:g}); "
                  f"power family analytic defect {analytic.analytic_norm_defect:.1e}; "
                  f"symbolic t^(N-q) {symbolic_ok}")
    assert ok


def test_criterion_05_mean_value_certification(report):
    design, q = verify.calibration_suite(design="grid")
    cal = verify.calibrate_constant(design, q=q, safety=0.1)
    held_out, _ = verify.calibration_suite(n_pairs=20, seed=0)
    margins = np.array([verify.evaluate_estimate(p, r, x, R, C=cal.C, q=q).margin
                        for p, r, x, R in held_out])
    zero = radial.solve_radial(charge.ZeroDensity(3))
    triv = verify.evaluate_estimate(zero, 0.0, np.zeros(3), 1.0, C=cal.C, q=q)
    expected = unit_ball_volume(3) * (1 - np.exp(-triv.gamma / 4))
    triv_err = abs(triv.margin - expected)
    ok = len(margins) == 60 and margins.min() >= 0 and triv_err <= TRIVIAL_MARGIN_TOL
    report(5, ok, f"C = {cal.C:.3f} (gamma {cal.gamma:.4f}, {cal.samples} design pairs); "
                  f"min margin over {len(margins)} held-out pairs {margins.min():.3e} (>= 0); "
                  f"trivial margin err {triv_err:.1e} (tol {TRIVIAL_MARGIN_TOL:g})")
    assert ok


def test_criterion_06_small_data(report):
    g = fields.BoxGrid(3, 1.0, 17)
    shape = charge.mollify(charge.point_charge(1.0, g), 2, g)
    nq, nm = shape.norm(21), shape.norm(1.2)
    start = time.perf_counter()
    zero = verify.small_data_report(3, 1.2, 21, 0.0, 0.0)
    zero_err = abs(zero.delta - np.exp(-0.25))
    vals = np.array([verify.small_data_report(3, 1.2, 21, a, 0.01).v_gamma_bound
                     for a in np.linspace(0, 0.1, 21)])
    vals_m = np.array([verify.small_data_report(3, 1.2, 21, 0.01, b).v_gamma_bound
                       for b in np.linspace(0, 0.1, 21)])
    decreasing = bool(np.all(np.diff(vals) < 0) and np.all(np.diff(vals_m) < 0))
    t, c3 = verify.small_data_threshold(3, 1.2, 21, nq, nm)
    elapsed = time.perf_counter() - start
    ok = zero_err <= SMALL_DATA_TOL and decreasing and t > 0 and elapsed < SMALL_DATA_RUNTIME_S
    report(6, ok, f"zero-data delta err {zero_err:.1e} (tol {SMALL_DATA_TOL:g}); strictly "
                  f"decreasing {decreasing}; threshold multiplier {t:.4e} (c3 {c3:.4e}) > 0; "
                  f"{elapsed:.3f}s (< {SMALL_DATA_RUNTIME_S}s)")
    assert ok


def test_criterion_07_regularized_operator(report):
    details, ok = [], True
    rng = np.random.default_rng(7)
    for eps in (0.05, 0.1, 0.3):
        op = verify.make_regularized_operator(eps)
        rep = verify.check_structure_conditions(op, 10_000, seed=int(eps * 100))
        d = rng.standard_normal((2000, 3))
        z = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0, 1 - eps, (2000, 1))
        raw = z / np.sqrt(1 - np.sum(z * z, axis=1, keepdims=True))
        raw_err = float(np.max(np.abs(verify.a_eps(op, z) - raw) / np.abs(raw).max()))
        good = (rep.min_ellipticity_ratio >= 1 - ELLIPTICITY_TOL
                and rep.max_fd_error <= FD_JACOBIAN_TOL
                and raw_err <= 4 * np.finfo(float).eps
                and np.isfinite(rep.analytic_L) and rep.analytic_L >= rep.plateau_bound)
        ok &= good
        details.append(f"eps {eps}: min ratio {rep.min_ellipticity_ratio:.6f}, fd err "
                       f"{rep.max_fd_error:.1e}, raw err {raw_err:.1e}, L {rep.analytic_L:.3f} "
                       f">= {rep.plateau_bound:.3f}")
    report(7, ok, "; ".join(details) + f" (tols {ELLIPTICITY_TOL:g}, {FD_JACOBIAN_TOL:g})")
    assert ok


def test_criterion_08_gronwall_suite(report):
    start = time.perf_counter()
    spot = gronwall.power_case_bound(1.0, 1.0, 0.5, 0.5, 1.0)
    collapse = gronwall.gronwall_bound(gronwall.power_problem(1.7, 0.0, 0.5, 0.5, 1.0), 1.0)
    rng = np.random.default_rng(8)
    passed = 0
    for _ in range(100):
        C0, C1 = rng.uniform(0.1, 5), rng.uniform(0, 5)
        beta, gamma, T = rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.1, 2)
        prob = gronwall.power_problem(C0, C1, beta, gamma, T)
        run = gronwall.fixed_point_iterates(prob)
        passed += gronwall.certify_bound(prob, run.mesh, run.U, tolerance=GRONWALL_TOL).passed
    symbolic = gronwall.monotonicity_form_check(q=8, dim=3)
    elapsed = time.perf_counter() - start
    ok = (abs(spot - 4.0) < 1e-14 and collapse == 1.7 and passed == 100 and symbolic
          and elapsed < GRONWALL_RUNTIME_S)
    report(8, ok, f"spot value {spot!r} (== 4); C1=0 bound {collapse!r} (== C0); "
                  f"{passed}/100 certified (tol {GRONWALL_TOL:g}); symbolic check {symbolic}; "
                  f"{elapsed:.1f}s (< {GRONWALL_RUNTIME_S:.0f}s)")
    assert ok


def test_criterion_09_series(report):
    c = plap.series_coefficients(16)
    exact_ok = c.exact[:3] == (Fraction(1, 2), Fraction(1, 8), Fraction(1, 16))
    # remainder after k terms is c_(k+1) s^(k+1) to leading order
    s = 1e-3
    rems = []
    for k in (1, 2, 3):
        rem = (1 - np.sqrt(1 - s)) - float(plap.series_coefficients(k).partial_sum(s))
        rems.append(rem / (c.coefficients[k] * s ** (k + 1)))
    taylor_ok = all(abs(r - 1) < 5e-3 for r in rems)
    g = fields.BoxGrid(3, 1.0, 17)
    rho = plap.standard_test_datum(g)
    k1 = plap.minimize_truncated(rho, g, 1)
    rhs = minimizer.trapezoid_weights(g) * rho.values / g.cell_volume
    poisson_err = float(np.max(np.abs(k1.field.values - plap.sparse_poisson_solve(rhs, g))))
    ref = minimizer.minimize(rho, g)
    dists = [float(np.max(np.abs(plap.minimize_truncated(rho, g, k).field.values
                                 - ref.field.values))) for k in (1, 2, 4, 8, 16)]
    mono = bool(np.all(np.diff(dists) <= 0))
    ok = exact_ok and taylor_ok and poisson_err <= POISSON_MATCH_TOL and mono
    report(9, ok, f"c1..c3 = {', '.join(str(x) for x in c.exact[:3])}; remainder ratios "
                  f"{', '.join(f'{r:.4f}' for r in rems)}; k=1 vs Poisson {poisson_err:.1e} "
                  f"(tol {POISSON_MATCH_TOL:g}); distances "
                  f"{', '.join(f'{d:.1e}' for d in dists)} nonincreasing {mono}")
    assert ok


def test_criterion_10_determinism(report, tmp_path):
    runs = {
        "solve-radial": (["--beta", "0.5"], ["radial.csv", "classification.json"]),
        "solve-grid": (["--grid", "17"], ["field.bin", "diagnostics.json", "axis_profile.csv"]),
        "series-sweep": (["--grid", "17", "--orders", "1,2"], ["sweep.csv", "sweep.json"]),
        "verify-estimate": (["--pairs", "3", "--calib-d", "2", "--calib-r", "3"],
                            ["estimate.json"]),
        "small-data": (["--q", "21", "--norm-q", "0.1", "--threshold"], ["small_data.json"]),
        "gronwall": (["--mesh", "257"], ["bound.csv", "gronwall.json"]),
        "scaling-check": (["--grid", "17"], ["scaling.json"]),
    }
    same = {}
    for cmd, (flags, names) in runs.items():
        dirs = [tmp_path / f"{cmd}-{i}" for i in range(2)]
        for d in dirs:
            assert cli.run([cmd, *flags, "--seed", "5", "--out", str(d)]) == 0
        same[cmd] = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
    ok = all(same.values())
    report(10, ok, "byte-identical artifacts: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
