import numpy as np
import pytest
from numpy.polynomial import chebyshev as C
from scipy.integrate import quad

from builders import manufactured_1d, problem_1d
from fsm.expr import Sampler
from fsm.linsolve import SingularSystemError
from fsm.problem import Domain, Operator1D
from fsm.series1d import (FourierSeries1D, ResonanceError, baseline_poly_approx, build_boundary_basis_1d,
                          error_curve, eval_1d, particular_coeffs_1d, solve_1d)
from fsm.series2d import flavor_functionals


def eq1(alpha, a=1.0):
    """sinh(alpha (a - x)) / sinh(alpha a) and its derivatives."""
    def fn(x, k=0):
        x = np.asarray(x, float)
        body = np.sinh(alpha * (a - x)) if k % 2 == 0 else np.cosh(alpha * (a - x))
        return (-alpha) ** k * body / np.sinh(alpha * a)
    return fn


def chebyshev_oracle(coeffs, lo, hi, bcs, f, n=48):
    """Independent spectral collocation solve of sum c_k u^(k) = f with end conditions."""
    order = len(coeffs) - 1
    m = n + 1 - order
    t = np.cos((2 * np.arange(m) + 1) * np.pi / (2 * m))
    x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
    s = 2.0 / (hi - lo)

    def row(xx, k):
        tt = (np.atleast_1d(xx) - 0.5 * (lo + hi)) * s
        return np.array([C.chebval(tt, C.chebder(np.eye(n + 1)[j], k)) * s ** k for j in range(n + 1)]).T

    A = sum(c * row(x, k) for k, c in enumerate(coeffs) if c)
    b = f(x)
    rows, rhs = [A], [b]
    for side, lst in bcs.items():
        xe = hi if side == "x1+" else lo
        for k, g in lst:
            rows.append(row(xe, k))
            rhs.append([g])
    cf = np.linalg.solve(np.vstack(rows), np.concatenate(rhs))
    return lambda xx, k=0: row(xx, k) @ cf


# --------------------------------------------------------------------------- internal function


def test_particular_single_mode():
    a = 2.0
    s = particular_coeffs_1d(Operator1D((1.0, 0.0, -1.0)), lambda x: np.sin(np.pi * x / a), 5, "half_sine", (0.0, a))
    expect = np.zeros(5)
    expect[0] = 1 / ((np.pi / a) ** 2 + 1)
    assert np.allclose(s.coeffs, expect, atol=1e-13)


def test_particular_zero_forcing():
    s = particular_coeffs_1d(Operator1D((1.0, 0.0, -1.0)), None, 6, "half_cosine", (0.0, 1.0))
    assert not np.any(s.coeffs)
    s = particular_coeffs_1d(Operator1D((1.0, 0.0, -1.0)), lambda x: 0 * x, 6, "half_sine", (0.0, 1.0))
    assert not np.any(s.coeffs)


def test_particular_boundary_layer_forcing_against_quadrature():
    a, M = 1.0, 12
    f = eq1(10.0, a)
    s = particular_coeffs_1d(Operator1D((1.0, 0.0, -1.0)), f, M, "half_sine", (0.0, a))
    for m in range(1, M + 1):
        al = m * np.pi / a
        inner = 2 / a * quad(lambda x: f(x) * np.sin(al * x), 0, a, limit=400, epsabs=1e-14, epsrel=1e-13)[0]
        assert s.coeffs[m - 1] == pytest.approx(inner / (al ** 2 + 1), abs=1e-10)


def test_particular_full_range_convection_coupling():
    # u'' + u' - 3u = f with f = cos(pi x): exact particular solution by real 2x2 solve
    a = 1.0
    op = Operator1D((-3.0, 1.0, 1.0))
    s = particular_coeffs_1d(op, lambda x: np.cos(np.pi * x), 3, "full", (-a, a))
    w = np.pi
    A = np.array([[-w ** 2 - 3, w], [-w, -w ** 2 - 3]])  # acting on (cos, sin) amplitudes
    c, d = np.linalg.solve(A, [1.0, 0.0])
    x = np.linspace(-1, 1, 9)
    assert np.allclose(s.eval(x).real, c * np.cos(w * x) + d * np.sin(w * x), atol=1e-13)
    assert s.cos_coeffs[1] == pytest.approx(c) and s.sin_coeffs[0] == pytest.approx(d)


def test_particular_resonance_names_mode():
    a = 1.0
    op = Operator1D(((2 * np.pi / a) ** 2, 0.0, 1.0))  # u'' + (2 pi)^2 u vanishes on mode 2
    with pytest.raises(ResonanceError) as err:
        particular_coeffs_1d(op, lambda x: np.sin(x), 4, "half_sine", (0.0, a))
    assert err.value.mode == 2


@pytest.mark.parametrize("flavor,lo", [("full", -1.5), ("half_cosine", 0.0), ("half_sine", 0.0)])
@pytest.mark.parametrize("r", [1, 2])
def test_internal_modes_have_zero_jumps(flavor, lo, r, rng):
    hi = 1.5
    M = 7
    n = {"full": 2 * M + 1, "half_cosine": M + 1, "half_sine": M}[flavor]
    coef = rng.standard_normal(n) + (1j * rng.standard_normal(n) if flavor == "full" else 0)
    s = FourierSeries1D(flavor, (lo, hi), coef)
    for k, pts in flavor_functionals(flavor, lo, hi, r):
        val = sum(sg * s.eval([x], k)[0] for x, sg in pts)
        scale = np.abs(coef).sum() * (M * np.pi / (hi - lo)) ** k
        assert abs(val) <= 1e-12 * scale


# --------------------------------------------------------------------------- boundary function


def test_boundary_basis_half_sine_layer():
    alpha, a = 10.0, 1.0
    t = build_boundary_basis_1d(Operator1D((-alpha ** 2, 0, 1)), Domain("interval", a), "half_sine")
    assert np.allclose(t.eval([a])[0], [1, 0], atol=1e-15)
    assert np.allclose(t.eval([0.0])[0], [0, 1], atol=1e-15)
    mid = t.eval([a / 2])[0].real
    exact = np.sinh(alpha * a / 2) / np.sinh(alpha * a)
    assert np.allclose(mid, [exact, exact], rtol=1e-12)
    assert mid[0] == pytest.approx(np.exp(-5), rel=2 * np.exp(-10))


def test_boundary_basis_full_rejects_constant_null_space():
    with pytest.raises(SingularSystemError):
        build_boundary_basis_1d(Operator1D((0.0, 0.0, 1.0)), Domain("interval_symmetric", 1.0), "full")


@pytest.mark.parametrize("coeffs,flavor,kind", [
    ((-4.0, 0.0, 1.0), "half_sine", "interval"),
    ((-4.0, 0.0, 1.0), "half_cosine", "interval"),
    ((-4.0, 0.7, 1.0), "full", "interval_symmetric"),
    ((3.0, 0.2, -1.0, 0.1, 1.0), "full", "interval_symmetric"),
    ((1.0, 0.0, -3.0, 0.0, 1.0), "half_sine", "interval"),
    ((1.0, 0.0, 3.0, 0.0, 1.0), "half_cosine", "interval"),
])
def test_boundary_basis_normalization_identity(coeffs, flavor, kind):
    op = Operator1D(coeffs)
    t = build_boundary_basis_1d(op, Domain(kind, 1.2), flavor)
    F = np.array([sum(s * t.eval([x], k)[0] for x, s in pts) for k, pts in t.functionals()])
    assert np.abs(F - np.eye(2 * op.r)).max() <= 1e-10
    # homogeneity
    x = np.linspace(*t.basis.interval, 25)
    Lphi = sum(c * t.eval(x, k) for k, c in enumerate(coeffs))
    assert np.abs(Lphi).max() <= 1e-8 * max(1.0, np.abs(t.eval(x)).max())


# --------------------------------------------------------------------------- solve / eval


@pytest.mark.parametrize("alpha", [0.01, 1.0, 10.0, 100.0])
def test_solve_boundary_layer_exact(alpha):
    p = problem_1d([-alpha ** 2, 0, 1], "half_sine", 1.0, {"x1+": [(0, 0.0)], "x1-": [(0, 1.0)]}, M=3)
    sol = solve_1d(p)
    x = np.linspace(0, 1, 1001)
    assert np.abs(eval_1d(sol, x) - eq1(alpha)(x)).max() <= 1e-12


def test_solve_midpoint_values():
    p = problem_1d([-100.0, 0, 1], "half_sine", 1.0, {"x1+": [(0, 0.0)], "x1-": [(0, 1.0)]}, M=4)
    sol = solve_1d(p)
    assert eval_1d(sol, [0.5])[0] == pytest.approx(np.sinh(5) / np.sinh(10), rel=1e-12)
    assert eval_1d(sol, [0.0])[0] == pytest.approx(1.0, abs=1e-9)
    assert eval_1d(sol, [0.5], 2)[0] == pytest.approx(100 * np.sinh(5) / np.sinh(10), rel=1e-10)


def test_solve_zero_problem():
    p = problem_1d([-1.0, 0, 1], "half_cosine", 1.0, {"x1+": [(1, 0.0)], "x1-": [(1, 0.0)]}, M=4)
    sol = solve_1d(p)
    for k in range(3):
        assert not np.any(eval_1d(sol, np.linspace(0, 1, 7), k))


def test_solve_finite_mode_exact():
    p, u = manufactured_1d([-1.0, 0, 1], "half_sine", 1.0, "sin(2*pi*x1) + 0.5*sin(3*pi*x1)", [0], M=3)
    sol = solve_1d(p)
    x = np.linspace(0, 1, 201)
    assert np.abs(eval_1d(sol, x) - u(x)).max() <= 1e-10


def test_eval_order_limit():
    p = problem_1d([-1.0, 0, 1], "half_sine", 1.0, {"x1+": [(0, 0.0)], "x1-": [(0, 1.0)]}, M=2)
    with pytest.raises(ValueError):
        eval_1d(solve_1d(p), [0.5], 3)


def test_solve_with_supplementary_polynomial():
    # u'' - u = x with the whole forcing carried by the polynomial -x
    p = problem_1d([-1.0, 0, 1], "half_sine", 1.0, {"x1+": [(0, 2.0)], "x1-": [(0, 0.5)]}, f="x1", M=4,
                   fs=[0.0, 1.0])
    sol = solve_1d(p)
    assert np.allclose(sol.phis.coeffs, [0.0, -1.0])
    x = np.linspace(0, 1, 51)
    A = np.array([[np.exp(1), np.exp(-1)], [1, 1]])
    c1, c2 = np.linalg.solve(A, [2.0 + 1.0, 0.5])
    assert np.allclose(eval_1d(sol, x), c1 * np.exp(x) + c2 * np.exp(-x) - x, atol=1e-12)


CASES = [
    ((-2.0, 0.0, 1.0), "full", {"x1+": [(0, 0.3)], "x1-": [(1, -0.2)]}, "exp(sin(pi*x1/1.2))"),
    ((-2.0, 0.6, 1.0), "full", {"x1+": [(0, 0.3)], "x1-": [(0, 1.0)]}, "exp(cos(pi*x1/1.2))"),
    ((-2.0, 0.0, 1.0), "half_cosine", {"x1+": [(1, 0.4)], "x1-": [(1, -1.0)]}, "exp(cos(pi*x1/1.2))"),
    ((-2.0, 0.0, 1.0), "half_sine", {"x1+": [(0, 0.4)], "x1-": [(0, -1.0)]}, "sin(pi*x1/1.2)*exp(cos(pi*x1/1.2))"),
    ((1.0, 0.3, -1.0, 0.0, 1.0), "full", {"x1+": [(0, 0.5), (1, 0.0)], "x1-": [(0, 1.0), (2, 0.2)]},
     "exp(sin(pi*x1/1.2))"),
]


@pytest.mark.parametrize("coeffs,flavor,bcs,f", CASES)
def test_solve_matches_chebyshev_oracle(coeffs, flavor, bcs, f):
    p = problem_1d(coeffs, flavor, 1.2, bcs, f=f, M=48)
    sol = solve_1d(p)
    lo, hi = p.domain.x1_range
    oracle = chebyshev_oracle(coeffs, lo, hi, bcs, Sampler.parse(f))
    x = np.linspace(lo, hi, 101)
    assert np.abs(eval_1d(sol, x) - oracle(x)).max() <= 1e-7
    # BC residual by direct differentiation
    for side, lst in bcs.items():
        xe = hi if side == "x1+" else lo
        for k, g in lst:
            assert abs(eval_1d(sol, [xe], k)[0] - g) <= 1e-8 * (1 + abs(g))


def test_pde_residual_decreases_with_M():
    res = []
    for M in (8, 16, 32, 64):
        p = problem_1d([-1.0, 0, 1], "half_sine", 1.0, {"x1+": [(0, 0.0)], "x1-": [(0, 0.0)]}, f="1 + x1", M=M)
        sol = solve_1d(p)
        x = np.linspace(0, 1, 103)[1:-1]
        res.append(np.abs(eval_1d(sol, x, 2) - eval_1d(sol, x) - (1 + x)).max())
    assert all(b < a for a, b in zip(res, res[1:]))


# --------------------------------------------------------------------------- baseline


def test_baseline_reproduces_polynomial():
    u = lambda x, k=0: (1 + 2 * np.asarray(x)) if k == 0 else (2 + 0 * np.asarray(x) if k == 1 else 0 * np.asarray(x))
    ap = baseline_poly_approx(u, 1, 16, "half_sine", (0.0, 1.0))
    assert np.abs(ap.series.coeffs).max() <= 1e-12
    assert np.allclose(ap.poly, [1, 2])


def test_baseline_sine_has_zero_polynomial():
    a = 2.0
    u = lambda x, k=0: (np.pi / a) ** k * np.sin(np.pi * np.asarray(x) / a + k * np.pi / 2)
    ap = baseline_poly_approx(u, 1, 1, "half_sine", (0.0, a))
    assert np.abs(ap.poly).max() <= 1e-15
    x = np.linspace(0, a, 33)
    assert np.abs(ap.eval(x) - u(x)).max() <= 1e-12


@pytest.mark.parametrize("flavor,lo,r", [("full", -1.0, 1), ("full", -1.0, 2), ("half_cosine", 0.0, 2),
                                         ("half_sine", 0.0, 3)])
def test_baseline_polynomial_matches_functionals(flavor, lo, r):
    u = eq1(2.0, 1.0)
    ap = baseline_poly_approx(u, r, 8, flavor, (lo, 1.0))
    from numpy.polynomial import polynomial as P
    for k, pts in flavor_functionals(flavor, lo, 1.0, r):
        got = sum(s * P.polyval(x, P.polyder(ap.poly, k)) for x, s in pts)
        want = sum(s * u(x, k) for x, s in pts)
        assert got == pytest.approx(want, abs=1e-10)


def test_baseline_multiscale_gap():
    x = np.linspace(0, 1, 1001)
    e = {}
    for al in (0.01, 100.0):
        u = eq1(al)
        e[al] = np.abs(baseline_poly_approx(u, 1, 32, "half_sine", (0.0, 1.0)).eval(x) - u(x)).max()
    assert e[100.0] / e[0.01] >= 1e4


def test_error_curve_zero_when_exact():
    u = eq1(1.0)

    class Same:
        def eval(self, x, k=0):
            return u(x, k)

    c = error_curve(u, lambda M: Same(), 1, [2, 4], (0.0, 1.0))
    assert c.error == (0.0, 0.0)


def test_error_curve_baseline_decreases():
    u = eq1(1.0)
    c = error_curve(u, lambda M: baseline_poly_approx(u, 1, M, "half_sine", (0.0, 1.0)), 0, [8, 16, 32, 64],
                    (0.0, 1.0))
    assert c.strictly_decreasing


def test_error_curve_multiscale_exact():
    u = eq1(1.0)
    fac = lambda M: solve_1d(problem_1d([-1.0, 0, 1], "half_sine", 1.0, {"x1+": [(0, 0.0)], "x1-": [(0, 1.0)]}, M=M))
    c = error_curve(u, fac, 0, [1, 2, 8], (0.0, 1.0))
    assert max(c.error) <= 1e-9


def test_error_curve_requires_increasing_M():
    with pytest.raises(ValueError):
        error_curve(eq1(1.0), lambda M: None, 0, [4, 4], (0.0, 1.0))
