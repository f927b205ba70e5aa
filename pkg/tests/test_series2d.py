import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly
from scipy.special import roots_legendre

from builders import DIRICHLET_2D, laplace_plus, manufactured_2d
from fsm.discretize import solve_2d
from fsm.linsolve import SingularSystemError
from fsm.problem import Domain, Operator1D, Operator2D
from fsm.series2d import (HomogeneousHarmonic, ResonanceError, apply_operator_poly, boundary_function_phi1,
                          boundary_function_phi2, corner_conditions, corner_function, corner_items, eval_2d,
                          fourier_block, normalization_check, particular_2d, supplementary_solution)

RECT = Domain("rect", 1.3, 0.8)
SYM = Domain("rect_symmetric", 1.1, 0.9)


def op2(terms):
    order = max(k1 + k2 for k1, k2 in terms)
    return Operator2D(order, dict(terms))


# --------------------------------------------------------------------------- corner function


def test_corner_zero_data_gives_zero_polynomial():
    assert not np.any(corner_function({}, 2, "sine_sine", RECT).coeffs)
    assert not np.any(corner_function({}, 1, "full_2d", SYM).coeffs)


def test_corner_bilinear():
    a, b = RECT.a, RECT.b
    phi = corner_function({("+", "+", 0, 0): 1.0}, 1, "sine_sine", RECT)
    x1, x2 = np.meshgrid(np.linspace(0, a, 5), np.linspace(0, b, 4))
    assert np.allclose(phi.eval(x1, x2), x1 * x2 / (a * b), atol=1e-15)


@pytest.mark.parametrize("flavor,dom", [("sine_sine", RECT), ("full_2d", SYM)])
@pytest.mark.parametrize("r", [1, 2])
def test_corner_reproduces_random_data(flavor, dom, r, rng):
    items = corner_items(flavor, r)
    if flavor == "sine_sine":
        assert len(items) == 4 * r * (r + 1) // 2
    data = rng.standard_normal(len(items))
    phi = corner_function(list(data), r, flavor, dom)
    got = corner_conditions(flavor, dom, r, lambda x1, x2, k1, k2: phi.eval(x1, x2, k1, k2))
    assert np.abs(got - data).max() <= 1e-10


def test_corner_r2_sine_all_sixteen_conditions(rng):
    # every u^(2k1, 2k2) with k1, k2 <= 1 at every corner; the data only fixes k1 + k2 <= 1,
    # so the (2, 2) derivative of the tensor interpolant must vanish
    r = 2
    items = corner_items("sine_sine", r)
    data = dict(zip(items, rng.standard_normal(len(items))))
    phi = corner_function(data, r, "sine_sine", RECT)
    for e1, x1 in (("+", RECT.a), ("-", 0.0)):
        for e2, x2 in (("+", RECT.b), ("-", 0.0)):
            for k1 in range(2):
                for k2 in range(2):
                    want = data.get((e1, e2, k1, k2), 0.0)
                    assert phi.eval(x1, x2, 2 * k1, 2 * k2) == pytest.approx(want, abs=1e-10)


# --------------------------------------------------------------------------- internal function


def test_particular_single_mode():
    a, b = RECT.a, RECT.b
    rhs = lambda x1, x2: np.sin(np.pi * x1 / a) * np.sin(np.pi * x2 / b)
    c = particular_2d(op2(laplace_plus(0.0)), rhs, 4, 3, "sine_sine", RECT)
    want = np.zeros((4, 3))
    want[0, 0] = 1 / ((np.pi / a) ** 2 + (np.pi / b) ** 2)
    assert np.allclose(c, want, atol=1e-13)


def test_particular_zero_rhs():
    c = particular_2d(op2(laplace_plus(1.0)), lambda x1, x2: 0 * x1 * x2, 3, 3, "full_2d", SYM)
    assert c.shape == (7, 7) and not np.any(c)


def test_particular_against_gauss_legendre_oracle():
    a, b, cc, M, N = RECT.a, RECT.b, 2.0, 6, 5
    rhs = lambda x1, x2: np.exp(0.7 * x1 - 0.4 * x2) * (1 + x1 * x2)
    got = particular_2d(op2(laplace_plus(cc)), rhs, M, N, "sine_sine", RECT)
    t, w = roots_legendre(80)
    x, wx = 0.5 * a * (t + 1), 0.5 * a * w
    y, wy = 0.5 * b * (t + 1), 0.5 * b * w
    F = rhs(x[:, None], y[None, :])
    for m in range(1, M + 1):
        for n in range(1, N + 1):
            al, be = m * np.pi / a, n * np.pi / b
            coef = 4 / (a * b) * (wx * np.sin(al * x)) @ F @ (wy * np.sin(be * y))
            assert got[m - 1, n - 1] == pytest.approx(coef / (al ** 2 + be ** 2 + cc), abs=1e-9)


def test_particular_full_range_inverts_operator_on_trig_polynomial():
    a, b = SYM.a, SYM.b
    terms = {(2, 0): -1.0, (0, 2): -1.0, (1, 1): 0.3, (1, 0): 0.5, (0, 0): 2.0}
    op = op2(terms)
    rhs = lambda x1, x2: np.cos(np.pi * x1 / a) * np.sin(2 * np.pi * x2 / b) + 0.5 + np.sin(np.pi * x1 / a)
    c = particular_2d(op, rhs, 3, 3, "full_2d", SYM)
    blk = fourier_block(c, "full_2d", SYM)
    x1, x2 = [g.ravel() for g in np.meshgrid(np.linspace(-a, a, 7), np.linspace(-b, b, 6))]
    Lu = blk.apply(terms, x1, x2)[:, 0]
    assert np.abs(Lu - rhs(x1, x2)).max() <= 1e-12
    assert np.abs(blk.eval(x1, x2)[:, 0].imag).max() <= 1e-14


def test_particular_resonance_reports_mode():
    op = op2(laplace_plus(-2 * np.pi ** 2))
    with pytest.raises(ResonanceError) as err:
        particular_2d(op, lambda x1, x2: x1 * x2, 3, 3, "sine_sine", Domain("rect", 1.0, 1.0))
    assert err.value.mode == (1, 1)


# --------------------------------------------------------------------------- boundary functions

OPERATORS = [
    ("sine_sine", RECT, laplace_plus(1.5)),
    ("sine_sine", RECT, {(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0, (0, 0): 3.0}),
    ("full_2d", SYM, laplace_plus(1.0)),
    ("full_2d", SYM, {(2, 0): -1.0, (0, 2): -1.0, (1, 0): 2.0, (0, 1): 0.5, (0, 0): 1.0}),
    ("full_2d", SYM, {(2, 0): -1.0, (0, 2): -1.0, (1, 1): 0.4, (1, 0): 0.3, (0, 0): 2.0}),
    ("full_2d", SYM, {(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0, (0, 0): 1.0}),
]


@pytest.mark.parametrize("flavor,dom,terms", OPERATORS)
def test_boundary_function_normalization_and_homogeneity(flavor, dom, terms):
    op = op2(terms)
    for bf in (boundary_function_phi1(op, dom, flavor, 3), boundary_function_phi2(op, dom, flavor, 3)):
        for F in normalization_check(bf, dom, op.r):
            assert np.abs(F - np.eye(len(F))).max() <= 1e-10
        g1 = np.linspace(*dom.x1_range, 7)[1:-1]
        g2 = np.linspace(*dom.x2_range, 7)[1:-1]
        x1, x2 = [g.ravel() for g in np.meshgrid(g1, g2)]
        for blk in bf.blocks:
            scale = max(1.0, np.abs(blk.eval(x1, x2)).max())
            assert np.abs(blk.apply(terms, x1, x2)).max() <= 1e-8 * scale


def test_levy_harmonic_sine_sine():
    a, b, c = RECT.a, RECT.b, 1.5
    bf = boundary_function_phi1(op2(laplace_plus(c)), RECT, "sine_sine", 2)
    for h in bf.harmonics:
        beta = h.n * np.pi / b
        k = np.sqrt(beta ** 2 + c)
        x1 = np.linspace(0, a, 9)
        x2 = np.full_like(x1, 0.37 * b)
        got = h.block.eval(x1, x2).real
        s = np.sin(beta * x2)
        assert np.allclose(got[:, 0], np.sinh(k * x1) / np.sinh(k * a) * s, atol=1e-13)
        assert np.allclose(got[:, 1], np.sinh(k * (a - x1)) / np.sinh(k * a) * s, atol=1e-13)
        assert not np.any(h.basis.power)


def test_zero_constants_give_zero_boundary_function():
    op = op2(laplace_plus(1.0))
    bf = boundary_function_phi1(op, SYM, "full_2d", 2)
    assert not np.any(bf.value(np.zeros(bf.ncols), [0.1, 0.5], [0.2, -0.3]))
    bf2 = boundary_function_phi2(op, RECT, "sine_sine", 2)
    assert not np.any(bf2.value(np.zeros(bf2.ncols), [0.1, 0.5], [0.2, 0.3]))


@pytest.mark.parametrize("flavor", ["sine_sine", "full_2d"])
def test_phi2_is_phi1_under_axis_swap(flavor):
    dom = Domain("rect_symmetric" if flavor == "full_2d" else "rect", 1.0, 1.0)
    op = op2(laplace_plus(2.0) if flavor == "sine_sine" else {(2, 0): -1.0, (0, 2): -1.0, (1, 1): 0.3, (0, 0): 1.0})
    p1 = boundary_function_phi1(op, dom, flavor, 3)
    p2 = boundary_function_phi2(op, dom, flavor, 3)
    s = np.linspace(*dom.x1_range, 6)
    t = np.linspace(*dom.x2_range, 5)
    x1, x2 = [g.ravel() for g in np.meshgrid(s, t)]
    assert np.abs(p2.eval(x1, x2) - p1.eval(x2, x1)).max() <= 1e-10
    assert np.abs(p2.eval(x1, x2, 1, 0) - p1.eval(x2, x1, 0, 1)).max() <= 1e-10


def test_phi2_laplacian_roots_use_alpha():
    a, b, c = RECT.a, RECT.b, 1.5
    p2 = boundary_function_phi2(op2(laplace_plus(c)), RECT, "sine_sine", 3)
    for h in p2.harmonics:
        k = np.sqrt((h.n * np.pi / a) ** 2 + c)
        assert np.allclose(sorted(h.basis.eta.real), [-k, k])


def test_boundary_function_rejects_singular_harmonic():
    # -u_11 - u_22 - (pi/b)^2 u has harmonic n=1 with a double root at zero in x1 and a jump-only
    # normalization that cannot pin the constant
    op = op2(laplace_plus(-(np.pi / SYM.b) ** 2))
    with pytest.raises(SingularSystemError):
        boundary_function_phi1(op, SYM, "full_2d", 1)


def test_direct_homogeneous_harmonic_matches_default_path():
    c, n = 1.0, 2
    a, b = SYM.a, SYM.b
    beta = n * np.pi / b
    k = np.sqrt(beta ** 2 + c)

    def sol(sign, trig):
        def f(x1, x2, k1, k2):
            e = (sign * k) ** k1 * np.exp(sign * k * (np.asarray(x1) - sign * a))
            ang = beta * np.asarray(x2) + (0 if trig == "cos" else -np.pi / 2) + k2 * np.pi / 2
            return e * beta ** k2 * np.cos(ang)
        return f

    funcs = [sol(s, t) for t in ("cos", "sin") for s in (1, -1)]
    hh = HomogeneousHarmonic(funcs, SYM, 1, n)
    bf = boundary_function_phi1(op2(laplace_plus(c)), SYM, "full_2d", n)
    blk = bf.harmonics[n].block
    x1, x2 = [g.ravel() for g in np.meshgrid(np.linspace(-a, a, 5), np.linspace(-b, b, 5))]
    for k1, k2 in ((0, 0), (1, 0), (0, 1), (1, 1)):
        assert np.abs(hh.eval(x1, x2, k1, k2) - blk.eval(x1, x2, k1, k2)).max() <= 1e-10


def test_direct_homogeneous_harmonic_needs_4r_functions():
    with pytest.raises(ValueError):
        HomogeneousHarmonic([lambda *a: 0.0] * 3, SYM, 1, 1)


# --------------------------------------------------------------------------- supplementary polynomial


def test_supplementary_constant():
    s = supplementary_solution(op2(laplace_plus(1.0)), np.array([[1.0]]))
    assert s.eval(0.3, 0.7) == pytest.approx(1.0)


def test_supplementary_laplacian_needs_higher_degree():
    op = op2(laplace_plus(0.0))
    s = supplementary_solution(op, np.array([[1.0]]))
    res = apply_operator_poly(op, s.coeffs)
    res[0, 0] -= 1.0
    assert np.abs(res).max() <= 1e-10
    assert s.coeffs.shape == (3, 3)


def test_supplementary_1d():
    s = supplementary_solution(Operator1D((-1.0, 0.0, 1.0)), np.array([0.0, 1.0]))
    assert np.allclose(s.coeffs, [0.0, -1.0])


def test_supplementary_residual_random(rng):
    op = op2({(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0, (1, 0): 0.5, (0, 0): 0.7})
    fs = np.triu(rng.standard_normal((3, 3)))[:, ::-1]  # total degree <= 2
    s = supplementary_solution(op, fs)
    res = apply_operator_poly(op, s.coeffs)
    pad = np.zeros_like(res)
    pad[:3, :3] = fs
    assert np.abs(res - pad).max() <= 1e-10 * np.abs(fs).max()


def test_supplementary_pure_derivative_operator():
    # no zeroth-order term: degree has to rise by the order of the lowest term
    s = supplementary_solution(Operator1D((0.0, 0.0, 1.0)), np.array([1.0]))
    assert np.allclose(npoly.polyder(s.coeffs, 2), [1.0])
    assert len(s.coeffs) == 3


# --------------------------------------------------------------------------- evaluation


@pytest.fixture(scope="module")
def sine_solution():
    p, u = manufactured_2d(laplace_plus(1.0), 2, "sine_sine", 1.0, 2.0, "sin(pi*x1)*sin(pi*x2/2)", DIRICHLET_2D,
                           M=3, N=3)
    return solve_2d(p), u


def test_eval_mixed_derivative_at_origin(sine_solution):
    sol, _ = sine_solution
    a, b = 1.0, 2.0
    assert eval_2d(sol, 0.0, 0.0, 1, 1)[()] == pytest.approx(np.pi ** 2 / (a * b), rel=1e-10)
    assert abs(eval_2d(sol, a / 2, b / 2, 1, 1)[()]) <= 1e-10


def test_eval_zero_problem():
    p, _ = manufactured_2d(laplace_plus(1.0), 2, "sine_sine", 1.0, 1.0, "0", DIRICHLET_2D, M=3, N=3)
    sol = solve_2d(p)
    x = np.linspace(0, 1, 5)
    for k1, k2 in ((0, 0), (2, 0), (1, 1)):
        assert not np.any(eval_2d(sol, x, x[::-1], k1, k2))


def test_eval_order_limit(sine_solution):
    with pytest.raises(ValueError):
        eval_2d(sine_solution[0], 0.5, 0.5, 2, 1)


def test_eval_matches_finite_differences():
    terms = {(2, 0): -1.0, (0, 2): -1.0, (1, 0): 0.5, (0, 0): 2.0}
    p, _ = manufactured_2d(terms, 2, "full_2d", 1.0, 1.0, "exp(0.3*x1)*cos(x2) + x1*x2^2", {
        "x1+": [(0, 0)], "x1-": [(0, 0)], "x2+": [(0, 0)], "x2-": [(0, 0)]}, M=6, N=6)
    sol = solve_2d(p)
    h = 1e-4
    for x1, x2 in ((0.2, -0.3), (-0.5, 0.6)):
        fd = (eval_2d(sol, x1 + h, x2 + h) - eval_2d(sol, x1 + h, x2 - h)
              - eval_2d(sol, x1 - h, x2 + h) + eval_2d(sol, x1 - h, x2 - h)) / (4 * h * h)
        ex = eval_2d(sol, x1, x2, 1, 1)
        assert fd == pytest.approx(ex, rel=1e-5, abs=1e-6)
        fd1 = (eval_2d(sol, x1 + h, x2) - eval_2d(sol, x1 - h, x2)) / (2 * h)
        assert fd1 == pytest.approx(eval_2d(sol, x1, x2, 1, 0), rel=1e-5, abs=1e-7)


def test_eval_real_for_real_data():
    terms = {(2, 0): -1.0, (0, 2): -1.0, (1, 1): 0.3, (0, 1): 0.7, (0, 0): 1.0}
    p, u = manufactured_2d(terms, 2, "full_2d", 1.0, 1.0, "exp(x1 - x2/2) + x1", {
        "x1+": [(0, 0)], "x1-": [(1, 0)], "x2+": [(0, 0)], "x2-": [(0, 0)]}, M=5, N=5)
    sol = solve_2d(p)
    x1, x2 = [g.ravel() for g in np.meshgrid(np.linspace(-1, 1, 9), np.linspace(-1, 1, 9))]
    v = eval_2d(sol, x1, x2)
    assert v.dtype == float and np.all(np.isfinite(v))
