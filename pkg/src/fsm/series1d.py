"""One-dimensional composite Fourier series solutions.

``u = phi0 + phi1 + phi_s``: ``phi0`` is a Fourier series obtained by dividing
the forcing coefficients by the operator symbol, ``phi1`` a combination of
homogeneous solutions parameterized directly by its boundary jump/end data,
and ``phi_s`` an optional polynomial for the coarse forcing part.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .charpoly import HomogeneousBasis1D, build_basis, build_characteristic_1d, find_roots
from .linsolve import SingularSystemError, cond_estimate, lu_solve
from .problem import Domain, Operator1D, ValidatedProblem, symbol_1d
from .quadrature import fourier_coefficients_1d, mode_frequency, mode_numbers
from .series2d import (COND_LIMIT, ResonanceError, SupplementaryPolynomial, _mode_basis,
                       apply_functionals, apply_operator_poly, end_interpolants, flavor_functionals,
                       supplementary_solution)

__all__ = [
    "FourierSeries1D", "BoundaryFunction1D", "CompositeSolution1D", "PolynomialApprox1D", "ErrorCurve",
    "ResonanceError", "particular_coeffs_1d", "build_boundary_basis_1d", "end_system", "solve_1d",
    "eval_1d", "baseline_poly_approx", "error_curve", "as_derivative_fn",
]


@dataclass(frozen=True, eq=False)
class FourierSeries1D:
    """Truncated Fourier series on ``interval``.

    ``coeffs`` holds, by flavor: full, complex ``c_m`` for m = -M..M;
    half_cosine, ``A_0..A_M`` of ``A_0/2 + sum A_m cos``; half_sine, ``B_1..B_M``.
    """

    flavor: str
    interval: tuple[float, float]
    coeffs: np.ndarray

    @property
    def M(self) -> int:
        n = len(self.coeffs)
        return (n - 1) // 2 if self.flavor == "full" else (n - 1 if self.flavor == "half_cosine" else n)

    def _synthesis(self):
        basis, S = _mode_basis(self.flavor, self.interval, self.M)
        return basis, self.coeffs @ S

    def eval(self, x, k: int = 0) -> np.ndarray:
        basis, w = self._synthesis()
        return basis.eval(x, k) @ w

    @property
    def cos_coeffs(self) -> np.ndarray:
        """Real cosine coefficients ``a_0..a_M`` (full: ``a_0`` carries weight 1/2)."""
        if self.flavor == "half_cosine":
            return self.coeffs.real
        if self.flavor == "half_sine":
            return np.zeros(self.M + 1)
        M, c = self.M, self.coeffs
        a = np.empty(M + 1)
        a[0] = 2 * c[M].real
        a[1:] = (c[M + 1:] + c[M - 1::-1]).real
        return a

    @property
    def sin_coeffs(self) -> np.ndarray:
        """Real sine coefficients ``b_1..b_M``."""
        if self.flavor == "half_sine":
            return self.coeffs.real
        if self.flavor == "half_cosine":
            return np.zeros(self.M)
        M, c = self.M, self.coeffs
        return (1j * (c[M + 1:] - c[M - 1::-1])).real


def particular_coeffs_1d(op: Operator1D, f: Callable | None, M: int, flavor: str,
                         interval: tuple[float, float]) -> FourierSeries1D:
    """Internal function with ``L phi0 = f`` mode by mode.

    Raises :class:`ResonanceError` if the symbol vanishes at a retained mode.
    """
    lo, hi = interval
    m = mode_numbers(flavor, M)
    alpha = mode_frequency(flavor, lo, hi) * m
    sym = symbol_1d(op, 1j * alpha)
    bad = np.abs(sym) < 1e-10 * (1 + np.abs(alpha)) ** op.order
    if f is None:
        coef = np.zeros(len(m), dtype=complex)
    else:
        coef = fourier_coefficients_1d(f, flavor, lo, hi, M)
    if bad.any():
        raise ResonanceError(int(m[np.argmax(bad)]))
    out = coef / sym
    if flavor != "full":
        out = out.real
    return FourierSeries1D(flavor, (float(lo), float(hi)), out)


@dataclass(frozen=True, eq=False)
class BoundaryFunction1D:
    """Homogeneous solutions normalized by the flavor's boundary functionals.

    ``eval`` returns the normalized basis ``p^T R^-1``: column i is the solution
    whose i-th functional is one and the others zero.
    """

    flavor: str
    basis: HomogeneousBasis1D
    R: np.ndarray
    R_inv: np.ndarray
    q: np.ndarray | None = None

    def eval(self, x, k: int = 0) -> np.ndarray:
        return self.basis.eval(x, k) @ self.R_inv

    def value(self, x, k: int = 0, q=None) -> np.ndarray:
        q = self.q if q is None else q
        return self.eval(x, k) @ q

    def with_constants(self, q) -> "BoundaryFunction1D":
        return BoundaryFunction1D(self.flavor, self.basis, self.R, self.R_inv, np.asarray(q))

    def functionals(self) -> list:
        lo, hi = self.basis.interval
        return flavor_functionals(self.flavor, lo, hi, self.R.shape[0] // 2)


def build_boundary_basis_1d(op: Operator1D, domain: Domain, flavor: str) -> BoundaryFunction1D:
    lo, hi = domain.x1_range
    basis = build_basis(find_roots(build_characteristic_1d(op)), (lo, hi))
    R = apply_functionals(flavor_functionals(flavor, lo, hi, op.r), basis)
    c = cond_estimate(R)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularSystemError(f"boundary functional matrix is singular (condition estimate {c:.3g})")
    return BoundaryFunction1D(flavor, basis, R, np.linalg.solve(R, np.eye(len(R))))


@dataclass(frozen=True, eq=False)
class CompositeSolution1D:
    flavor: str
    r: int
    domain: Domain
    phi0: FourierSeries1D
    phi1: BoundaryFunction1D
    phis: SupplementaryPolynomial | None = None
    info: dict = field(default_factory=dict)

    def eval(self, x, k: int = 0) -> np.ndarray:
        return eval_1d(self, x, k)


def end_system(problem: ValidatedProblem, phi0: FourierSeries1D, template: BoundaryFunction1D,
               phis: SupplementaryPolynomial | None):
    """The 2r x 2r system ``B_l(phi1) q = g - B_l(phi0 + phi_s)`` over both ends."""
    rows, rhs, labels = [], [], []
    for side in ("x1+", "x1-"):
        x = problem.domain.side_coordinate(side)
        for l, bc in enumerate(problem.bcs[side]):
            row = 0
            known = 0
            for (k,), b in bc.op.coeffs.items():
                if not b:
                    continue
                row = row + b * template.eval([x], k)[0]
                known = known + b * phi0.eval([x], k)[0]
                if phis is not None:
                    known = known + b * phis.eval(x, None, k)
            rows.append(row)
            rhs.append(float(bc.g(x)) - known)
            labels.append((side, l))
    return np.array(rows), np.array(rhs), labels


def solve_1d(problem: ValidatedProblem) -> CompositeSolution1D:
    op, dom = problem.operator, problem.domain
    lo, hi = dom.x1_range
    phis = supplementary_solution(op, problem.forcing.fs) if problem.forcing.fs is not None else None
    f = problem.forcing.f
    Lphis = apply_operator_poly(op, phis.coeffs) if phis is not None else None
    if f.is_zero and Lphis is None:
        rhs = None
    else:
        def rhs(x):
            v = f(x)
            if Lphis is not None:
                v = v - npoly.polyval(x, Lphis)
            return v
    phi0 = particular_coeffs_1d(op, rhs, problem.M, problem.flavor, (lo, hi))
    template = build_boundary_basis_1d(op, dom, problem.flavor)
    A, b, _ = end_system(problem, phi0, template, phis)
    c = cond_estimate(A)
    if not np.isfinite(c) or c > 1e14:
        raise SingularSystemError(f"boundary condition system is singular (condition estimate {c:.3g})")
    q = lu_solve(A, b)
    res = np.abs(A @ q - b).max()
    if res > 1e-9 * max(1.0, np.abs(b).max()):
        raise SingularSystemError(f"boundary condition residual {res:.3g} too large")
    return CompositeSolution1D(problem.flavor, problem.r, dom, phi0, template.with_constants(q), phis,
                               {"cond": c, "bc_residual": float(res)})


def eval_1d(sol: CompositeSolution1D, x, k: int = 0) -> np.ndarray:
    """k-th derivative of the composite solution (k <= 2r)."""
    if k < 0 or k > 2 * sol.r:
        raise ValueError(f"derivative order {k} exceeds 2r = {2 * sol.r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = sol.phi0.eval(x, k) + sol.phi1.value(x, k)
    if sol.phis is not None:
        u = u + sol.phis.eval(x, None, k)
    scale = max(np.abs(u).max(initial=0.0), 1e-300)
    if np.abs(np.imag(u)).max(initial=0.0) > 1e-10 * scale:
        raise ArithmeticError(f"composite solution has imaginary residue {np.abs(np.imag(u)).max():.3g}")
    return np.real(u)


# --------------------------------------------------------------------------- baseline


def as_derivative_fn(u) -> Callable[[np.ndarray, int], np.ndarray]:
    """Normalize ``u`` to a callable ``(x, k) -> u^(k)(x)``.

    Accepts an expression sampler (anything with ``derivative``) or such a
    callable already.
    """
    if not hasattr(u, "derivative"):
        return u
    cache = {}

    def fn(x, k=0):
        if k not in cache:
            cache[k] = u.derivative(k)
        return cache[k](np.asarray(x, dtype=float))

    return fn


@dataclass(frozen=True, eq=False)
class PolynomialApprox1D:
    """Baseline approximant: Fourier series of ``u - P`` plus the end polynomial ``P``."""

    flavor: str
    r: int
    series: FourierSeries1D
    poly: np.ndarray

    def eval(self, x, k: int = 0) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = npoly.polyder(self.poly, k) if k < len(self.poly) else np.zeros(1)
        return np.real(self.series.eval(x, k)) + npoly.polyval(x, d)


def baseline_poly_approx(u, r: int, M: int, flavor: str, interval: tuple[float, float]) -> PolynomialApprox1D:
    """Composite approximation with a polynomial boundary correction.

    The polynomial matches the flavor's 2r end functionals of ``u``; the
    remainder is expanded in the flavor's Fourier series.
    """
    fn = as_derivative_fn(u)
    lo, hi = interval
    P = end_interpolants(flavor, lo, hi, r)
    data = np.array([sum(s * float(fn(np.array([x]), k)[0]) for x, s in pts)
                     for k, pts in flavor_functionals(flavor, lo, hi, r)])
    poly = P @ data
    coef = fourier_coefficients_1d(lambda x: fn(x, 0) - npoly.polyval(x, poly), flavor, lo, hi, M)
    if flavor != "full":
        coef = coef.real
    return PolynomialApprox1D(flavor, r, FourierSeries1D(flavor, (float(lo), float(hi)), coef), poly)


@dataclass(frozen=True)
class ErrorCurve:
    k: int
    M: tuple[int, ...]
    error: tuple[float, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.M, self.M[1:])):
            raise ValueError("truncation orders must be strictly increasing")

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.error, self.error[1:]))


def relative_sup_error(exact_vals: np.ndarray, approx_vals: np.ndarray) -> float:
    denom = np.abs(exact_vals).max()
    if denom < 1e-300:
        denom = 1.0
    return float(np.abs(exact_vals - approx_vals).max() / denom)


def error_curve(exact, approx_factory: Callable[[int], object], k: int, Ms: Sequence[int],
                interval: tuple[float, float], n_grid: int = 1001) -> ErrorCurve:
    """``e^(k)`` over truncations: relative sup-norm error on a uniform closed grid."""
    Ms = [int(m) for m in Ms]
    if not Ms or any(m < 1 for m in Ms) or any(b <= a for a, b in zip(Ms, Ms[1:])):
        raise ValueError(f"truncations must be positive and strictly increasing, got {Ms}")
    fn = as_derivative_fn(exact)
    x = np.linspace(interval[0], interval[1], n_grid)
    ex = fn(x, k)
    errs = tuple(relative_sup_error(ex, approx_factory(M).eval(x, k)) for M in Ms)
    return ErrorCurve(k, tuple(Ms), errs)
