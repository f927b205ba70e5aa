"""Two-dimensional composite solution: internal, boundary, corner and supplementary parts.

Every component is stored as a :class:`Block`: a separable expansion
``sum_ij W[i, j, c] X_i(x1) Y_j(x2)`` over two one-dimensional exponential
bases.  Fourier modes, exponential homogeneous solutions and monomials are
all exponential-polynomial entries, so evaluation, derivatives and the
Fourier moments of boundary traces share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .charpoly import (HomogeneousBasis1D, Polynomial, amplitude_relation, build_basis,
                       build_characteristic_n0, build_per_harmonic_system, exponential_basis,
                       find_roots, polynomial_basis, RootCluster)
from .linsolve import SingularSystemError, cond_estimate, lu_solve
from .problem import Domain, Operator1D, Operator2D, symbol_2d
from .quadrature import analysis_matrix, family_frequencies, mode_frequency, mode_numbers, tensor_nodes

COND_LIMIT = 1e13


class ResonanceError(ArithmeticError):
    """Operator symbol vanishes at a retained Fourier mode."""

    def __init__(self, mode):
        super().__init__(f"operator symbol vanishes at mode {mode}")
        self.mode = mode


# --------------------------------------------------------------------------- polynomials


def apply_operator_poly(op: Operator1D | Operator2D, P: np.ndarray) -> np.ndarray:
    """Coefficients of ``L P`` (same shape as ``P``) for an ascending coefficient array."""
    P = np.asarray(P, dtype=float)
    out = np.zeros_like(P)
    if isinstance(op, Operator1D):
        for k, a in enumerate(op.coeffs):
            if a and k < len(P):
                d = npoly.polyder(P, k)
                out[: len(d)] += a * d
        return out
    for (k1, k2), a in op.coeffs.items():
        if not a or k1 >= P.shape[0] or k2 >= P.shape[1]:
            continue
        d = npoly.polyder(npoly.polyder(P, k1, axis=0), k2, axis=1)
        out[: d.shape[0], : d.shape[1]] += a * d
    return out


def poly_derivative(P: np.ndarray, k1: int, k2: int | None = None) -> np.ndarray:
    if P.ndim == 1:
        return npoly.polyder(P, k1) if k1 < len(P) else np.zeros(1)
    if k1 >= P.shape[0] or k2 >= P.shape[1]:
        return np.zeros((1, 1))
    return npoly.polyder(npoly.polyder(P, k1, axis=0), k2, axis=1)


@dataclass(frozen=True, eq=False)
class SupplementaryPolynomial:
    """Polynomial particular solution; ``coeffs`` is 1D or indexed ``[j1, j2]``."""

    coeffs: np.ndarray

    def eval(self, x1, x2=None, k1: int = 0, k2: int = 0):
        d = poly_derivative(self.coeffs, k1, k2)
        if self.coeffs.ndim == 1:
            return npoly.polyval(np.asarray(x1, dtype=float), d)
        return npoly.polyval2d(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), d)


def supplementary_solution(op: Operator1D | Operator2D, fs) -> SupplementaryPolynomial:
    """Polynomial ``phi_s`` with ``L phi_s = f_s`` by undetermined coefficients.

    Tries total degree d, d+1, ..., d+2r and returns the first (minimum-norm)
    exact solution.
    """
    fs = np.asarray(fs, dtype=float)
    dim = fs.ndim
    r = op.order // 2
    d = _total_degree(fs)
    scale = max(np.abs(fs).max(), 1e-300)
    for D in range(d, d + 2 * r + 1):
        shape = (D + 1,) * dim
        monos = [k for k in np.ndindex(shape) if sum(k) <= D]
        cols = []
        for k in monos:
            e = np.zeros(shape)
            e[k] = 1.0
            cols.append(apply_operator_poly(op, e).ravel())
        A = np.array(cols).T
        target = np.zeros(shape)
        # entries beyond index D are zero because the total degree d <= D
        target[tuple(slice(0, min(s, D + 1)) for s in fs.shape)] = fs[tuple(slice(0, D + 1) for _ in fs.shape)]
        c, *_ = np.linalg.lstsq(A, target.ravel(), rcond=None)
        if np.abs(A @ c - target.ravel()).max() <= 1e-12 * scale:
            out = np.zeros(shape)
            for k, v in zip(monos, c):
                out[k] = v
            out[np.abs(out) < 1e-15 * max(np.abs(out).max(), 1e-300)] = 0.0
            return SupplementaryPolynomial(out)
    raise SingularSystemError("no polynomial supplementary solution within degree d + 2r; fold f_s into f")


def _total_degree(P: np.ndarray) -> int:
    nz = [sum(k) for k in np.ndindex(P.shape) if P[k] != 0]
    return max(nz, default=0)


# --------------------------------------------------------------------------- functionals / interpolants


def flavor_functionals(flavor: str, lo: float, hi: float, r: int):
    """Boundary functionals defining boundary-function constants along one axis.

    Each functional is ``(k, ((x, sign), ...))`` meaning ``sum sign * f^(k)(x)``.
    full: jumps f^(k)(hi) - f^(k)(lo), k = 0..2r-1; half_sine: f^(2i) at hi then
    lo; half_cosine: f^(2i+1) at hi then lo.
    """
    if flavor in ("full", "full_2d"):
        return [(k, ((hi, 1.0), (lo, -1.0))) for k in range(2 * r)]
    start = 0 if flavor in ("half_sine", "sine_sine") else 1
    out = []
    for i in range(r):
        k = 2 * i + start
        out += [(k, ((hi, 1.0),)), (k, ((lo, 1.0),))]
    return out


def apply_functionals(functionals, basis: HomogeneousBasis1D) -> np.ndarray:
    rows = []
    for k, pts in functionals:
        rows.append(sum(s * basis.eval([x], k)[0] for x, s in pts))
    return np.array(rows)


def end_interpolants(flavor: str, lo: float, hi: float, r: int) -> np.ndarray:
    """Cardinal polynomials for the flavor's functionals.

    Returns ``P`` of shape (deg + 1, 2r): column i holds ascending coefficients
    of the polynomial with functional_j = delta_ij.  Jump and odd-derivative
    functionals annihilate constants, so those families use x^1..x^(2r).
    """
    F = flavor_functionals(flavor, lo, hi, r)
    first = 0 if flavor in ("half_sine", "sine_sine") else 1
    degs = range(first, first + 2 * r)
    A = np.zeros((2 * r, 2 * r))
    for j, p in enumerate(degs):
        e = np.zeros(p + 1)
        e[p] = 1.0
        for i, (k, pts) in enumerate(F):
            A[i, j] = sum(s * npoly.polyval(x, poly_derivative(e, k)) for x, s in pts)
    C = np.linalg.solve(A, np.eye(2 * r))
    P = np.zeros((first + 2 * r, 2 * r))
    P[first:, :] = C
    return P


# --------------------------------------------------------------------------- blocks


@dataclass(frozen=True, eq=False)
class Block:
    """Columns ``c`` are functions ``sum_ij W[i, j, c] X_i(x1) Y_j(x2)``."""

    X: HomogeneousBasis1D
    Y: HomogeneousBasis1D
    W: np.ndarray
    labels: tuple = ()

    @property
    def ncols(self) -> int:
        return self.W.shape[2]

    def eval(self, x1, x2, k1: int = 0, k2: int = 0) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.atleast_1d(np.asarray(x1, float)), np.atleast_1d(np.asarray(x2, float)))
        return np.einsum("pi,pj,ijc->pc", self.X.eval(x1, k1), self.Y.eval(x2, k2), self.W, optimize=True)

    def apply(self, terms: Mapping[tuple[int, int], float], x1, x2) -> np.ndarray:
        out = 0
        for (k1, k2), b in terms.items():
            if b:
                out = out + b * self.eval(x1, x2, k1, k2)
        return out

    def side_moments(self, side: str, coord: float, terms: Mapping[tuple[int, int], float],
                     family: str, n_modes: int) -> np.ndarray:
        """Expansion coefficients of ``B(col)`` along a side, in closed form."""
        on_x1 = side.startswith("x1")
        tang = self.Y if on_x1 else self.X
        om, wts, center = family_frequencies(family, *tang.interval, n_modes)
        out = 0
        for (k1, k2), b in terms.items():
            if not b:
                continue
            if on_x1:
                fixed = self.X.eval([coord], k1)[0]
                mom = wts @ self.Y.moments(k2, om, center)
                out = out + b * np.einsum("i,rj,ijc->rc", fixed, mom, self.W, optimize=True)
            else:
                fixed = self.Y.eval([coord], k2)[0]
                mom = wts @ self.X.moments(k1, om, center)
                out = out + b * np.einsum("ri,j,ijc->rc", mom, fixed, self.W, optimize=True)
        return out

    def swapped(self, labels=None) -> "Block":
        return Block(self.Y, self.X, self.W.transpose(1, 0, 2), self.labels if labels is None else labels)


def poly_block(polys: Sequence[np.ndarray], domain: Domain, labels=()) -> Block:
    """Block whose columns are 2D polynomials (coefficient arrays ``[j1, j2]``)."""
    d1 = max(p.shape[0] for p in polys) - 1
    d2 = max(p.shape[1] for p in polys) - 1
    W = np.zeros((d1 + 1, d2 + 1, len(polys)), dtype=complex)
    for c, p in enumerate(polys):
        W[: p.shape[0], : p.shape[1], c] = p
    return Block(polynomial_basis(d1, domain.x1_range), polynomial_basis(d2, domain.x2_range), W, tuple(labels))


def _mode_basis(flavor: str, interval, M: int):
    """Exponential entries for the internal-function modes plus the synthesis map.

    Returns ``(basis, S)`` with ``mode_function_m = sum_i S[m, i] entry_i``.
    """
    lo, hi = interval
    w0 = mode_frequency(flavor, lo, hi)
    m = mode_numbers(flavor, M)
    if flavor in ("full", "full_2d"):
        return exponential_basis(1j * w0 * m, interval, 0.0), np.eye(len(m), dtype=complex)
    eta = np.concatenate([1j * w0 * m, -1j * w0 * m])
    S = np.zeros((len(m), 2 * len(m)), dtype=complex)
    idx = np.arange(len(m))
    if flavor in ("half_sine", "sine_sine"):
        S[idx, idx], S[idx, len(m) + idx] = 1 / 2j, -1 / 2j
    else:
        S[idx, idx], S[idx, len(m) + idx] = 0.5, 0.5
        S[0, :] *= 0.5  # A_0 / 2
    return exponential_basis(eta, interval, lo), S


def fourier_block(coeffs: np.ndarray, flavor: str, domain: Domain, labels=("phi0",)) -> Block:
    """Internal function as a block; ``coeffs`` shape (modes_x, modes_y[, ncols])."""
    coeffs = np.asarray(coeffs)
    if coeffs.ndim == 2:
        coeffs = coeffs[:, :, None]
    axis_flavor = "full" if flavor == "full_2d" else "half_sine"
    Mx = coeffs.shape[0] if flavor == "sine_sine" else (coeffs.shape[0] - 1) // 2
    Ny = coeffs.shape[1] if flavor == "sine_sine" else (coeffs.shape[1] - 1) // 2
    X, Sx = _mode_basis(axis_flavor, domain.x1_range, Mx)
    Y, Sy = _mode_basis(axis_flavor, domain.x2_range, Ny)
    W = np.einsum("mi,mnc,nj->ijc", Sx, coeffs, Sy)
    return Block(X, Y, W, tuple(labels))


def mode_product_block(flavor: str, domain: Domain, M: int, N: int) -> Block:
    """Every internal-function mode as its own column (used by the transformation)."""
    axis_flavor = "full" if flavor == "full_2d" else "half_sine"
    X, Sx = _mode_basis(axis_flavor, domain.x1_range, M)
    Y, Sy = _mode_basis(axis_flavor, domain.x2_range, N)
    mx, ny = Sx.shape[0], Sy.shape[0]
    W = np.einsum("mi,nj->ijmn", Sx, Sy).reshape(Sx.shape[1], Sy.shape[1], mx * ny)
    labels = tuple(("phi0", int(a), int(b)) for a in mode_numbers(axis_flavor, M) for b in mode_numbers(axis_flavor, N))
    return Block(X, Y, W, labels)


# --------------------------------------------------------------------------- corner function


@dataclass(frozen=True, eq=False)
class CornerFunction2D:
    coeffs: np.ndarray  # [j1, j2]

    def eval(self, x1, x2, k1: int = 0, k2: int = 0):
        return npoly.polyval2d(np.asarray(x1, float), np.asarray(x2, float), poly_derivative(self.coeffs, k1, k2))


def corner_items(flavor: str, r: int) -> list[tuple]:
    """Labels of the corner data: sine_sine ``(e1, e2, k1, k2)`` with e in {'+', '-'}
    meaning u^(2k1, 2k2) at that corner; full_2d ``(k1, k2)`` double jumps."""
    if flavor == "sine_sine":
        return [(e1, e2, k1, k2) for e1 in "+-" for e2 in "+-"
                for k1 in range(r) for k2 in range(r) if k1 + k2 <= r - 1]
    return [(k1, k2) for k1 in range(2 * r) for k2 in range(2 * r) if k1 + k2 <= 2 * r - 2]


def corner_basis(flavor: str, domain: Domain, r: int) -> list[np.ndarray]:
    """Tensor products of 1D cardinal interpolants, one per corner data item."""
    axis = "half_sine" if flavor == "sine_sine" else "full"
    P1 = end_interpolants(axis, *domain.x1_range, r)
    P2 = end_interpolants(axis, *domain.x2_range, r)
    out = []
    for item in corner_items(flavor, r):
        if flavor == "sine_sine":
            e1, e2, k1, k2 = item
            i = 2 * k1 + (0 if e1 == "+" else 1)
            j = 2 * k2 + (0 if e2 == "+" else 1)
        else:
            i, j = item
        out.append(np.outer(P1[:, i], P2[:, j]))
    return out


def corner_function(corner_data: Mapping | Sequence[float], r: int, flavor: str, domain: Domain) -> CornerFunction2D:
    """Corner polynomial reproducing the given corner data.

    ``corner_data`` maps :func:`corner_items` labels to values (missing items
    are zero) or is a sequence in that order.
    """
    items = corner_items(flavor, r)
    if isinstance(corner_data, Mapping):
        vals = [corner_data.get(it, 0.0) for it in items]
    else:
        vals = list(corner_data)
    basis = corner_basis(flavor, domain, r)
    out = np.zeros(basis[0].shape)
    for v, p in zip(vals, basis):
        out = out + v * p
    return CornerFunction2D(out)


def corner_conditions(flavor: str, domain: Domain, r: int, fn: Callable) -> np.ndarray:
    """Evaluate the corner data functionals of ``fn(x1, x2, k1, k2)``."""
    (a0, a1), (b0, b1) = domain.x1_range, domain.x2_range
    out = []
    for item in corner_items(flavor, r):
        if flavor == "sine_sine":
            e1, e2, k1, k2 = item
            out.append(fn(a1 if e1 == "+" else a0, b1 if e2 == "+" else b0, 2 * k1, 2 * k2))
        else:
            k1, k2 = item
            out.append(fn(a1, b1, k1, k2) - fn(a1, b0, k1, k2) - fn(a0, b1, k1, k2) + fn(a0, b0, k1, k2))
    return np.array(out)


# --------------------------------------------------------------------------- internal function


def rhs_coefficients_2d(values: np.ndarray, flavor: str, domain: Domain, M: int, N: int, x, wx, y, wy):
    """Tensor quadrature of sampled values (nx, ny[, ncols]) onto the mode grid."""
    axis = "full" if flavor == "full_2d" else "half_sine"
    Ax = analysis_matrix(axis, *domain.x1_range, M, x, wx)
    Ay = analysis_matrix(axis, *domain.x2_range, N, y, wy)
    if values.ndim == 2:
        return Ax @ values @ Ay.T
    return np.einsum("mp,pqc,nq->mnc", Ax, values, Ay, optimize=True)


def mode_symbols(op: Operator2D, flavor: str, domain: Domain, M: int, N: int):
    axis = "full" if flavor == "full_2d" else "half_sine"
    a = mode_frequency(axis, *domain.x1_range) * mode_numbers(axis, M)
    b = mode_frequency(axis, *domain.x2_range) * mode_numbers(axis, N)
    A, B = np.meshgrid(a, b, indexing="ij")
    return symbol_2d(op, 1j * A, 1j * B), A, B


def divide_by_symbol(coeffs, op: Operator2D, flavor: str, domain: Domain, M: int, N: int):
    sym, A, B = mode_symbols(op, flavor, domain, M, N)
    bad = np.abs(sym) < 1e-10 * (1 + np.hypot(A, B)) ** op.order
    if bad.any():
        i, j = np.argwhere(bad)[0]
        axis = "full" if flavor == "full_2d" else "half_sine"
        raise ResonanceError((int(mode_numbers(axis, M)[i]), int(mode_numbers(axis, N)[j])))
    if coeffs.ndim == 3:
        return coeffs / sym[:, :, None]
    return coeffs / sym


def quadrature_grid(rhs: Callable, domain: Domain, M: int, N: int):
    (a0, a1), (b0, b1) = domain.x1_range, domain.x2_range
    ym, xm = 0.5 * (b0 + b1), 0.5 * (a0 + a1)
    return tensor_nodes(lambda s: rhs(s, np.full_like(s, ym)), lambda s: rhs(np.full_like(s, xm), s),
                        domain.x1_range, domain.x2_range, M, N)


def particular_2d(op: Operator2D, rhs: Callable, M: int, N: int, flavor: str, domain: Domain) -> np.ndarray:
    """Internal-function coefficients: rhs coefficients divided by the mode symbol.

    full_2d: complex exponential coefficients, shape (2M+1, 2N+1); sine_sine:
    double sine coefficients, shape (M, N).
    """
    x, wx, y, wy = quadrature_grid(rhs, domain, M, N)
    F = rhs(x[:, None], y[None, :])
    if not np.any(F):
        shape = (2 * M + 1, 2 * N + 1) if flavor == "full_2d" else (M, N)
        divide_by_symbol(np.zeros(shape), op, flavor, domain, M, N)
        return np.zeros(shape, dtype=complex if flavor == "full_2d" else float)
    c = rhs_coefficients_2d(F, flavor, domain, M, N, x, wx, y, wy)
    out = divide_by_symbol(c, op, flavor, domain, M, N)
    return out if flavor == "full_2d" else out.real


# --------------------------------------------------------------------------- boundary functions


@dataclass(frozen=True, eq=False)
class HarmonicRecord:
    n: int
    beta: float
    basis: HomogeneousBasis1D
    R: np.ndarray          # functionals applied to the raw basis (2r x entries)
    T: np.ndarray | None   # amplitude stacking [I; diag(G2/G1)] (full, n >= 1)
    ST: np.ndarray         # matrix inverted for normalization
    block: Block


@dataclass(frozen=True, eq=False)
class BoundaryFunction2D:
    axis: int                     # 1: phi1 (x1 sides), 2: phi2 (x2 sides)
    flavor: str
    harmonics: tuple[HarmonicRecord, ...]

    @property
    def blocks(self) -> list[Block]:
        return [h.block for h in self.harmonics]

    @property
    def ncols(self) -> int:
        return sum(b.ncols for b in self.blocks)

    def labels(self) -> list:
        return [lab for b in self.blocks for lab in b.labels]

    def eval(self, x1, x2, k1=0, k2=0) -> np.ndarray:
        return np.concatenate([b.eval(x1, x2, k1, k2) for b in self.blocks], axis=1)

    def value(self, q, x1, x2, k1=0, k2=0):
        return self.eval(x1, x2, k1, k2) @ q


def _check_cond(M, what):
    c = cond_estimate(M)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularSystemError(f"{what} is singular (condition estimate {c:.3g})")


def _harmonic_full(op: Operator2D, domain: Domain, n: int, tag: str) -> HarmonicRecord:
    r = op.r
    lo, hi = domain.x1_range
    beta = n * np.pi / domain.b
    sys = build_per_harmonic_system(op, n, beta)
    rp = find_roots(sys.p_plus)
    rm = find_roots(sys.p_minus)
    bp, bm = build_basis(rp, (lo, hi)), build_basis(rm, (lo, hi))
    basis = HomogeneousBasis1D(np.concatenate([bp.eta, bm.eta]), np.concatenate([bp.power, bm.power]),
                               np.concatenate([bp.x_ref, bm.x_ref]), (lo, hi))
    g2 = np.concatenate([np.full(len(bp), 1j), np.full(len(bm), -1j)])
    _check_directions(sys, rp, 1j)
    _check_directions(sys, rm, -1j)
    T = np.vstack([np.eye(len(basis)), np.diag(g2)])
    R = apply_functionals(flavor_functionals("full", lo, hi, r), basis)
    S = np.block([[R, np.zeros_like(R)], [np.zeros_like(R), R]])
    ST = S @ T
    _check_cond(ST, f"S T matrix of harmonic n={n}")
    inv = np.linalg.solve(ST, np.eye(len(ST)))
    Ccos, Csin = inv, np.diag(g2) @ inv
    W = np.stack([Ccos / 2 + Csin / 2j, Ccos / 2 - Csin / 2j], axis=1)
    Y = exponential_basis([1j * beta, -1j * beta], domain.x2_range, 0.0)
    labels = [(tag, n, "cos", k) for k in range(2 * r)] + [(tag, n, "sin", k) for k in range(2 * r)]
    return HarmonicRecord(n, beta, basis, R, T, ST, Block(basis, Y, W, tuple(labels)))


def _check_directions(sys, roots: list[RootCluster], g2: complex):
    d = np.array([1.0, g2])
    for root in roots:
        dirs = amplitude_relation(sys, root)
        if len(dirs) == 1:
            v = dirs[0]
            if abs(v[0] * g2 - v[1]) > 1e-6 * np.abs(v).max():
                raise SingularSystemError(f"amplitude relation mismatch at eta={root.value}")
        elif np.abs(sys.matrix(root.value) @ d).max() > 1e-6:
            raise SingularSystemError(f"degenerate amplitude relation at eta={root.value}")


def _harmonic_n0(op: Operator2D, domain: Domain, tag: str) -> HarmonicRecord:
    r = op.r
    lo, hi = domain.x1_range
    basis = build_basis(find_roots(build_characteristic_n0(op)), (lo, hi))
    R = apply_functionals(flavor_functionals("full", lo, hi, r), basis)
    _check_cond(R, "R matrix of harmonic n=0")
    inv = np.linalg.solve(R, np.eye(len(R)))
    W = (0.5 * inv)[:, None, :]
    Y = exponential_basis([0.0], domain.x2_range, 0.0)
    labels = [(tag, 0, "cos", k) for k in range(2 * r)]
    return HarmonicRecord(0, 0.0, basis, R, None, R, Block(basis, Y, W, tuple(labels)))


def _harmonic_sine(op: Operator2D, domain: Domain, n: int, tag: str) -> HarmonicRecord:
    r = op.r
    lo, hi = domain.x1_range
    beta = n * np.pi / domain.b
    sys = build_per_harmonic_system(op, n, beta)
    basis = build_basis(find_roots(sys.p_plus), (lo, hi))
    R = apply_functionals(flavor_functionals("half_sine", lo, hi, r), basis)
    _check_cond(R, f"R matrix of harmonic n={n}")
    inv = np.linalg.solve(R, np.eye(len(R)))
    W = np.stack([inv / 2j, -inv / 2j], axis=1)
    Y = exponential_basis([1j * beta, -1j * beta], domain.x2_range, 0.0)
    labels = [(tag, n, "sin", k) for k in range(2 * r)]
    return HarmonicRecord(n, beta, basis, R, None, R, Block(basis, Y, W, tuple(labels)))


def boundary_function_phi1(op: Operator2D, domain: Domain, flavor: str, N: int, tag: str = "phi1") -> BoundaryFunction2D:
    """Per-harmonic homogeneous solutions normalized by their x1-boundary functionals."""
    if flavor == "full_2d":
        hs = [_harmonic_n0(op, domain, tag)] + [_harmonic_full(op, domain, n, tag) for n in range(1, N + 1)]
    elif flavor == "sine_sine":
        hs = [_harmonic_sine(op, domain, n, tag) for n in range(1, N + 1)]
    else:
        raise ValueError(f"not a 2D flavor: {flavor}")
    return BoundaryFunction2D(1, flavor, tuple(hs))


def boundary_function_phi2(op: Operator2D, domain: Domain, flavor: str, M: int) -> BoundaryFunction2D:
    """phi1 machinery on the transposed operator with the axes exchanged."""
    swapped = Domain(domain.kind, domain.b, domain.a)
    bf = boundary_function_phi1(op.transpose(), swapped, flavor, M, tag="phi2")
    hs = tuple(HarmonicRecord(h.n, h.beta, h.basis, h.R, h.T, h.ST, h.block.swapped()) for h in bf.harmonics)
    return BoundaryFunction2D(2, flavor, hs)


def normalization_check(bf: BoundaryFunction2D, domain: Domain, r: int) -> list[np.ndarray]:
    """Defining functionals applied to each normalized harmonic (should be identity).

    Evaluated on the assembled 2D functions: the cosine/sine parts are read
    off at tangential coordinates 0 and b/(2n).
    """
    out = []
    for h in bf.harmonics:
        blk = h.block
        if bf.axis == 1:
            lo, hi = domain.x1_range
            tlen = domain.b
            ev = lambda x, t, k: blk.eval([x], [t], k, 0)[0]
        else:
            lo, hi = domain.x2_range
            tlen = domain.a
            ev = lambda x, t, k: blk.eval([t], [x], 0, k)[0]
        axis_flavor = "full" if bf.flavor == "full_2d" else "half_sine"
        F = flavor_functionals(axis_flavor, lo, hi, r)
        if bf.flavor == "full_2d" and h.n == 0:
            rows = [2 * sum(s * ev(x, 0.0, k) for x, s in pts) for k, pts in F]
        elif bf.flavor == "full_2d":
            t2 = tlen / (2 * h.n)
            rows = [sum(s * ev(x, 0.0, k) for x, s in pts) for k, pts in F] + \
                   [sum(s * ev(x, t2, k) for x, s in pts) for k, pts in F]
        else:
            t2 = tlen / (2 * h.n)
            rows = [sum(s * ev(x, t2, k) for x, s in pts) for k, pts in F]
        out.append(np.array(rows))
    return out


class HomogeneousHarmonic:
    """Harmonic ``n`` of phi1 built from caller-supplied homogeneous solutions.

    ``funcs[l](x1, x2, k1, k2)`` must return the (k1, k2) derivative of the
    l-th of 4r linearly independent solutions of the form
    ``xi1(x1) cos(beta x2) + xi2(x1) sin(beta x2)``.  The normalization rows are
    the x1-jumps at ``x2 = 0`` and ``x2 = b / (2n)``.
    """

    def __init__(self, funcs: Sequence[Callable], domain: Domain, r: int, n: int):
        if len(funcs) != 4 * r:
            raise ValueError(f"need 4r = {4 * r} homogeneous solutions, got {len(funcs)}")
        self.funcs = list(funcs)
        lo, hi = domain.x1_range
        rows = []
        for t in (0.0, domain.b / (2 * n)):
            for k in range(2 * r):
                rows.append([f(hi, t, k, 0) - f(lo, t, k, 0) for f in funcs])
        self.R_H = np.array(rows, dtype=complex)
        _check_cond(self.R_H, f"R_H matrix of harmonic n={n}")
        self.R_H_inv = np.linalg.solve(self.R_H, np.eye(4 * r))

    def eval(self, x1, x2, k1=0, k2=0) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.atleast_1d(np.asarray(x1, float)), np.atleast_1d(np.asarray(x2, float)))
        P = np.stack([np.asarray(f(x1, x2, k1, k2), dtype=complex) * np.ones(x1.shape) for f in self.funcs], axis=1)
        return P @ self.R_H_inv


# --------------------------------------------------------------------------- composite solution


@dataclass(frozen=True, eq=False)
class CompositeSolution2D:
    flavor: str
    r: int
    domain: Domain
    phi0: Block
    phi1: BoundaryFunction2D
    q1: np.ndarray
    phi2: BoundaryFunction2D
    q2: np.ndarray
    phi3: CornerFunction2D
    phis: SupplementaryPolynomial | None = None
    info: dict = field(default_factory=dict)

    def eval(self, x1, x2, k1=0, k2=0) -> np.ndarray:
        return eval_2d(self, x1, x2, k1, k2)


def eval_2d(sol: CompositeSolution2D, x1, x2, k1: int = 0, k2: int = 0) -> np.ndarray:
    """``d^(k1+k2) u / dx1^k1 dx2^k2`` of the composite solution at points."""
    if k1 < 0 or k2 < 0 or k1 + k2 > 2 * sol.r:
        raise ValueError(f"derivative order ({k1},{k2}) exceeds 2r = {2 * sol.r}")
    x1, x2 = np.broadcast_arrays(np.atleast_1d(np.asarray(x1, float)), np.atleast_1d(np.asarray(x2, float)))
    shape = x1.shape
    x1, x2 = x1.ravel(), x2.ravel()
    parts = [sol.phi0.eval(x1, x2, k1, k2)[:, 0], sol.phi1.value(sol.q1, x1, x2, k1, k2),
             sol.phi2.value(sol.q2, x1, x2, k1, k2), sol.phi3.eval(x1, x2, k1, k2)]
    if sol.phis is not None:
        parts.append(sol.phis.eval(x1, x2, k1, k2))
    u = sum(parts)
    # cancellation between terms can leave |u| near zero, so judge against the terms themselves
    scale = max(np.abs(p).max(initial=0.0) for p in parts)
    coef = max(np.abs(sol.phi0.W).max(initial=0.0), np.abs(sol.q1).max(initial=0.0),
               np.abs(sol.q2).max(initial=0.0), np.abs(sol.phi3.coeffs).max(initial=0.0))
    if np.abs(u.imag).max(initial=0.0) > 1e-9 * scale + 1e-13 * coef:
        raise ArithmeticError(f"composite solution has imaginary residue {np.abs(u.imag).max():.3g}")
    return u.real.reshape(shape)
