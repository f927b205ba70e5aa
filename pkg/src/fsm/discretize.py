"""Global systems for the boundary-function constants and the unknown transformation.

The internal function and the supplementary polynomial are fixed by the
forcing.  The remaining constants (boundary-function harmonics and corner
data) are fixed by the boundary conditions, either by comparing Fourier
coefficients of the boundary residuals (``fcc``) or by sampling them at
Chebyshev points (``collocation``).  Both routes add rows pinning the
tangential derivatives of the boundary residuals at the corners, and both
are solved in the least-squares sense.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .linsolve import SingularSystemError, cond_estimate, lu_solve, qr_lstsq
from .problem import BoundaryOperator, Domain, Operator2D, ValidatedProblem
from .quadrature import family_matrix, family_size, gauss_panels, adaptive_nodes
from .series1d import CompositeSolution1D, solve_1d
from .series2d import (COND_LIMIT, Block, CompositeSolution2D, CornerFunction2D, SupplementaryPolynomial,
                       apply_operator_poly, boundary_function_phi1, boundary_function_phi2, corner_basis,
                       corner_items, divide_by_symbol, fourier_block, mode_product_block, particular_2d,
                       poly_block, quadrature_grid, rhs_coefficients_2d, supplementary_solution)

log = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-8
ILL_CONDITIONED = 1e14


class IllConditionedWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GlobalSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    col_labels: tuple
    row_labels: tuple
    method: str = "fcc"

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class SolveResult:
    q: np.ndarray
    residual: float
    cond: float
    ill_conditioned: bool


def solve_global(system: GlobalSystem | tuple) -> SolveResult:
    """LU for square systems, column-pivoted QR least squares otherwise."""
    if isinstance(system, tuple):
        A, b = system
    else:
        A, b = system.matrix, system.rhs
    A = np.asarray(A)
    b = np.asarray(b)
    cond = cond_estimate(A)
    q = lu_solve(A, b) if A.shape[0] == A.shape[1] else qr_lstsq(A, b)
    res = float(np.linalg.norm(A @ q - b))
    bad = not np.isfinite(cond) or cond > ILL_CONDITIONED
    if bad:
        warnings.warn(f"ill-conditioned global system (condition estimate {cond:.3g})", IllConditionedWarning,
                      stacklevel=2)
    return SolveResult(q, res, cond, bad)


# --------------------------------------------------------------------------- column sets


@dataclass(frozen=True, eq=False)
class ColumnSet:
    """Functions assembled from blocks; block ``i`` feeds columns ``offset_i ..``."""

    parts: tuple[tuple[Block, int], ...]
    ncols: int

    def eval(self, x1, x2, k1=0, k2=0) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.atleast_1d(np.asarray(x1, float)), np.atleast_1d(np.asarray(x2, float)))
        out = np.zeros((x1.size, self.ncols), dtype=complex)
        for blk, off in self.parts:
            out[:, off:off + blk.ncols] += blk.eval(x1.ravel(), x2.ravel(), k1, k2)
        return out

    def apply(self, terms, x1, x2) -> np.ndarray:
        out = 0
        for (k1, k2), b in terms.items():
            if b:
                out = out + b * self.eval(x1, x2, k1, k2)
        return out

    def side_moments(self, side, coord, terms, family, n_modes) -> np.ndarray:
        out = np.zeros((family_size(family, n_modes), self.ncols), dtype=complex)
        for blk, off in self.parts:
            out[:, off:off + blk.ncols] += blk.side_moments(side, coord, terms, family, n_modes)
        return out


def _stack(blocks_with_width: Sequence[Sequence[Block]]) -> ColumnSet:
    parts, off = [], 0
    for group in blocks_with_width:
        width = group[0].ncols
        parts += [(b, off) for b in group]
        off += width
    return ColumnSet(tuple(parts), off)


# --------------------------------------------------------------------------- templates


@dataclass(frozen=True, eq=False)
class Templates2D:
    """Fixed and unknown parts of a 2D composite solution."""

    problem: ValidatedProblem
    phi0_coeffs: np.ndarray
    phis: SupplementaryPolynomial | None
    phi1: object
    phi2: object
    corner_polys: tuple
    corner_phi0: np.ndarray     # internal-function corrections, (modes, modes, n3)
    known: ColumnSet            # one column: phi0[f - L phi_s] + phi_s
    unknown: ColumnSet
    col_labels: tuple

    @property
    def n1(self):
        return self.phi1.ncols

    @property
    def n2(self):
        return self.phi2.ncols


def build_templates(problem: ValidatedProblem) -> Templates2D:
    op: Operator2D = problem.operator
    dom, flavor, M, N, r = problem.domain, problem.flavor, problem.M, problem.N, problem.r
    phis = supplementary_solution(op, problem.forcing.fs) if problem.forcing.fs is not None else None
    f = problem.forcing.f
    Lphis = apply_operator_poly(op, phis.coeffs) if phis is not None else None

    def rhs(x1, x2):
        v = f(x1, x2)
        if Lphis is not None:
            v = v - npoly.polyval2d(x1, x2, Lphis)
        return v

    phi0 = particular_2d(op, rhs, M, N, flavor, dom)
    known_blocks = [fourier_block(phi0, flavor, dom)]
    if phis is not None:
        known_blocks.append(poly_block([phis.coeffs], dom, ("phis",)))

    phi1 = boundary_function_phi1(op, dom, flavor, N)
    phi2 = boundary_function_phi2(op, dom, flavor, M)
    polys = corner_basis(flavor, dom, r)
    corr = _corner_corrections(op, polys, flavor, dom, M, N)
    items = corner_items(flavor, r)

    parts, off = [], 0
    for blk in phi1.blocks + phi2.blocks:
        parts.append((blk, off))
        off += blk.ncols
    n3 = len(polys)
    parts.append((poly_block(polys, dom, tuple(("phi3",) + tuple(it) for it in items)), off))
    parts.append((fourier_block(-corr, flavor, dom, ("phi3-phi0",)), off))
    off += n3
    labels = tuple(phi1.labels() + phi2.labels() + [("phi3",) + tuple(it) for it in items])
    unknown = ColumnSet(tuple(parts), off)
    known = ColumnSet(tuple((b, 0) for b in known_blocks), 1)
    return Templates2D(problem, phi0, phis, phi1, phi2, tuple(polys), corr, known, unknown, labels)


def _corner_corrections(op, polys, flavor, dom, M, N) -> np.ndarray:
    """Internal-function coefficients of ``L psi_j`` for each corner polynomial."""
    Lp = [apply_operator_poly(op, p) for p in polys]
    shape = (2 * M + 1, 2 * N + 1) if flavor == "full_2d" else (M, N)
    out = np.zeros(shape + (len(polys),), dtype=complex if flavor == "full_2d" else float)
    live = [j for j, p in enumerate(Lp) if np.any(p)]
    if not live:
        divide_by_symbol(out, op, flavor, dom, M, N)
        return out
    x, wx, y, wy = quadrature_grid(lambda a, b: np.zeros_like(a * b), dom, M, N)
    X, Y = np.meshgrid(x, y, indexing="ij")
    vals = np.stack([npoly.polyval2d(X, Y, Lp[j]) for j in live], axis=2)
    c = divide_by_symbol(rhs_coefficients_2d(vals, flavor, dom, M, N, x, wx, y, wy), op, flavor, dom, M, N)
    out[:, :, live] = c if flavor == "full_2d" else c.real
    return out


# --------------------------------------------------------------------------- boundary rows


def _terms(bop: BoundaryOperator) -> dict:
    return {tuple(k): b for k, b in bop.coeffs.items() if b}


def _tangent(side: str, domain: Domain):
    """(tangential range, point builder) for a side."""
    coord = domain.side_coordinate(side)
    if side.startswith("x1"):
        return domain.x2_range, (lambda t: (np.full_like(t, coord), t))
    return domain.x1_range, (lambda t: (t, np.full_like(t, coord)))


def _family(flavor: str) -> str:
    return "full" if flavor == "full_2d" else "sine"


def _corner_rows(tpl: Templates2D):
    """Rows pinning tangential derivatives of each boundary residual at the corners."""
    pb = tpl.problem
    dom, r = pb.domain, pb.r
    rows, rhs, labels = [], [], []
    for side in ("x1+", "x1-", "x2+", "x2-"):
        (t0, t1), _ = _tangent(side, dom)
        c = dom.side_coordinate(side)
        for t in (t1, t0):
            x1, x2 = (c, t) if side.startswith("x1") else (t, c)
            for l, bc in enumerate(pb.bcs[side]):
                terms = _terms(bc.op)
                order = bc.op.max_order()
                for j in range(2 * r - order):
                    dj = (0, j) if side.startswith("x1") else (j, 0)
                    shifted = {(k1 + dj[0], k2 + dj[1]): b for (k1, k2), b in terms.items()}
                    rows.append(tpl.unknown.apply(shifted, [x1], [x2])[0])
                    g = float(bc.g.derivative(*dj)(x1, x2))
                    rhs.append(g - tpl.known.apply(shifted, [x1], [x2])[0, 0])
                    labels.append((side, l, "corner", float(t), j))
    return rows, rhs, labels


def default_nb(problem) -> int:
    return max(problem.M, problem.N) + 2 * problem.r


def assemble_fcc(tpl: Templates2D, N_b: int | None = None, check: bool = True) -> GlobalSystem:
    """Fourier coefficient comparison of every boundary residual (plus corner rows)."""
    pb = tpl.problem
    dom = pb.domain
    N_b = default_nb(pb) if N_b is None else N_b
    fam = _family(pb.flavor)
    rng = np.random.default_rng(0)
    probe = rng.standard_normal(tpl.unknown.ncols)
    rows, rhs, labels = [], [], []
    for side in ("x1+", "x1-", "x2+", "x2-"):
        (t0, t1), pts = _tangent(side, dom)
        coord = dom.side_coordinate(side)
        for l, bc in enumerate(pb.bcs[side]):
            terms = _terms(bc.op)
            A = tpl.unknown.side_moments(side, coord, terms, fam, N_b)
            k = tpl.known.side_moments(side, coord, terms, fam, N_b)[:, 0]
            g_at = lambda t, g=bc.g: g(*pts(t))
            nodes, w = adaptive_nodes(g_at, t0, t1, 4 * max(N_b, 8))
            gm = family_matrix(fam, t0, t1, N_b, nodes, w) @ g_at(nodes)
            if check:
                _consistency(tpl, side, terms, fam, N_b, A, k, probe, pts, t0, t1)
            rows.extend(A)
            rhs.extend(gm - k)
            labels.extend((side, l, "mode", i) for i in range(len(gm)))
    cr, cb, cl = _corner_rows(tpl)
    return GlobalSystem(np.array(rows + cr), np.array(rhs + cb), tpl.col_labels, tuple(labels + cl), "fcc")


def _consistency(tpl, side, terms, fam, N_b, A, k, probe, pts, t0, t1):
    """Closed-form trace moments against quadrature of the same traces."""
    def trace(t):
        x1, x2 = pts(t)
        return tpl.unknown.apply(terms, x1, x2) @ probe + tpl.known.apply(terms, x1, x2)[:, 0]

    nodes, w = adaptive_nodes(lambda t: trace(t).real, t0, t1, max(8, N_b), 64)
    quad = family_matrix(fam, t0, t1, N_b, nodes, w) @ trace(nodes)
    closed = A @ probe + k
    scale = 1.0 + np.abs(closed).max()
    err = np.abs(quad - closed).max()
    if err > CONSISTENCY_TOL * scale:
        raise SingularSystemError(f"closed-form trace moments disagree with quadrature on {side} ({err:.3g})")


def chebyshev_points(lo: float, hi: float, P: int) -> np.ndarray:
    """First-kind Chebyshev points: interior, half a spacing away from the ends."""
    t = np.cos((2 * np.arange(P) + 1) * np.pi / (2 * P))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t


def default_points(problem) -> int:
    m = max(problem.M, problem.N)
    return 2 * (2 * m + 1) if problem.flavor == "full_2d" else 2 * m + 2


def assemble_collocation(tpl: Templates2D, P: int | None = None) -> GlobalSystem:
    pb = tpl.problem
    dom = pb.domain
    P = default_points(pb) if P is None else P
    rows, rhs, labels = [], [], []
    for side in ("x1+", "x1-", "x2+", "x2-"):
        (t0, t1), pts = _tangent(side, dom)
        t = chebyshev_points(t0, t1, P)
        x1, x2 = pts(t)
        for l, bc in enumerate(pb.bcs[side]):
            terms = _terms(bc.op)
            rows.extend(tpl.unknown.apply(terms, x1, x2))
            rhs.extend(bc.g(x1, x2) - tpl.known.apply(terms, x1, x2)[:, 0])
            labels.extend((side, l, "point", float(s)) for s in t)
    cr, cb, cl = _corner_rows(tpl)
    return GlobalSystem(np.array(rows + cr), np.array(rhs + cb), tpl.col_labels, tuple(labels + cl), "collocation")


# --------------------------------------------------------------------------- solve


def compose_2d(tpl: Templates2D, q: np.ndarray, info: dict | None = None) -> CompositeSolution2D:
    pb = tpl.problem
    n1, n2 = tpl.n1, tpl.n2
    q1, q2, q3 = q[:n1], q[n1:n1 + n2], q[n1 + n2:]
    phi0 = tpl.phi0_coeffs - tpl.corner_phi0 @ q3 if len(q3) else tpl.phi0_coeffs
    if pb.flavor == "sine_sine":
        phi0 = phi0.real
    corner = sum((v.real * p for v, p in zip(q3, tpl.corner_polys)), np.zeros(tpl.corner_polys[0].shape))
    return CompositeSolution2D(pb.flavor, pb.r, pb.domain, fourier_block(phi0, pb.flavor, pb.domain),
                               tpl.phi1, q1, tpl.phi2, q2, CornerFunction2D(corner), tpl.phis, info or {})


def solve_2d(problem: ValidatedProblem, method: str = "fcc", **kw) -> CompositeSolution2D:
    tpl = build_templates(problem)
    if method == "fcc":
        system = assemble_fcc(tpl, kw.get("N_b"))
    elif method == "collocation":
        system = assemble_collocation(tpl, kw.get("P"))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = solve_global(system)
    log.debug("global system %s: residual %.3g, cond %.3g", system.shape, res.residual, res.cond)
    info = {"method": method, "shape": system.shape, "residual": res.residual, "cond": res.cond,
            "ill_conditioned": res.ill_conditioned}
    return compose_2d(tpl, res.q, info)


def solve(problem: ValidatedProblem, method: str = "fcc", **kw) -> CompositeSolution1D | CompositeSolution2D:
    """Solve a validated problem; in 1D both methods reduce to the end-condition system."""
    if method not in ("fcc", "collocation"):
        raise ValueError(f"unknown method {method!r}")
    if problem.dim == 1:
        sol = solve_1d(problem)
        sol.info["method"] = method
        return sol
    return solve_2d(problem, method, **kw)


# --------------------------------------------------------------------------- transformation


@dataclass(frozen=True, eq=False)
class ModalBasis:
    """All constants as unknowns: internal modes q0, boundary q1, q2, corner polynomials q3."""

    columns: ColumnSet
    sizes: tuple[int, int, int, int]
    labels: tuple

    def eval(self, q, x1, x2, k1=0, k2=0) -> np.ndarray:
        return self.columns.eval(x1, x2, k1, k2) @ q


def modal_basis(op: Operator2D, domain: Domain, flavor: str, M: int, N: int) -> ModalBasis:
    modes = mode_product_block(flavor, domain, M, N)
    phi1 = boundary_function_phi1(op, domain, flavor, N)
    phi2 = boundary_function_phi2(op, domain, flavor, M)
    r = op.r
    items = corner_items(flavor, r)
    corners = poly_block(corner_basis(flavor, domain, r), domain, tuple(("phi3",) + tuple(i) for i in items))
    parts, off = [], 0
    for blk in [modes] + phi1.blocks + phi2.blocks + [corners]:
        parts.append((blk, off))
        off += blk.ncols
    sizes = (modes.ncols, phi1.ncols, phi2.ncols, corners.ncols)
    labels = tuple(modes.labels) + tuple(phi1.labels()) + tuple(phi2.labels()) + tuple(corners.labels)
    return ModalBasis(ColumnSet(tuple(parts), off), sizes, labels)


def displacement_operators(r: int) -> dict:
    """Default C operators: normal derivatives of order 0..r-1 on every side."""
    out = {}
    for side in ("x1+", "x1-", "x2+", "x2-"):
        out[side] = [BoundaryOperator({((j, 0) if side.startswith("x1") else (0, j)): 1.0}) for j in range(r)]
    return out


@dataclass(frozen=True, eq=False)
class TransformedRepresentation:
    basis: ModalBasis
    R_b: np.ndarray
    R03: np.ndarray
    R12: np.ndarray
    idx03: np.ndarray
    idx12: np.ndarray
    cond12: float

    def q_b(self, q) -> np.ndarray:
        return self.R_b @ q

    def q_R(self, q) -> tuple[np.ndarray, np.ndarray]:
        return q[self.idx03], self.R_b @ q

    def q12(self, q03, q_b) -> np.ndarray:
        return lu_solve(self.R12, q_b - self.R03 @ q03)

    def full_q(self, q03, q_b) -> np.ndarray:
        q = np.zeros(self.R_b.shape[1], dtype=complex)
        q[self.idx03] = q03
        q[self.idx12] = self.q12(q03, q_b)
        return q

    def eval(self, q03, q_b, x1, x2, k1=0, k2=0) -> np.ndarray:
        """Evaluate ``Phi_R^T q_R`` directly from the transformed constants."""
        G = self.basis.columns.eval(x1, x2, k1, k2)
        G03, G12 = G[:, self.idx03], G[:, self.idx12]
        sol = np.linalg.solve(self.R12, np.column_stack([self.R03, np.eye(len(self.R12))]))
        n03 = len(self.idx03)
        return (G03 - G12 @ sol[:, :n03]) @ q03 + G12 @ sol[:, n03:] @ q_b


def equivalent_transform(op: Operator2D, domain: Domain, flavor: str, M: int, N: int,
                         C: Mapping[str, Sequence[BoundaryOperator]] | None = None) -> TransformedRepresentation:
    """Replace the boundary-function constants by boundary moments of ``C u``.

    Rows: family moments of ``C_l u`` on each side, N harmonics on the x1 sides
    and M on the x2 sides, so the boundary-function block is square.
    """
    basis = modal_basis(op, domain, flavor, M, N)
    C = displacement_operators(op.r) if C is None else C
    fam = _family(flavor)
    rows = []
    for side in ("x1+", "x1-", "x2+", "x2-"):
        n_modes = N if side.startswith("x1") else M
        coord = domain.side_coordinate(side)
        for bop in C[side]:
            rows.append(basis.columns.side_moments(side, coord, _terms(bop), fam, n_modes))
    R_b = np.vstack(rows)
    s0, s1, s2, s3 = basis.sizes
    idx12 = np.arange(s0, s0 + s1 + s2)
    idx03 = np.concatenate([np.arange(s0), np.arange(s0 + s1 + s2, s0 + s1 + s2 + s3)])
    R12 = R_b[:, idx12]
    if R12.shape[0] != R12.shape[1]:
        raise SingularSystemError(f"boundary block is not square: {R12.shape}")
    c = cond_estimate(R12)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularSystemError(f"boundary block is singular (condition estimate {c:.3g})")
    return TransformedRepresentation(basis, R_b, R_b[:, idx03], R12, idx03, idx12, c)
