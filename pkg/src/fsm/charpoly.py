"""Characteristic polynomials, their roots, and exponential homogeneous bases.

A homogeneous basis entry is ``(x - x_ref)^j * exp(eta * (x - x_ref))``.  The
anchor ``x_ref`` is the interval end where the exponential is largest, so
every entry stays bounded by one in magnitude even for boundary-layer
parameters (``|Re eta| * length`` in the hundreds).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .linsolve import SingularSystemError, nullspace_2x2
from .problem import Operator1D, Operator2D


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Complex polynomial, coefficients in ascending degree."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        scale = np.abs(c).max() if c.size else 0.0
        n = len(c)
        while n > 1 and abs(c[n - 1]) <= 1e-14 * scale:
            n -= 1
        object.__setattr__(self, "coeffs", c[:n].copy())

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def deriv(self, m: int = 1) -> "Polynomial":
        if m > self.degree:
            return Polynomial([0.0])
        return Polynomial(np.polynomial.polynomial.polyder(self.coeffs, m))

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.polynomial.polynomial.polymul(self.coeffs, other.coeffs))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.polynomial.polynomial.polyadd(self.coeffs, other.coeffs))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.polynomial.polynomial.polysub(self.coeffs, other.coeffs))

    def __eq__(self, other):
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"Polynomial({self.coeffs!r})"


@dataclass(frozen=True)
class RootCluster:
    value: complex
    multiplicity: int


def build_characteristic_1d(op: Operator1D) -> Polynomial:
    return Polynomial(op.coeffs)


def build_characteristic_n0(op: Operator2D) -> Polynomial:
    return Polynomial([op.get(k, 0) for k in range(op.order + 1)])


def find_roots(p: Polynomial, cluster_radius: float = 1e-6) -> list[RootCluster]:
    """Roots of ``p`` with multiplicities.

    Companion-matrix eigenvalues are grouped greedily within
    ``cluster_radius * (1 + max|root|)``; clusters whose merge is consistent
    with a higher-multiplicity root (perturbation ``~ eps**(1/m)``) are then
    combined.  Each cluster value is the member mean, refined by one Newton
    step on the ``(m-1)``-th derivative.
    """
    if p.degree < 1:
        raise ValueError("find_roots needs degree >= 1")
    c = p.coeffs / p.coeffs[-1]
    n = p.degree
    comp = np.zeros((n, n), dtype=complex)
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[:-1]
    try:
        eig = np.linalg.eigvals(comp)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"eigenvalue iteration failed: {exc}") from exc
    scale = 1.0 + np.abs(eig).max()
    radius = cluster_radius * scale

    groups: list[list[complex]] = []
    for z in sorted(eig, key=lambda z: (z.real, z.imag)):
        for g in groups:
            if abs(np.mean(g) - z) <= radius:
                g.append(z)
                break
        else:
            groups.append([z])

    # merge pass for high multiplicities, whose eigenvalues spread as eps**(1/m):
    # absorb the largest set of nearest clusters consistent with one m-fold root
    eps4 = 4 * np.finfo(float).eps
    i = 0
    while i < len(groups):
        centre = np.mean(groups[i])
        others = sorted(range(len(groups)), key=lambda j: abs(np.mean(groups[j]) - centre))
        others = [j for j in others if j != i]
        best = None
        for n in range(1, len(others) + 1):
            members = groups[i] + [z for j in others[:n] for z in groups[j]]
            m = len(members)
            cand = np.mean(members)
            spread = max(abs(z - cand) for z in members)
            if spread <= 10 * eps4 ** (1.0 / m) * scale and _is_multiple_root(p, cand, m, scale):
                best = n
        if best is None:
            i += 1
            continue
        take = set(others[:best])
        groups[i] = groups[i] + [z for j in others[:best] for z in groups[j]]
        groups = [g for j, g in enumerate(groups) if j not in take]
        i = 0

    out = []
    for g in groups:
        m = len(g)
        z = complex(np.mean(g))
        lo, hi = p.deriv(m - 1), p.deriv(m)
        d = hi(z)
        if d != 0:
            step = lo(z) / d
            if abs(step) <= radius + 1e-3 * scale:
                z = z - step
        out.append(RootCluster(complex(z), m))
    return out


def _is_multiple_root(p: Polynomial, z: complex, m: int, scale: float) -> bool:
    cmax = np.abs(p.coeffs).max()
    for k in range(m):
        if abs(p.deriv(k)(z)) > 1e-5 * cmax * scale ** (p.degree - k) * factorial(k + 1):
            return False
    return True


# --------------------------------------------------------------------------- bases


def _power_exp_integrals(pmax: int, lam: np.ndarray, t0, t1) -> list[np.ndarray]:
    """``I_q = int_{t0}^{t1} t^q exp(lam t) dt`` for q = 0..pmax (broadcasting)."""
    lam, t0, t1 = np.broadcast_arrays(np.asarray(lam, dtype=complex),
                                      np.asarray(t0, dtype=float), np.asarray(t1, dtype=float))
    L = np.maximum(np.abs(t0), np.abs(t1))
    out = []
    prev = None
    for q in range(pmax + 1):
        small = np.abs(lam) * L < q + 1
        val = np.empty(lam.shape, dtype=complex)
        if small.any():
            ls, a, b = lam[small], t0[small], t1[small]
            acc = np.zeros(ls.shape, dtype=complex)
            term = np.ones(ls.shape, dtype=complex)
            for m in range(80):
                e = q + m + 1
                add = term * (b ** e - a ** e) / e
                acc += add
                term = term * ls / (m + 1)
                if m > 4 and np.all(np.abs(add) <= 1e-18 * (np.abs(acc) + 1e-300)):
                    break
            val[small] = acc
        big = ~small
        if big.any():
            lb, a, b = lam[big], t0[big], t1[big]
            boundary = (b ** q * np.exp(lb * b) - a ** q * np.exp(lb * a)) / lb
            val[big] = boundary if q == 0 else boundary - q / lb * prev[big]
        out.append(val)
        prev = val
    return out


@dataclass(frozen=True, eq=False)
class HomogeneousBasis1D:
    """Entries ``(x - x_ref)^j exp(eta (x - x_ref))`` on ``interval``."""

    eta: np.ndarray
    power: np.ndarray
    x_ref: np.ndarray
    interval: tuple[float, float]

    def __len__(self):
        return len(self.eta)

    def eval(self, x, k: int = 0) -> np.ndarray:
        """k-th derivative of every entry at points ``x``: shape (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = x[:, None] - self.x_ref[None, :]
        e = np.exp(self.eta[None, :] * t)
        out = np.zeros(t.shape, dtype=complex)
        jmax = int(self.power.max()) if len(self) else 0
        for i in range(min(k, jmax) + 1):
            j = self.power
            ok = j >= i
            fall = np.array([factorial(int(jj)) // factorial(int(jj) - i) if jj >= i else 0 for jj in j])
            tp = np.where(ok[None, :], t ** np.maximum(j - i, 0)[None, :], 0.0)
            out += comb(k, i) * fall[None, :] * self.eta[None, :] ** (k - i) * tp
        return out * e

    def moments(self, k: int, omega, center: float = 0.0) -> np.ndarray:
        """``int f^(k)(x) exp(i omega (x - center)) dx`` over the interval, closed form.

        Returns shape (len(omega), n).
        """
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        lo, hi = self.interval
        lam = self.eta[None, :] + 1j * omega[:, None]
        t0 = (lo - self.x_ref)[None, :]
        t1 = (hi - self.x_ref)[None, :]
        jmax = int(self.power.max()) if len(self) else 0
        I = _power_exp_integrals(jmax, lam, t0, t1)
        out = np.zeros(lam.shape, dtype=complex)
        for i in range(min(k, jmax) + 1):
            for p in range(jmax + 1):
                sel = self.power - i == p
                if not sel.any():
                    continue
                fall = factorial(p + i) // factorial(p)
                out[:, sel] += comb(k, i) * fall * self.eta[sel] ** (k - i) * I[p][:, sel]
        phase = np.exp(1j * omega[:, None] * (self.x_ref[None, :] - center))
        return out * phase


def build_basis(roots: list[RootCluster], interval: tuple[float, float]) -> HomogeneousBasis1D:
    """Stable homogeneous basis: confluent chains anchored at the growth end."""
    lo, hi = interval
    eta, power, xref = [], [], []
    for c in roots:
        anchor = hi if c.value.real > 0 else lo
        for j in range(c.multiplicity):
            eta.append(c.value)
            power.append(j)
            xref.append(anchor)
    return HomogeneousBasis1D(np.array(eta, dtype=complex), np.array(power, dtype=int),
                              np.array(xref, dtype=float), (float(lo), float(hi)))


def exponential_basis(eta, interval, x_ref: float = 0.0) -> HomogeneousBasis1D:
    """Plain exponentials ``exp(eta (x - x_ref))`` (used for Fourier modes)."""
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    return HomogeneousBasis1D(eta, np.zeros(len(eta), dtype=int), np.full(len(eta), float(x_ref)),
                              (float(interval[0]), float(interval[1])))


def polynomial_basis(degree: int, interval) -> HomogeneousBasis1D:
    """Monomials ``x^j`` for j = 0..degree, as zero-exponent entries anchored at 0."""
    return HomogeneousBasis1D(np.zeros(degree + 1, dtype=complex), np.arange(degree + 1),
                              np.zeros(degree + 1), (float(interval[0]), float(interval[1])))


def eval_basis(basis: HomogeneousBasis1D, x, k: int = 0) -> np.ndarray:
    return basis.eval(x, k)


# --------------------------------------------------------------------------- per-harmonic


@dataclass(frozen=True, eq=False)
class PerHarmonicSystem:
    """Constant-coefficient 2x2 ODE system for harmonic ``n`` of a full-range expansion.

    ``t11 = t22`` collects terms with even ``k2``, ``t12 = -t21`` those with odd
    ``k2``.  ``p_plus``/``p_minus`` are the scalar symbols for the
    ``exp(+-i beta x2)`` components; ``det_poly = p_plus * p_minus``.
    """

    n: int
    beta: float
    t11: Polynomial
    t12: Polynomial
    t21: Polynomial
    t22: Polynomial
    det_poly: Polynomial
    p_plus: Polynomial
    p_minus: Polynomial

    def matrix(self, eta: complex) -> np.ndarray:
        return np.array([[self.t11(eta), self.t12(eta)], [self.t21(eta), self.t22(eta)]])


def build_per_harmonic_system(op: Operator2D, n: int, beta: float) -> PerHarmonicSystem:
    deg = op.order
    even = np.zeros(deg + 1)
    odd = np.zeros(deg + 1)
    for (k1, k2), a in op.coeffs.items():
        if k2 % 2 == 0:
            even[k1] += a * (-1) ** (k2 // 2) * beta ** k2
        else:
            odd[k1] += a * (-1) ** ((k2 - 1) // 2) * beta ** k2
    t11 = Polynomial(even)
    t12 = Polynomial(odd)
    t21 = Polynomial(-odd)
    det = t11 * t11 - t12 * t21
    return PerHarmonicSystem(n, beta, t11, t12, t21, t11, det,
                             Polynomial(even + 1j * odd), Polynomial(even - 1j * odd))


def amplitude_relation(sys: PerHarmonicSystem, root: RootCluster, tol: float = 1e-8) -> np.ndarray:
    """Null directions ``(G1, G2)`` of the t-matrix at a characteristic root.

    Returns an array of shape (d, 2): the two coordinate directions when the
    matrix vanishes (decoupled system), otherwise one unit vector.
    """
    A = sys.matrix(root.value)
    scale = max(np.abs(c).max() for c in (sys.t11.coeffs, sys.t12.coeffs)) * (1 + abs(root.value)) ** sys.t11.degree
    if np.abs(A).max() <= tol * scale:
        return np.eye(2, dtype=complex)
    if abs(np.linalg.det(A)) > tol * scale ** 2 and np.linalg.svd(A, compute_uv=False)[-1] > tol * scale:
        raise SingularSystemError(f"eta={root.value} is not a root of the harmonic determinant")
    return nullspace_2x2(A)[None, :]
