"""Composite Gauss-Legendre quadrature and Fourier coefficients of samplers."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

GRADE_RATIO = 1e3


@lru_cache(maxsize=16)
def _leggauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def panel_edges(lo: float, hi: float, n_panels: int, grade_lo=False, grade_hi=False, levels: int = 14):
    edges = np.linspace(lo, hi, n_panels + 1)
    h = edges[1] - edges[0]
    parts = [edges]
    if grade_lo:
        parts.append(lo + h * 0.3 ** np.arange(1, levels + 1))
    if grade_hi:
        parts.append(hi - h * 0.3 ** np.arange(1, levels + 1))
    return np.unique(np.concatenate(parts))


def gauss_panels(lo, hi, n_panels, order=64, grade_lo=False, grade_hi=False):
    """Nodes and weights of a composite rule, optionally graded toward the ends."""
    x, w = _leggauss(order)
    e = panel_edges(lo, hi, n_panels, grade_lo, grade_hi)
    a, b = e[:-1, None], e[1:, None]
    nodes = (0.5 * (b - a) * x[None, :] + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w[None, :]).ravel()
    return nodes, weights


def end_layers(values_at, lo: float, hi: float) -> tuple[bool, bool]:
    """Detect steep end behaviour: |f'(end)| * length / max|f| above the grading ratio."""
    L = hi - lo
    xs = np.linspace(lo, hi, 257)
    fmax = np.abs(values_at(xs)).max()
    if not np.isfinite(fmax) or fmax == 0:
        return False, False
    h = 1e-6 * L
    d_lo = abs(values_at(np.array([lo + h]))[0] - values_at(np.array([lo]))[0]) / h
    d_hi = abs(values_at(np.array([hi]))[0] - values_at(np.array([hi - h]))[0]) / h
    return d_lo * L / fmax > GRADE_RATIO, d_hi * L / fmax > GRADE_RATIO


def adaptive_nodes(values_at, lo, hi, n_panels, order=64):
    glo, ghi = end_layers(values_at, lo, hi)
    return gauss_panels(lo, hi, n_panels, order, glo, ghi)


# --------------------------------------------------------------------------- families


def family_size(family: str, n_modes: int) -> int:
    return 2 * n_modes + 1 if family == "full" else n_modes


def family_frequencies(family: str, lo: float, hi: float, n_modes: int):
    """Expansion family along an interval as combinations of ``exp(i w (x - c))``.

    Returns ``(omegas, weights, center)`` where row ``r`` of the family equals
    ``sum_s weights[r, s] * int f exp(i omegas[s] (x - center)) dx``.
    """
    if family == "sine":
        L = hi - lo
        n = np.arange(1, n_modes + 1)
        w = n * np.pi / L
        omegas = np.concatenate([w, -w])
        coef = 2.0 / L / (2j)
        weights = np.zeros((n_modes, 2 * n_modes), dtype=complex)
        weights[np.arange(n_modes), np.arange(n_modes)] = coef
        weights[np.arange(n_modes), n_modes + np.arange(n_modes)] = -coef
        return omegas, weights, lo
    if family == "full":
        c = 0.5 * (hi - lo)
        n = np.arange(1, n_modes + 1)
        w = n * np.pi / c
        omegas = np.concatenate([[0.0], w, -w])
        R = 2 * n_modes + 1
        weights = np.zeros((R, len(omegas)), dtype=complex)
        weights[0, 0] = 1.0 / c
        idx = np.arange(n_modes)
        weights[1 + idx, 1 + idx] = 0.5 / c
        weights[1 + idx, 1 + n_modes + idx] = 0.5 / c
        weights[1 + n_modes + idx, 1 + idx] = 0.5 / c / 1j
        weights[1 + n_modes + idx, 1 + n_modes + idx] = -0.5 / c / 1j
        return omegas, weights, 0.5 * (lo + hi)
    raise ValueError(f"unknown expansion family {family!r}")


def family_matrix(family: str, lo: float, hi: float, n_modes: int, nodes, weights):
    """Quadrature matrix: ``family_matrix @ f(nodes)`` gives the family coefficients."""
    om, wts, center = family_frequencies(family, lo, hi, n_modes)
    E = np.exp(1j * om[:, None] * (nodes[None, :] - center))
    return (wts @ E) * weights[None, :]


# --------------------------------------------------------------------------- internal-function coefficients


def mode_numbers(flavor: str, M: int) -> np.ndarray:
    if flavor in ("full", "full_2d"):
        return np.arange(-M, M + 1)
    if flavor == "half_cosine":
        return np.arange(0, M + 1)
    return np.arange(1, M + 1)


def mode_frequency(flavor: str, lo: float, hi: float) -> float:
    """Base wavenumber: pi/a on [-a, a] and on [0, a]."""
    return np.pi / (0.5 * (hi - lo)) if flavor in ("full", "full_2d") else np.pi / (hi - lo)


def analysis_matrix(flavor: str, lo: float, hi: float, M: int, nodes, weights):
    """Rows map samples at ``nodes`` to internal-function coefficients.

    full: complex exponential coefficients ``c_m`` (f = sum c_m e^{i m pi x / a});
    half_cosine: ``A_m`` with f = A_0/2 + sum A_m cos; half_sine: ``B_m``.
    """
    m = mode_numbers(flavor, M)
    w0 = mode_frequency(flavor, lo, hi)
    if flavor in ("full", "full_2d"):
        return np.exp(-1j * w0 * m[:, None] * nodes[None, :]) * weights[None, :] / (hi - lo)
    L = hi - lo
    trig = np.cos if flavor == "half_cosine" else np.sin
    return trig(w0 * m[:, None] * (nodes[None, :] - lo)) * weights[None, :] * (2.0 / L)


def fourier_coefficients_1d(values_at, flavor: str, lo: float, hi: float, M: int):
    n_panels = 4 * max(M, 8)
    nodes, weights = adaptive_nodes(values_at, lo, hi, n_panels)
    return analysis_matrix(flavor, lo, hi, M, nodes, weights) @ values_at(nodes)


def tensor_nodes(values_1d_x, values_1d_y, r1, r2, M, N, order=32):
    """Tensor-product rule sized for modes up to (M, N), graded where needed."""
    px = max(4, int(np.ceil(M / 2)))
    py = max(4, int(np.ceil(N / 2)))
    x, wx = adaptive_nodes(values_1d_x, r1[0], r1[1], px, order)
    y, wy = adaptive_nodes(values_1d_y, r2[0], r2[1], py, order)
    return x, wx, y, wy
