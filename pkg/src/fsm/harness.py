"""Command line front end: solve problem files, sweep truncations, compare to references.

Exit codes: 0 success, 2 invalid input, 3 resonance, 4 singular system.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .discretize import solve
from .expr import X1, X2, ExpressionError, Sampler
from .linsolve import SingularSystemError
from .problem import (BoundaryCondition, BoundaryOperator, Domain, ForcingSpec, Operator1D, Operator2D,
                      ProblemError, ProblemSpec, ValidatedProblem, parse_problem, validate)
from .series1d import baseline_poly_approx, eval_1d, relative_sup_error, solve_1d
from .series2d import ResonanceError, eval_2d

log = logging.getLogger("fsm")

EXIT_INVALID, EXIT_RESONANCE, EXIT_SINGULAR = 2, 3, 4
FMT = "%.12e"


# --------------------------------------------------------------------------- references


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """Closed-form solution; ``evaluate(x1, x2, k1, k2)`` returns a derivative."""

    name: str
    evaluate: Callable
    params: dict = field(default_factory=dict)
    dim: int = 1

    def __call__(self, x1, x2=0.0, k1=0, k2=0):
        return self.evaluate(np.asarray(x1, float), np.asarray(x2, float), k1, k2)

    def derivative_fn(self):
        """``(x, k) -> u^(k)(x)`` for the one-dimensional error metric."""
        return lambda x, k=0: self(x, 0.0, k, 0)


def boundary_layer(alpha: float, a: float = 1.0) -> ReferenceSolution:
    """``sinh(alpha (a - x)) / sinh(alpha a)``, evaluated without overflow."""
    den = -np.expm1(-2 * alpha * a)

    def ev(x1, x2, k1, k2):
        if k2:
            return np.zeros_like(np.asarray(x1, float) + x2)
        e1 = np.exp(-alpha * x1)
        e2 = np.exp(-alpha * (2 * a - x1))
        body = e1 - e2 if k1 % 2 == 0 else e1 + e2
        return (-alpha) ** k1 * body / den + 0 * x2

    return _verified(ReferenceSolution("boundary_layer", ev, {"alpha": alpha, "a": a, "alpha_a": alpha * a}, 1),
                     (0.0, a), None, max_k=4, width=min(a, 1.0 / alpha))


def manufactured(expr: str | Sampler, domain: Domain) -> ReferenceSolution:
    s = expr if isinstance(expr, Sampler) else Sampler.parse(expr)
    cache: dict = {}

    def ev(x1, x2, k1, k2):
        if (k1, k2) not in cache:
            cache[(k1, k2)] = s.derivative(k1, k2)
        return cache[(k1, k2)](x1, x2)

    ref = ReferenceSolution("manufactured", ev, {"expr": s.text}, domain.dim)
    return _verified(ref, domain.x1_range, domain.x2_range if domain.dim == 2 else None, max_k=2)


def _verified(ref: ReferenceSolution, r1, r2, max_k: int, width: float | None = None) -> ReferenceSolution:
    """Check derivatives against central differences (h = 1e-5 * the finest length scale)."""
    L = r1[1] - r1[0]
    h = 1e-5 * (L if width is None else width)
    xs = r1[0] + L * np.array([0.13, 0.37, 0.5, 0.71, 0.9])
    x2 = 0.5 * (r2[0] + r2[1]) + 0.17 * (r2[1] - r2[0]) if r2 is not None else 0.0
    for k in range(1, max_k + 1):
        fd = (ref(xs + h, x2, k - 1) - ref(xs - h, x2, k - 1)) / (2 * h)
        ex = ref(xs, x2, k)
        scale = max(np.abs(ex).max(), np.abs(ref(xs, x2, k - 1)).max() / L, 1e-300)
        if np.abs(fd - ex).max() > 1e-6 * scale:
            raise ValueError(f"reference {ref.name}: derivative {k} fails the finite-difference check")
    return ref


def reference_from_problem(name: str, problem: ValidatedProblem) -> ReferenceSolution:
    if name == "boundary_layer":
        op, dom = problem.operator, problem.domain
        if not isinstance(op, Operator1D) or op.order != 2 or op.coeffs[1] != 0 or dom.kind != "interval":
            raise ValueError("boundary_layer reference needs u'' - alpha^2 u on [0, a]")
        alpha2 = -op.coeffs[0] / op.coeffs[2]
        if alpha2 <= 0:
            raise ValueError("boundary_layer reference needs a positive alpha^2")
        return boundary_layer(float(np.sqrt(alpha2)), dom.a)
    raise ValueError(f"unknown reference {name!r} (available: boundary_layer)")


def apply_manufactured(problem: ValidatedProblem, ref_expr: Sampler) -> ValidatedProblem:
    """Replace forcing and boundary data by those of the manufactured solution."""
    spec = problem.spec
    op = spec.operator
    e = ref_expr.expr
    if isinstance(op, Operator1D):
        f = sum((c * sp.diff(e, X1, k) for k, c in enumerate(op.coeffs) if c), sp.Integer(0))
    else:
        f = sum((c * sp.diff(e, X1, k1, X2, k2) for (k1, k2), c in op.coeffs.items() if c), sp.Integer(0))
    bcs = {}
    for side, conds in spec.bcs.items():
        out = []
        for bc in conds:
            g = sum((b * sp.diff(e, X1, k[0], X2, k[1] if len(k) > 1 else 0) for k, b in bc.op.coeffs.items() if b),
                    sp.Integer(0))
            if isinstance(op, Operator1D):
                g = sp.Float(float(g.subs({X1: spec.domain.side_coordinate(side), X2: 0})), 17)
            out.append(BoundaryCondition(bc.op, Sampler(g)))
        bcs[side] = tuple(out)
    return validate(replace(spec, forcing=ForcingSpec(Sampler(f), None), bcs=bcs))


# --------------------------------------------------------------------------- reports


@dataclass
class RunReport:
    problem_digest: str
    method: str
    truncations: dict
    timings: dict = field(default_factory=dict)
    error_curves: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([FMT % v if isinstance(v, (float, np.floating)) else v for v in row])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FSM_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(_threads(), len(items)) if items else 1
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------- evaluation helpers


def evaluate(sol, x1, x2=None, k=(0,)):
    if x2 is None:
        return eval_1d(sol, x1, k[0])
    return eval_2d(sol, x1, x2, k[0], k[1] if len(k) > 1 else 0)


def residuals(sol, problem: ValidatedProblem, n: int = 41) -> dict:
    """BC and interior PDE residuals by direct differentiation of the solution."""
    dom, op = problem.domain, problem.operator
    bc_res = 0.0
    if dom.dim == 1:
        for side, conds in problem.bcs.items():
            x = np.array([dom.side_coordinate(side)])
            for bc in conds:
                v = sum(b * eval_1d(sol, x, k[0]) for k, b in bc.op.coeffs.items())
                bc_res = max(bc_res, float(np.abs(v - bc.g(x)).max() / (1 + abs(bc.g(x)).max())))
        x = np.linspace(*dom.x1_range, n + 2)[1:-1]
        Lu = sum(c * eval_1d(sol, x, k) for k, c in enumerate(op.coeffs) if c)
        f = problem.forcing.f(x)
    else:
        (a0, a1), (b0, b1) = dom.x1_range, dom.x2_range
        t = np.linspace(0, 1, n + 2)[1:-1]
        for side, conds in problem.bcs.items():
            c = dom.side_coordinate(side)
            x1, x2 = (np.full_like(t, c), b0 + (b1 - b0) * t) if side.startswith("x1") else (a0 + (a1 - a0) * t, np.full_like(t, c))
            for bc in conds:
                v = sum(b * eval_2d(sol, x1, x2, *k) for k, b in bc.op.coeffs.items())
                g = bc.g(x1, x2)
                bc_res = max(bc_res, float((np.abs(v - g) / (1 + np.abs(g))).max()))
        m = 9
        X, Y = np.meshgrid(a0 + (a1 - a0) * np.linspace(0.1, 0.9, m), b0 + (b1 - b0) * np.linspace(0.1, 0.9, m))
        x, y = X.ravel(), Y.ravel()
        Lu = sum(c * eval_2d(sol, x, y, k1, k2) for (k1, k2), c in op.coeffs.items() if c)
        f = problem.forcing.f(x, y)
    if problem.forcing.fs is not None:
        fs = problem.forcing.fs
        f = f + (np.polynomial.polynomial.polyval(x, fs) if dom.dim == 1 else np.polynomial.polynomial.polyval2d(x, y, fs))
    pde = float(np.abs(Lu - f).max() / (1 + np.abs(f).max()))
    return {"bc": bc_res, "pde": pde}


def _eval_grid(dom: Domain, n: int):
    x1 = np.linspace(*dom.x1_range, n)
    if dom.dim == 1:
        return x1, None
    x2 = np.linspace(*dom.x2_range, n)
    X, Y = np.meshgrid(x1, x2, indexing="ij")
    return X.ravel(), Y.ravel()


def _load(path: str) -> tuple[str, ValidatedProblem]:
    text = Path(path).read_text(encoding="utf-8")
    return text, validate(parse_problem(text))


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _guard(fn):
    try:
        return fn()
    except (ProblemError, ExpressionError) as exc:
        raise _Fail(EXIT_INVALID, f"invalid problem: {exc}") from exc
    except ResonanceError as exc:
        raise _Fail(EXIT_RESONANCE, f"resonance: operator symbol vanishes at mode {exc.mode}") from exc
    except SingularSystemError as exc:
        raise _Fail(EXIT_SINGULAR, f"singular system: {exc}") from exc


# --------------------------------------------------------------------------- commands


def cmd_solve(path: str, method: str = "fcc", n_eval: int = 101, derivs: Sequence[tuple] = (), out: str = ".") -> RunReport:
    text, problem = _guard(lambda: _load(path))
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = _guard(lambda: solve(problem, method))
    t1 = time.perf_counter()
    dom = problem.domain
    x1, x2 = _eval_grid(dom, n_eval)
    orders = [(0,) * dom.dim] + [tuple(d) + (0,) * (dom.dim - len(d)) for d in derivs]
    cols = [evaluate(sol, x1, x2, k) for k in orders]
    header = ["x1"] + (["x2"] if dom.dim == 2 else []) + ["u" if k == orders[0] else "u_" + "_".join(map(str, k)) for k in orders]
    coords = [x1] + ([x2] if dom.dim == 2 else [])
    rows = [[float(c[i]) for c in coords] + [float(v[i]) + 0.0 for v in cols] for i in range(len(x1))]
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "solution.csv", header, rows)
    res = residuals(sol, problem)
    t2 = time.perf_counter()
    report = RunReport(digest(text), method, {"M": problem.M, "N": problem.N},
                       {"solve_s": t1 - t0, "evaluate_s": t2 - t1}, [], res,
                       [str(w.message) for w in caught], {"r": problem.r, "flavor": problem.flavor})
    (outdir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return report


def section2_problem(alpha: float, r: int, M: int, a: float = 1.0) -> ValidatedProblem:
    """Homogeneous ODE on [0, a] whose solution is the boundary-layer reference."""
    z = Sampler.constant(0.0)
    one = Sampler.constant(1.0)
    if r == 1:
        op = Operator1D((-alpha ** 2, 0.0, 1.0))
        bcs = {"x1+": (BoundaryCondition(BoundaryOperator({(0,): 1.0}), z),),
               "x1-": (BoundaryCondition(BoundaryOperator({(0,): 1.0}), one),)}
    else:
        op = Operator1D((alpha ** 4, 0.0, -2 * alpha ** 2, 0.0, 1.0))
        bcs = {"x1+": (BoundaryCondition(BoundaryOperator({(0,): 1.0}), z),
                       BoundaryCondition(BoundaryOperator({(2,): 1.0}), z)),
               "x1-": (BoundaryCondition(BoundaryOperator({(0,): 1.0}), one),
                       BoundaryCondition(BoundaryOperator({(2,): 1.0}), Sampler.constant(alpha ** 2)))}
    return validate(ProblemSpec(Domain("interval", a), op, bcs, ForcingSpec(z), "half_sine", M))


def baseline_r(k: int) -> int:
    return k // 2 + 1


def section2_rows(alphas: Sequence[float], Ms: Sequence[int], ks: Sequence[int], a: float = 1.0) -> list[tuple]:
    """``(method, alpha_a, M, k, error)`` rows for the baseline and the multiscale solver.

    The baseline uses the smallest r with 2r - 1 >= k, so the k-th derivative
    of its series converges uniformly; the multiscale solver uses r = 1 for
    k <= 2 and r = 2 above.
    """
    x = np.linspace(0.0, a, 1001)
    jobs = [(al, M, k) for al in alphas for M in Ms for k in ks]

    def run(job):
        al, M, k = job
        ref = boundary_layer(al / a, a)
        ex = ref(x, 0.0, k)
        base = baseline_poly_approx(ref.derivative_fn(), baseline_r(k), M, "half_sine", (0.0, a))
        sol = solve_1d(section2_problem(al / a, 1 if k <= 2 else 2, M, a))
        return [("baseline", al, M, k, relative_sup_error(ex, base.eval(x, k))),
                ("multiscale", al, M, k, relative_sup_error(ex, eval_1d(sol, x, k)))]

    rows = [row for pair in _pmap(run, jobs) for row in pair]
    return sorted(rows, key=lambda t: (t[0], t[1], t[3], t[2]))


def cmd_section2(alphas, Ms, ks, out: str = ".") -> RunReport:
    t0 = time.perf_counter()
    rows = section2_rows(alphas, Ms, ks)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "section2.csv", ["method", "alpha_a", "M", "k", "error"],
              [(m, float(al), M, k, float(e)) for m, al, M, k, e in rows])
    curves = [{"method": m, "alpha_a": al, "k": k, "M": [r[2] for r in rows if r[:2] == (m, al) and r[3] == k],
               "error": [r[4] for r in rows if r[:2] == (m, al) and r[3] == k]}
              for m in ("baseline", "multiscale") for al in alphas for k in ks]
    report = RunReport(digest(json.dumps([list(alphas), list(Ms), list(ks)])), "section2", {"M": list(Ms)},
                       {"total_s": time.perf_counter() - t0}, curves,
                       settings={"a": 1.0, "flavor": "half_sine", "baseline_r": "k // 2 + 1",
                                 "multiscale_r": "1 for k<=2, 2 otherwise", "grid": 1001})
    (outdir / "section2.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return report


def convergence_rows(problem: ValidatedProblem, ref: ReferenceSolution, Ms: Sequence[int], ks: Sequence[int],
                     method: str = "fcc", n_grid: int | None = None) -> list[tuple]:
    dom = problem.domain
    n_grid = n_grid or (1001 if dom.dim == 1 else 101)
    x1, x2 = _eval_grid(dom, n_grid)

    def run(M):
        spec = replace(problem.spec, M=M, N=M if dom.dim == 2 else None)
        sol = _guard(lambda: solve(validate(spec), method))
        out = []
        for k in ks:
            kk = (k, 0)
            ex = ref(x1, 0.0 if x2 is None else x2, *kk)
            out.append((M, k, relative_sup_error(ex, evaluate(sol, x1, x2, kk))))
        return out

    return [row for rows in _pmap(run, Ms) for row in rows]


def cmd_convergence(path: str, Ms: Sequence[int], reference: str | None = None, manufactured_expr: str | None = None,
                    ks: Sequence[int] = (0,), method: str = "fcc", out: str = ".") -> RunReport:
    if not Ms:
        raise _Fail(EXIT_INVALID, "empty M list")
    text, problem = _guard(lambda: _load(path))
    try:
        if manufactured_expr is not None:
            ref = manufactured(manufactured_expr, problem.domain)
            problem = _guard(lambda: apply_manufactured(problem, Sampler.parse(manufactured_expr)))
        else:
            ref = reference_from_problem(reference, problem)
    except (ValueError, ExpressionError) as exc:
        raise _Fail(EXIT_INVALID, str(exc)) from exc
    t0 = time.perf_counter()
    rows = convergence_rows(problem, ref, sorted(Ms), ks, method)
    mono = {k: all(b[2] <= a[2] for a, b in zip([r for r in rows if r[1] == k], [r for r in rows if r[1] == k][1:]))
            for k in ks}
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "convergence.csv", ["M", "k", "error", "monotone"],
              [(M, k, float(e), str(mono[k]).lower()) for M, k, e in rows])
    curves = [{"k": k, "M": [r[0] for r in rows if r[1] == k], "error": [r[2] for r in rows if r[1] == k],
               "monotone": mono[k]} for k in ks]
    report = RunReport(digest(text), method, {"M": sorted(Ms)}, {"total_s": time.perf_counter() - t0}, curves,
                       settings={"reference": ref.name, "params": ref.params})
    (outdir / "convergence.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return report


# --------------------------------------------------------------------------- argparse


def _ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("expected a non-empty list of positive numbers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsm", description="Fourier series multiscale solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("file")
    s.add_argument("--method", choices=("fcc", "collocation"), default="fcc")
    s.add_argument("--eval", type=int, default=101, dest="n_eval", help="evaluation points per direction")
    s.add_argument("--deriv", type=_ints, action="append", default=[], help="extra derivative column k1[,k2]")
    s.add_argument("--out", default=".")

    s2 = sub.add_parser("section2", help="baseline versus multiscale error curves")
    s2.add_argument("--alpha", type=_floats, default=[0.01, 1.0, 10.0, 100.0])
    s2.add_argument("--M", type=_ints, default=[8, 16, 32, 64, 128])
    s2.add_argument("--k", type=_ints, default=[0, 1, 2, 4])
    s2.add_argument("--out", default=".")

    c = sub.add_parser("convergence", help="error against a reference over truncations")
    c.add_argument("file")
    c.add_argument("--M", type=_ints, required=True)
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--reference")
    g.add_argument("--manufactured")
    c.add_argument("--k", type=_ints, default=[0])
    c.add_argument("--method", choices=("fcc", "collocation"), default="fcc")
    c.add_argument("--out", default=".")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "solve":
            rep = cmd_solve(args.file, args.method, args.n_eval, args.deriv, args.out)
            print(f"solved: bc residual {rep.residuals['bc']:.3e}, pde residual {rep.residuals['pde']:.3e}")
        elif args.command == "section2":
            cmd_section2(args.alpha, args.M, args.k, args.out)
            print(f"wrote {Path(args.out) / 'section2.csv'}")
        else:
            rep = cmd_convergence(args.file, args.M, args.reference, args.manufactured, args.k, args.method, args.out)
            for cur in rep.error_curves:
                print(f"k={cur['k']}: monotone_decreasing={str(cur['monotone']).lower()}")
    except _Fail as exc:
        print(f"fsm: error: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
