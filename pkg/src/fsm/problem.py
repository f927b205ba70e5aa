"""Problem description: domain, operator, boundary conditions, forcing.

Problems are plain frozen dataclasses.  :func:`parse_problem` reads the JSON
problem format and :func:`validate` checks every structural invariant,
returning a :class:`ValidatedProblem` that the solvers accept.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .expr import ExpressionError, Sampler

DOMAIN_KINDS = ("interval_symmetric", "interval", "rect_symmetric", "rect")
FLAVORS = ("full", "half_cosine", "half_sine", "full_2d", "sine_sine")
FLAVOR_DOMAIN = {
    "full": "interval_symmetric",
    "half_cosine": "interval",
    "half_sine": "interval",
    "full_2d": "rect_symmetric",
    "sine_sine": "rect",
}
SIDES_1D = ("x1+", "x1-")
SIDES_2D = ("x1+", "x1-", "x2+", "x2-")


class ProblemError(ValueError):
    """Invalid problem; ``path`` is a JSON-pointer-like field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class Domain:
    kind: str
    a: float
    b: float | None = None

    @property
    def dim(self) -> int:
        return 2 if self.kind.startswith("rect") else 1

    @property
    def symmetric(self) -> bool:
        return self.kind.endswith("symmetric")

    @property
    def x1_range(self) -> tuple[float, float]:
        return (-self.a, self.a) if self.symmetric else (0.0, self.a)

    @property
    def x2_range(self) -> tuple[float, float]:
        if self.b is None:
            raise AttributeError("one-dimensional domain has no x2 range")
        return (-self.b, self.b) if self.symmetric else (0.0, self.b)

    def side_coordinate(self, side: str) -> float:
        lo, hi = self.x1_range if side.startswith("x1") else self.x2_range
        return hi if side.endswith("+") else lo


@dataclass(frozen=True)
class Operator1D:
    """``sum_k coeffs[k] d^k/dx^k``."""

    coeffs: tuple[float, ...]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def r(self) -> int:
        return self.order // 2


@dataclass(frozen=True)
class Operator2D:
    """``sum a[k1,k2] d^(k1+k2)/dx1^k1 dx2^k2``; absent entries are zero."""

    order: int
    coeffs: Mapping[tuple[int, int], float]

    @property
    def r(self) -> int:
        return self.order // 2

    def get(self, k1: int, k2: int) -> float:
        return self.coeffs.get((k1, k2), 0.0)

    def transpose(self) -> "Operator2D":
        return Operator2D(self.order, {(k2, k1): v for (k1, k2), v in self.coeffs.items()})

    def x1_slice(self) -> Operator1D:
        return Operator1D(tuple(self.get(k, 0) for k in range(self.order + 1)))


@dataclass(frozen=True)
class BoundaryOperator:
    """Derivative combination; keys are ``(k1,)`` in 1D and ``(k1, k2)`` in 2D."""

    coeffs: Mapping[tuple[int, ...], float]

    def max_order(self) -> int:
        return max(sum(k) for k in self.coeffs)


@dataclass(frozen=True)
class BoundaryCondition:
    op: BoundaryOperator
    g: Sampler


@dataclass(frozen=True)
class ForcingSpec:
    f: Sampler
    # coarse polynomial part: 1D array (1D) or 2D array indexed [j1, j2]
    fs: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, ForcingSpec) or self.f != other.f:
            return False
        if self.fs is None or other.fs is None:
            return self.fs is None and other.fs is None
        return self.fs.shape == other.fs.shape and np.array_equal(self.fs, other.fs)

    __hash__ = None


@dataclass(frozen=True)
class ProblemSpec:
    domain: Domain
    operator: Operator1D | Operator2D
    bcs: Mapping[str, tuple[BoundaryCondition, ...]]
    forcing: ForcingSpec
    flavor: str
    M: int
    N: int | None = None


@dataclass(frozen=True)
class ValidatedProblem:
    spec: ProblemSpec
    r: int = field(default=0)

    @property
    def dim(self) -> int:
        return self.spec.domain.dim

    def __getattr__(self, name):
        # delegate field access (domain, operator, ...) to the spec
        if name in ("spec", "r"):
            raise AttributeError(name)
        return getattr(self.spec, name)


def validate(spec: ProblemSpec | ValidatedProblem) -> ValidatedProblem:
    """Check every problem invariant and return the validated problem.

    Raises
    ------
    ProblemError
        On the first violated invariant, tagged with its field path.
    """
    if isinstance(spec, ValidatedProblem):
        spec = spec.spec
    dom = spec.domain
    if dom.kind not in DOMAIN_KINDS:
        raise ProblemError("/domain/kind", f"unknown domain kind {dom.kind!r}")
    if not dom.a > 0:
        raise ProblemError("/domain/a", "length must be positive")
    if dom.dim == 2 and not (dom.b is not None and dom.b > 0):
        raise ProblemError("/domain/b", "length must be positive")
    if spec.flavor not in FLAVORS:
        raise ProblemError("/flavor", f"unknown flavor {spec.flavor!r}")
    if FLAVOR_DOMAIN[spec.flavor] != dom.kind:
        raise ProblemError("/flavor", f"flavor {spec.flavor} incompatible with domain {dom.kind}")
    if spec.M < 1:
        raise ProblemError("/truncation/M", "must be >= 1")
    if dom.dim == 2 and (spec.N is None or spec.N < 1):
        raise ProblemError("/truncation/N", "must be >= 1")

    op = spec.operator
    if dom.dim == 1:
        if not isinstance(op, Operator1D):
            raise ProblemError("/operator", "one-dimensional domain needs a 1D operator")
        if op.order < 2 or op.order % 2:
            raise ProblemError("/operator/order", "order must be a positive even number 2r")
        if op.coeffs[-1] == 0:
            raise ProblemError("/operator/coeffs", "leading coefficient zero")
        if spec.flavor.startswith("half") and any(c != 0 for c in op.coeffs[1::2]):
            raise ProblemError("/operator/coeffs", "parity violation: half-range flavors admit only even derivatives")
    else:
        if not isinstance(op, Operator2D):
            raise ProblemError("/operator", "two-dimensional domain needs a 2D operator")
        if op.order < 2 or op.order % 2:
            raise ProblemError("/operator/order", "order must be a positive even number 2r")
        for (k1, k2) in op.coeffs:
            if k1 < 0 or k2 < 0 or k1 + k2 > op.order:
                raise ProblemError("/operator/coeffs", f"term ({k1},{k2}) exceeds order {op.order}")
        if op.get(op.order, 0) == 0 or op.get(0, op.order) == 0:
            raise ProblemError("/operator/coeffs", "leading coefficient zero (a[2r,0] and a[0,2r] must be nonzero)")
        if spec.flavor == "sine_sine" and any(
            v != 0 and (k1 % 2 or k2 % 2) for (k1, k2), v in op.coeffs.items()
        ):
            raise ProblemError("/operator/coeffs", "parity violation: sine_sine flavor admits only even derivatives in both directions")

    r = op.order // 2
    sides = SIDES_1D if dom.dim == 1 else SIDES_2D
    for side in sides:
        conds = spec.bcs.get(side)
        path = f"/bcs/{side}"
        if conds is None:
            raise ProblemError(path, "missing boundary side")
        if len(conds) != r:
            raise ProblemError(path, f"expected {r} boundary conditions, got {len(conds)}")
        for i, bc in enumerate(conds):
            _check_bc(bc.op, side, r, dom.dim, spec.flavor, f"{path}/{i}")
    extra = set(spec.bcs) - set(sides)
    if extra:
        raise ProblemError("/bcs", f"unknown sides {sorted(extra)}")
    fs = spec.forcing.fs
    if fs is not None:
        fs = np.asarray(fs)
        if fs.ndim != dom.dim or not np.all(np.isfinite(fs)):
            raise ProblemError("/forcing/fs_poly", "must be a finite polynomial in the domain variables")
    return ValidatedProblem(spec, r)


def _check_bc(op: BoundaryOperator, side: str, r: int, dim: int, flavor: str, path: str) -> None:
    if not op.coeffs or all(v == 0 for v in op.coeffs.values()):
        raise ProblemError(path, "empty boundary operator")
    normal = 0 if side.startswith("x1") else 1
    classes = set()
    for k, v in op.coeffs.items():
        if len(k) != dim or min(k) < 0:
            raise ProblemError(path, f"bad derivative index {k}")
        if v == 0:
            continue
        if k[normal] > 2 * r - 1 or sum(k) > 2 * r - 1:
            raise ProblemError(path, "derivative order exceeds 2r-1")
        classes.add(tuple(x % 2 for x in k))
    if flavor.startswith("half") or flavor == "sine_sine":
        if len(classes) > 1:
            raise ProblemError(path, "parity violation: boundary operator mixes derivative parities")


# --------------------------------------------------------------------------- JSON


def _require(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ProblemError(f"{path}/{key}", "missing required key")
    return obj[key]


def _number(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemError(path, "expected a number")
    return float(v)


def _index(k, path, dim) -> tuple[int, ...]:
    if not isinstance(k, list) or len(k) != dim or not all(isinstance(i, int) and i >= 0 for i in k):
        raise ProblemError(path, f"expected a list of {dim} non-negative integers")
    return tuple(k)


def _sampler(v, path) -> Sampler:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return Sampler.constant(float(v))
    if isinstance(v, str):
        try:
            return Sampler.parse(v)
        except ExpressionError as exc:
            raise ProblemError(path, str(exc)) from exc
    raise ProblemError(path, "expected a number or an expression string")


def parse_problem(text: str) -> ProblemSpec:
    """Parse a JSON problem document into a :class:`ProblemSpec`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError("", f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemError("", "top level must be an object")

    d = _require(doc, "domain", "")
    kind = _require(d, "kind", "/domain")
    if kind not in DOMAIN_KINDS:
        raise ProblemError("/domain/kind", f"unknown domain kind {kind!r}")
    dim = 2 if kind.startswith("rect") else 1
    domain = Domain(kind, _number(_require(d, "a", "/domain"), "/domain/a"),
                    _number(_require(d, "b", "/domain"), "/domain/b") if dim == 2 else None)

    o = _require(doc, "operator", "")
    order = _require(o, "order", "/operator")
    if not isinstance(order, int):
        raise ProblemError("/operator/order", "expected an integer")
    terms = _require(o, "coeffs", "/operator")
    if not isinstance(terms, list):
        raise ProblemError("/operator/coeffs", "expected a list")
    coeffs: dict[tuple[int, ...], float] = {}
    for i, t in enumerate(terms):
        k = _index(_require(t, "k", f"/operator/coeffs/{i}"), f"/operator/coeffs/{i}/k", dim)
        coeffs[k] = coeffs.get(k, 0.0) + _number(_require(t, "a", f"/operator/coeffs/{i}"), f"/operator/coeffs/{i}/a")
    if dim == 1:
        dense = [0.0] * (order + 1)
        for (k,), v in coeffs.items():
            if k > order:
                raise ProblemError("/operator/coeffs", f"term {k} exceeds order {order}")
            dense[k] = v
        operator: Operator1D | Operator2D = Operator1D(tuple(dense))
    else:
        operator = Operator2D(order, coeffs)

    flavor = _require(doc, "flavor", "")
    tr = _require(doc, "truncation", "")
    M = _require(tr, "M", "/truncation")
    N = tr.get("N") if isinstance(tr, dict) else None
    if not isinstance(M, int) or (N is not None and not isinstance(N, int)):
        raise ProblemError("/truncation", "truncation orders must be integers")

    fo = _require(doc, "forcing", "")
    f = _sampler(_require(fo, "f", "/forcing"), "/forcing/f")
    fs = None
    if "fs_poly" in fo:
        entries = fo["fs_poly"]
        if not isinstance(entries, list):
            raise ProblemError("/forcing/fs_poly", "expected a list")
        idx = [_index(_require(e, "k", f"/forcing/fs_poly/{i}"), f"/forcing/fs_poly/{i}/k", dim)
               for i, e in enumerate(entries)]
        deg = max((max(k) for k in idx), default=0)
        fs = np.zeros((deg + 1,) * dim)
        for i, (k, e) in enumerate(zip(idx, entries)):
            fs[k] += _number(_require(e, "c", f"/forcing/fs_poly/{i}"), f"/forcing/fs_poly/{i}/c")

    bdoc = _require(doc, "bcs", "")
    if not isinstance(bdoc, dict):
        raise ProblemError("/bcs", "expected an object keyed by side")
    bcs = {}
    for side, conds in bdoc.items():
        if not isinstance(conds, list):
            raise ProblemError(f"/bcs/{side}", "expected a list")
        parsed = []
        for i, c in enumerate(conds):
            p = f"/bcs/{side}/{i}"
            terms = _require(c, "coeffs", p)
            bco = {}
            for j, t in enumerate(terms):
                k = _index(_require(t, "k", f"{p}/coeffs/{j}"), f"{p}/coeffs/{j}/k", dim)
                bco[k] = bco.get(k, 0.0) + _number(_require(t, "b", f"{p}/coeffs/{j}"), f"{p}/coeffs/{j}/b")
            parsed.append(BoundaryCondition(BoundaryOperator(bco), _sampler(_require(c, "g", p), f"{p}/g")))
        bcs[side] = tuple(parsed)

    return ProblemSpec(domain, operator, bcs, ForcingSpec(f, fs), flavor, M, N)


def load_problem(path) -> ProblemSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def serialize(spec: ProblemSpec | ValidatedProblem) -> str:
    """Inverse of :func:`parse_problem` (up to float text round trip)."""
    if isinstance(spec, ValidatedProblem):
        spec = spec.spec
    dom = spec.domain
    d = {"kind": dom.kind, "a": dom.a}
    if dom.b is not None:
        d["b"] = dom.b
    op = spec.operator
    if isinstance(op, Operator1D):
        terms = [{"k": [k], "a": v} for k, v in enumerate(op.coeffs) if v != 0]
    else:
        terms = [{"k": list(k), "a": v} for k, v in sorted(op.coeffs.items())]
    forcing = {"f": spec.forcing.f.text}
    if spec.forcing.fs is not None:
        fs = np.asarray(spec.forcing.fs)
        forcing["fs_poly"] = [{"k": list(map(int, k)), "c": float(fs[k])}
                              for k in np.ndindex(fs.shape) if fs[k] != 0]
    bcs = {
        side: [{"coeffs": [{"k": list(k), "b": v} for k, v in sorted(bc.op.coeffs.items())],
                "g": bc.g.text} for bc in conds]
        for side, conds in spec.bcs.items()
    }
    tr = {"M": spec.M}
    if spec.N is not None:
        tr["N"] = spec.N
    doc = {"domain": d, "operator": {"order": op.order, "coeffs": terms}, "flavor": spec.flavor,
           "truncation": tr, "forcing": forcing, "bcs": bcs}
    return json.dumps(doc, indent=2)


def symbol_1d(op: Operator1D, z: complex) -> complex:
    """Operator symbol ``sum a_k z^k``."""
    return sum(c * z ** k for k, c in enumerate(op.coeffs))


def symbol_2d(op: Operator2D, z1: complex, z2: complex) -> complex:
    """Operator symbol ``sum a_{k1,k2} z1^k1 z2^k2``; broadcasts over arrays."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    out = np.zeros(np.broadcast(z1, z2).shape, dtype=complex)
    for (k1, k2), c in op.coeffs.items():
        out = out + c * z1 ** k1 * z2 ** k2
    return out if out.ndim else complex(out)
