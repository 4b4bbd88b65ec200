"""Truncated 2-jet arithmetic, differential forms, and deterministic quadrature.

Conventions used throughout the package:

* A chart is R^d with a fixed coordinate order; all derivatives are partials
  with respect to these real coordinates.  Complex-valued functions of real
  coordinates are fine: conjugation commutes with the partials.
* A Jet stores value, gradient d1 (shape (d,) + S) and Hessian d2
  (shape (d, d) + S) over a batch shape S.  Arithmetic is the Taylor algebra
  truncated at order 2; mixing orders truncates to the lower one.
* KForm coefficients are indexed by strictly increasing coordinate tuples.
  The wedge follows the shuffle convention without factorial weights:
  (eta ^ tau)(V, W) = eta(V) tau(W) - eta(W) tau(V), so a basis monomial
  dx^I evaluated on vectors is the k x k determinant det(V_a[I_b]).
* Quadrature: Gauss-Legendre in polar-type parameters, uniform (trapezoid)
  grids in periodic angles, fixed node ordering, math.fsum accumulation.
  Results are bit-stable across runs and worker counts.
* Exact jets are the primary derivative engine; central finite differences
  with step h = 1e-5 * max(1, |coord|) are the cross-check oracle only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

Coefficient = object  # complex scalar or callable(tuple[Jet, ...]) -> Jet


class DomainError(ValueError):
    """Evaluation requested outside a field's declared smoothness domain."""


# ---------------------------------------------------------------------------
# jets


@dataclass
class Jet:
    """Truncated Taylor expansion of a scalar quantity over a point batch."""

    dim: int
    value: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None

    @property
    def order(self) -> int:
        if self.d3 is not None:
            return 3
        if self.d2 is not None:
            return 2
        if self.d1 is not None:
            return 1
        return 0

    @staticmethod
    def constant(c, dim: int, order: int, shape=()) -> Jet:
        v = np.broadcast_to(np.asarray(c), shape).astype(np.result_type(c, 0.0))
        d1 = np.zeros((dim,) + shape, dtype=v.dtype) if order >= 1 else None
        d2 = np.zeros((dim, dim) + shape, dtype=v.dtype) if order >= 2 else None
        d3 = np.zeros((dim, dim, dim) + shape, dtype=v.dtype) if order >= 3 else None
        return Jet(dim, v + 0, d1, d2, d3)

    def _lift(self, other) -> Jet:
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.dim, self.order, np.shape(self.value))

    # -- ring operations ----------------------------------------------------

    def __add__(self, other) -> Jet:
        o = self._lift(other)
        k = min(self.order, o.order)
        return Jet(
            self.dim,
            self.value + o.value,
            self.d1 + o.d1 if k >= 1 else None,
            self.d2 + o.d2 if k >= 2 else None,
            self.d3 + o.d3 if k >= 3 else None,
        )

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(
            self.dim,
            -self.value,
            None if self.d1 is None else -self.d1,
            None if self.d2 is None else -self.d2,
            None if self.d3 is None else -self.d3,
        )

    def __sub__(self, other) -> Jet:
        return self + (-self._lift(other))

    def __rsub__(self, other) -> Jet:
        return (-self) + other

    def __mul__(self, other) -> Jet:
        o = self._lift(other)
        k = min(self.order, o.order)
        v = self.value * o.value
        d1 = d2 = d3 = None
        if k >= 1:
            d1 = self.d1 * o.value + self.value * o.d1
        if k >= 2:
            cross = self.d1[:, None] * o.d1[None, :]
            d2 = self.d2 * o.value + cross + np.swapaxes(cross, 0, 1) + self.value * o.d2
        if k >= 3:
            d3 = (
                self.d3 * o.value
                + self.d2[:, :, None] * o.d1[None, None, :]
                + self.d2[:, None, :] * o.d1[None, :, None]
                + self.d2[None, :, :] * o.d1[:, None, None]
                + self.d1[:, None, None] * o.d2[None, :, :]
                + self.d1[None, :, None] * o.d2[:, None, :]
                + self.d1[None, None, :] * o.d2[:, :, None]
                + self.value * o.d3
            )
        return Jet(self.dim, v, d1, d2, d3)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if not isinstance(other, Jet):
            return self * (1.0 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> Jet:
        return self.reciprocal() * other

    def __pow__(self, p) -> Jet:
        if isinstance(p, int):
            if p < 0:
                return (self ** (-p)).reciprocal()
            out = Jet.constant(1.0, self.dim, self.order, np.shape(self.value))
            base = self
            k = p
            while k:
                if k & 1:
                    out = out * base
                base = base * base
                k >>= 1
            return out
        # real exponent: positive real base assumed
        v = self.value
        return self._chain(
            v**p,
            p * v ** (p - 1),
            p * (p - 1) * v ** (p - 2),
            p * (p - 1) * (p - 2) * v ** (p - 3),
        )

    # -- chain rule for smooth unary maps ------------------------------------

    def _chain(self, f0, f1, f2, f3=None) -> Jet:
        d1 = d2 = d3 = None
        if self.order >= 1:
            d1 = f1 * self.d1
        if self.order >= 2:
            outer = self.d1[:, None] * self.d1[None, :]
            d2 = f1 * self.d2 + f2 * outer
        if self.order >= 3:
            if f3 is None:
                raise ValueError("third-order chain data missing")
            u1, u2 = self.d1, self.d2
            triple = u1[:, None, None] * u1[None, :, None] * u1[None, None, :]
            mix = (
                u2[:, :, None] * u1[None, None, :]
                + u2[:, None, :] * u1[None, :, None]
                + u2[None, :, :] * u1[:, None, None]
            )
            d3 = f3 * triple + f2 * mix + f1 * self.d3
        return Jet(self.dim, f0, d1, d2, d3)

    def reciprocal(self) -> Jet:
        v = self.value
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4)

    def sqrt(self) -> Jet:
        return self**0.5

    def exp(self) -> Jet:
        e = np.exp(self.value)
        return self._chain(e, e, e, e)

    def log(self) -> Jet:
        v = self.value
        return self._chain(np.log(v), 1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def sin(self) -> Jet:
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(s, c, -s, -c)

    def cos(self) -> Jet:
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(c, -s, -c, s)

    # -- real-linear maps -----------------------------------------------------

    def _map(self, f) -> Jet:
        return Jet(
            self.dim,
            f(self.value),
            None if self.d1 is None else f(self.d1),
            None if self.d2 is None else f(self.d2),
            None if self.d3 is None else f(self.d3),
        )

    def conj(self) -> Jet:
        return self._map(np.conj)

    def real(self) -> Jet:
        return self._map(lambda a: np.real(a) + 0.0)

    def imag(self) -> Jet:
        return self._map(lambda a: np.imag(a) + 0.0)

    def abs2(self) -> Jet:
        return self * self.conj()


def coordinate_jets(pts: np.ndarray, order: int) -> tuple[Jet, ...]:
    """Seed jets for the chart coordinates at a (d,) point or (d, N) batch."""
    pts = np.asarray(pts, dtype=float)
    d = pts.shape[0]
    shape = pts.shape[1:]
    out = []
    for i in range(d):
        d1 = d2 = d3 = None
        if order >= 1:
            d1 = np.zeros((d,) + shape)
            d1[i] = 1.0
        if order >= 2:
            d2 = np.zeros((d, d) + shape)
        if order >= 3:
            d3 = np.zeros((d, d, d) + shape)
        out.append(Jet(d, pts[i] + 0.0, d1, d2, d3))
    return tuple(out)


def jet_partial(j: Jet, i: int) -> Jet:
    """The partial d/dx_i of a jet, one order lower than its input."""
    if j.d1 is None:
        raise ValueError("jet has no first-order data to differentiate")
    return Jet(
        j.dim,
        j.d1[i],
        None if j.d2 is None else j.d2[i],
        None if j.d3 is None else j.d3[i],
    )


def directional(j: Jet, components: Sequence) -> Jet:
    """Directional derivative sum_i v^i d_i applied to a jet (order drops by 1)."""
    out = None
    for i, c in enumerate(components):
        term = jet_partial(j, i) * c
        out = term if out is None else out + term
    return out


# ---------------------------------------------------------------------------
# points and fields


@dataclass(frozen=True)
class Point:
    """A chart point; coords follow the chart's fixed coordinate order."""

    coords: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class FieldExpr:
    """A closed-form field on a chart, evaluated through jet arithmetic.

    fn receives one Jet per coordinate and returns a Jet (scalar arity) or a
    list of Jets (vector/spinor arity).  domain, if given, maps a (d, N)
    coordinate array to a boolean keep-mask; evaluation at an excluded point
    raises DomainError rather than returning a silent value.
    """

    dim: int
    fn: Callable
    arity: str = "scalar"  # scalar | vector | spinor
    domain: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __call__(self, coords: tuple[Jet, ...]):
        return self.fn(coords)

    def check_domain(self, pts: np.ndarray) -> None:
        if self.domain is None:
            return
        ok = np.asarray(self.domain(np.atleast_2d(pts.reshape(pts.shape[0], -1))))
        if not np.all(ok):
            raise DomainError(f"field {self.name or self.fn} evaluated outside its domain")


def jet_eval(fld: FieldExpr, p: Point | np.ndarray, order: int):
    """Evaluate a field's jet at a point (or (d, N) batch)."""
    pts = p.array() if isinstance(p, Point) else np.asarray(p, dtype=float)
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    fld.check_domain(pts if pts.ndim > 1 else pts[:, None])
    return fld(coordinate_jets(pts, order))


def fd_jet(fld: FieldExpr, p: Point, rel_step: float = 1e-5):
    """Central finite-difference gradient/Hessian oracle for scalar fields."""
    x = p.array()
    d = x.size
    h = rel_step * np.maximum(1.0, np.abs(x))

    def val(q):
        out = jet_eval(fld, Point(tuple(q)), 0)
        return out.value if isinstance(out, Jet) else np.array([j.value for j in out])

    f0 = val(x)
    g = np.zeros((d,) + np.shape(f0), dtype=np.result_type(f0, 1.0))
    H = np.zeros((d, d) + np.shape(f0), dtype=np.result_type(f0, 1.0))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h[i]
        fp, fm = val(x + e), val(x - e)
        g[i] = (fp - fm) / (2 * h[i])
        H[i, i] = (fp - 2 * f0 + fm) / h[i] ** 2
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h[i]
            ej[j] = h[j]
            fpp = val(x + ei + ej)
            fpm = val(x + ei - ej)
            fmp = val(x - ei + ej)
            fmm = val(x - ei - ej)
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * h[i] * h[j])
    return f0, g, H


def lie_bracket(X: FieldExpr, Y: FieldExpr, p: Point) -> np.ndarray:
    """[X, Y]^k = X^j d_j Y^k - Y^j d_j X^k at p."""
    if X.arity != "vector" or Y.arity != "vector":
        raise ValueError("lie_bracket needs vector fields")
    xj = jet_eval(X, p, 1)
    yj = jet_eval(Y, p, 1)
    xv = np.array([j.value for j in xj])
    yv = np.array([j.value for j in yj])
    xd = np.array([j.d1 for j in xj])  # xd[k, j] = d_j X^k
    yd = np.array([j.d1 for j in yj])
    return yd @ xv - xd @ yv


def bracket_components(X: Sequence[Jet], Y: Sequence[Jet]) -> list[Jet]:
    """Jet-level Lie bracket of two component lists (order drops by 1)."""
    out = []
    for k in range(len(X)):
        t = None
        for j in range(len(X)):
            term = jet_partial(Y[k], j) * X[j] - jet_partial(X[k], j) * Y[j]
            t = term if t is None else t + term
        out.append(t)
    return out


# ---------------------------------------------------------------------------
# differential forms


def _normalize_index(idx: Sequence[int]) -> tuple[tuple[int, ...], int]:
    """Sort an index tuple, returning (increasing tuple, permutation sign)."""
    idx = list(idx)
    sign = 1
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    if len(set(idx)) != len(idx):
        return tuple(idx), 0
    return tuple(idx), sign


@dataclass(frozen=True)
class KForm:
    """Differential k-form with closed-form coefficient functions.

    coeffs maps strictly increasing coordinate index tuples to either a
    constant or a callable(coords jets) -> Jet.  seed_order declares how many
    derivative orders the coefficient callables consume internally (solver
    backed coefficients consume one), so evaluation seeds deep enough.
    """

    dim: int
    degree: int
    coeffs: Mapping[tuple[int, ...], Coefficient]
    seed_order: int = 0

    def __add__(self, other: KForm) -> KForm:
        if (self.dim, self.degree) != (other.dim, other.degree):
            raise ValueError("form shape mismatch")
        out: dict[tuple[int, ...], Coefficient] = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            if idx in out:
                a = out[idx]
                out[idx] = _coeff_add(a, c)
            else:
                out[idx] = c
        return KForm(self.dim, self.degree, out, max(self.seed_order, other.seed_order))

    def __neg__(self) -> KForm:
        return self.scale(-1.0)

    def __sub__(self, other: KForm) -> KForm:
        return self + other.scale(-1.0)

    def scale(self, w: Coefficient) -> KForm:
        out = {idx: _coeff_mul(w, c) for idx, c in self.coeffs.items()}
        extra = 0 if not callable(w) else getattr(w, "seed_order", 0)
        return KForm(self.dim, self.degree, out, max(self.seed_order, extra))

    def memoized(self) -> KForm:
        """Copy with every coefficient memoized on the seed-jet identity.

        Wedge trees reference shared sub-coefficients many times per node
        chunk; memoizing keeps each one evaluated once per chunk.
        """
        out = {idx: memoize_coefficient(c) for idx, c in self.coeffs.items()}
        return KForm(self.dim, self.degree, out, self.seed_order)


class _MemoCoeff:
    """Identity-keyed memo around a coefficient callable.

    Slots hold the anchor jet alive so a recycled id cannot alias a dead
    chunk; pure coefficient functions make the cache exact.
    """

    __slots__ = ("fn", "_slots")

    def __init__(self, fn):
        self.fn = fn
        self._slots: list[tuple[object, Jet]] = []

    def __call__(self, coords: tuple[Jet, ...]) -> Jet:
        for anchor, jet in self._slots:
            if anchor is coords[0]:
                return jet
        jet = self.fn(coords)
        self._slots.append((coords[0], jet))
        if len(self._slots) > 4:
            self._slots.pop(0)
        return jet


def memoize_coefficient(c: Coefficient) -> Coefficient:
    if not callable(c) or isinstance(c, _MemoCoeff):
        return c
    return _MemoCoeff(c)


def _coeff_jet(c: Coefficient, coords: tuple[Jet, ...]) -> Jet:
    if callable(c):
        return c(coords)
    return Jet.constant(c, coords[0].dim, coords[0].order, np.shape(coords[0].value))


def _coeff_add(a: Coefficient, b: Coefficient) -> Coefficient:
    if not callable(a) and not callable(b):
        return a + b
    return lambda coords: _coeff_jet(a, coords) + _coeff_jet(b, coords)


def _coeff_mul(a: Coefficient, b: Coefficient) -> Coefficient:
    if not callable(a) and not callable(b):
        return a * b
    return lambda coords: _coeff_jet(a, coords) * _coeff_jet(b, coords)


def form_coeff_values(form: KForm, coords: tuple[Jet, ...]) -> dict[tuple[int, ...], Jet]:
    return {idx: _coeff_jet(c, coords) for idx, c in form.coeffs.items()}


def form_eval(form: KForm, p: Point | np.ndarray, vectors: np.ndarray, order: int | None = None):
    """Evaluate a k-form on k vectors (rows of `vectors`) at a point."""
    vectors = np.asarray(vectors)
    if vectors.shape[0] != form.degree:
        raise ValueError("argument count must match form degree")
    pts = p.array() if isinstance(p, Point) else np.asarray(p, dtype=float)
    coords = coordinate_jets(pts, form.seed_order if order is None else order)
    total = 0.0 + 0.0j
    for idx, c in form.coeffs.items():
        cj = _coeff_jet(c, coords)
        m = vectors[:, list(idx)].T  # rows: index slots, cols: argument vectors
        total = total + cj.value * np.linalg.det(m)
    return complex(np.asarray(total).squeeze()[()])


def wedge(a: KForm, b: KForm) -> KForm:
    """Wedge product in the shuffle (no factorial) convention."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    out: dict[tuple[int, ...], Coefficient] = {}
    for ia, ca in a.coeffs.items():
        for ib, cb in b.coeffs.items():
            merged, sign = _normalize_index(ia + ib)
            if sign == 0:
                continue
            term = _coeff_mul(sign, _coeff_mul(ca, cb))
            out[merged] = _coeff_add(out[merged], term) if merged in out else term
    return KForm(a.dim, a.degree + b.degree, out, max(a.seed_order, b.seed_order))


def wedge_power(a: KForm, k: int) -> KForm:
    out = KForm(a.dim, 0, {(): 1.0})
    for _ in range(k):
        out = wedge(out, a)
    return out


def wedge_eval(a: KForm, b: KForm, p: Point | np.ndarray, vectors: np.ndarray):
    return form_eval(wedge(a, b), p, vectors)


def dform(form: KForm) -> KForm:
    """Exterior derivative as a new KForm; consumes one jet order."""
    terms: dict[tuple[int, ...], list[tuple[int, int, tuple[int, ...]]]] = {}
    for idx in form.coeffs:
        for j in range(form.dim):
            if j in idx:
                continue
            merged, sign = _normalize_index((j,) + idx)
            terms.setdefault(merged, []).append((sign, j, idx))

    def make(contribs):
        def coeff(coords: tuple[Jet, ...]) -> Jet:
            out = None
            for sign, j, idx in contribs:
                cj = _coeff_jet(form.coeffs[idx], coords)
                term = jet_partial(cj, j) * sign
                out = term if out is None else out + term
            return out

        return coeff

    return KForm(form.dim, form.degree + 1, {k: make(v) for k, v in terms.items()}, form.seed_order + 1)


def exterior_derivative(form: KForm, p: Point | np.ndarray, vectors: np.ndarray):
    """(d form)(V_0..V_k) at p, arguments extended as constant fields."""
    return form_eval(dform(form), p, vectors)


def interior_product(components: Sequence[Coefficient], form: KForm) -> KForm:
    """Contraction of a vector field (given by components) into the first slot."""
    out: dict[tuple[int, ...], Coefficient] = {}
    for idx, c in form.coeffs.items():
        for s, i in enumerate(idx):
            rest = idx[:s] + idx[s + 1 :]
            term = _coeff_mul((-1) ** s, _coeff_mul(components[i], c))
            out[rest] = _coeff_add(out[rest], term) if rest in out else term
    return KForm(form.dim, form.degree - 1, out, form.seed_order)


# ---------------------------------------------------------------------------
# deterministic summation and 1-d rules


def stable_sum(values: np.ndarray) -> complex:
    """Fixed-order exact-rounding sum (fsum on real and imaginary parts)."""
    v = np.asarray(values)
    if np.iscomplexobj(v):
        return complex(math.fsum(v.real.ravel().tolist()), math.fsum(v.imag.ravel().tolist()))
    return complex(math.fsum(v.ravel().tolist()))


def gauss_legendre(npts: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * x, half * w


def periodic_grid(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(npts) * (2 * math.pi / npts)
    return x, np.full(npts, 2 * math.pi / npts)


def product_nodes(rules: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Tensor grid: params (k, N) and combined weights (N,), C-order nodes."""
    axes = [r[0] for r in rules]
    wts = [r[1] for r in rules]
    grids = np.meshgrid(*axes, indexing="ij")
    params = np.stack([g.ravel() for g in grids])
    wgrids = np.meshgrid(*wts, indexing="ij")
    weights = np.ones(params.shape[1])
    for w in wgrids:
        weights = weights * w.ravel()
    return params, weights


# ---------------------------------------------------------------------------
# parametrized surfaces and regions


@dataclass(frozen=True)
class ParamSurface:
    """A 2n-surface in a (2n+1)-chart, chart map written in jet arithmetic."""

    dim: int
    nparams: int
    chart: Callable[[tuple[Jet, ...]], Sequence[Jet]]
    nodes: Callable[[int, int], tuple[np.ndarray, np.ndarray]]
    orient: Callable[[np.ndarray], np.ndarray]
    name: str = ""


@dataclass(frozen=True)
class ParamRegion:
    """A full-dimensional region, chart map written in jet arithmetic."""

    dim: int
    chart: Callable[[tuple[Jet, ...]], Sequence[Jet]]
    nodes: Callable[[int, int, int], tuple[np.ndarray, np.ndarray]]
    measure_scale: float = 1.0
    name: str = ""


def surface_geometry(surface: ParamSurface, n_polar: int, n_angle: int):
    """Nodes, ambient points, tangent frames, weights, orientation sign.

    pts: (dim, N); tangents: (nparams, dim, N).  The orientation probe maps
    pts to an (N, dim) outward/transverse field; the surface sign makes
    (probe, tangent basis) positively oriented at every node, and a mixed
    sign across nodes is an error.
    """
    params, w = surface.nodes(n_polar, n_angle)
    pj = coordinate_jets(params, 1)
    cj = surface.chart(pj)
    pts = np.stack([np.real(j.value) + 0.0 for j in cj])
    tangents = np.stack([np.stack([np.real(j.d1[a]) + 0.0 for j in cj]) for a in range(surface.nparams)])
    probe = np.asarray(surface.orient(pts), dtype=float)  # (N, dim)
    rows = np.concatenate([probe[:, None, :], np.moveaxis(tangents, 2, 0)], axis=1)
    dets = np.linalg.det(rows)
    if np.min(dets) * np.max(dets) <= 0:
        raise ValueError(f"surface {surface.name}: inconsistent orientation across nodes")
    sign = 1.0 if dets[0] > 0 else -1.0
    return pts, tangents, w, sign


def surface_integral(
    form: KForm,
    surface: ParamSurface,
    n_polar: int = 64,
    n_angle: int = 16,
    chunk: int = 16384,
) -> complex:
    """Integral of a 2n-form over an oriented parametrized surface.

    Orientation: the surface is oriented so that (orientation probe field,
    tangent basis) is positively oriented in the ambient chart.  Nodes are
    evaluated in fixed-size chunks; the node order, and hence the summation
    order, does not depend on the chunk size.
    """
    if form.degree != surface.nparams:
        raise ValueError("form degree must equal surface dimension")
    pts, tangents, w, sign = surface_geometry(surface, n_polar, n_angle)
    total = pts.shape[1]
    integrand = np.zeros(total, dtype=complex)
    for lo in range(0, total, chunk):
        hi = min(total, lo + chunk)
        coords = coordinate_jets(pts[:, lo:hi], form.seed_order)
        for idx, c in form.coeffs.items():
            cj = _coeff_jet(c, coords)
            m = tangents[:, list(idx), lo:hi]  # (k args, k slots, chunk)
            mats = np.moveaxis(m, 2, 0)  # (chunk, args, slots)
            integrand[lo:hi] += cj.value * np.linalg.det(np.swapaxes(mats, 1, 2))
    return sign * stable_sum(w * integrand)


def region_integral(
    integrand: Callable[[tuple[Jet, ...]], Jet],
    region: ParamRegion,
    order: int = 0,
    n_radial: int = 48,
    n_polar: int = 48,
    n_angle: int = 8,
    chunk: int = 16384,
) -> complex:
    """Integral of a scalar field over a region, against its measure.

    The integrand is evaluated with fresh ambient seeds of the given order at
    the mapped nodes, so it may take ambient derivatives internally.  Chunked
    evaluation keeps memory flat without changing the summation order.
    """
    params, w = region.nodes(n_radial, n_polar, n_angle)
    pj = coordinate_jets(params, 1)
    cj = region.chart(pj)
    pts = np.stack([np.real(j.value) + 0.0 for j in cj])
    jac = np.stack([np.stack([np.real(j.d1[a]) + 0.0 for j in cj]) for a in range(region.dim)])
    dets = np.linalg.det(np.moveaxis(jac, 2, 0))
    if np.min(dets) * np.max(dets) <= 0:
        raise ValueError(f"region {region.name}: Jacobian changes sign")
    total = pts.shape[1]
    vals = np.zeros(total, dtype=complex)
    for lo in range(0, total, chunk):
        hi = min(total, lo + chunk)
        f = integrand(coordinate_jets(pts[:, lo:hi], order))
        vals[lo:hi] = f.value if isinstance(f, Jet) else f
    return region.measure_scale * stable_sum(w * vals * np.abs(dets))


# ---------------------------------------------------------------------------
# odd-sphere angular charts (unit sphere of C^n)


def sphere_components(angles: Sequence[Jet | float], n: int) -> list:
    """Unit vector of C^n from polar angles [eta_1..eta_{n-1}] + phases [a_1..a_n].

    phi^n = sin(eta_{n-1}) e^{i a_n}, descending through cos factors; for
    n = 1 the single component is e^{i a_1}.  Sum |phi^k|^2 = 1 identically.
    """

    def cos(x):
        return x.cos() if isinstance(x, Jet) else math.cos(x)

    def sin(x):
        return x.sin() if isinstance(x, Jet) else math.sin(x)

    def phase(x):
        return cos(x) + 1j * sin(x)

    etas = list(angles[: n - 1])
    alphas = list(angles[n - 1 :])
    comps = [phase(alphas[0])]
    for k in range(2, n + 1):
        eta = etas[k - 2]
        comps = [c * cos(eta) for c in comps]
        comps.append(phase(alphas[k - 1]) * sin(eta))
    return comps


def sphere_angle_rules(n: int, n_polar: int, n_angle: int) -> list[tuple[np.ndarray, np.ndarray]]:
    rules = [gauss_legendre(n_polar, 0.0, math.pi / 2) for _ in range(n - 1)]
    rules += [periodic_grid(n_angle) for _ in range(n)]
    return rules
