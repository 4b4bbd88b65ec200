"""Flat model group: chart, frame, measures, extremals, Green flux.

Conventions
-----------
* Chart coordinates are ordered (x_1..x_n, y_1..y_n, t); z^b = x_b + i y_b.
* Group law: (x, y, t) * (x', y', t') =
  (x + x', y + y', t + t' + 2<y, x'> - 2<x, y'>); dilations act by
  (z, t) -> (a z, a^2 t).
* Contact form: theta = dt + 2 sum_b (x_b dy_b - y_b dx_b), so
  d theta = 4 sum_b dx_b ^ dy_b and
  theta ^ (d theta)^n = 4^n n! s_n dx_1..dx_n ^ dy_1..dy_n ^ dt with
  s_n = (-1)^{n(n-1)/2} the interleaving sign of the coordinate order.
* Orthonormal-in-Levi frame (J pairs (a, n + a)):
      e_b     = (1/sqrt2) (d/dx_b + 2 y_b d/dt),
      e_{n+b} = (1/sqrt2) (d/dy_b - 2 x_b d/dt),    T = d/dt,
  so [e_b, e_{n+c}] = -2 delta_bc T and d theta(e_b, e_{n+c}) = 2 delta_bc.
* Homogeneous norm rho^4 = |z|^4 + t^2; spheres {rho = L} are charted by
  t = L^2 sin(s), z = L sqrt(cos(s)) phi with phi on the unit sphere of
  C^n; surfaces are oriented by the probe s_n * (Euler dilation field),
  which matches the theta ^ (d theta)^n boundary orientation.
* The positive sublaplacian is -(1/2) sum_a e_a e_a acting on scalars.
* Volume conventions: "theta" means theta ^ (d theta)^n (Lebesgue factor
  4^n n!), "normalized" divides that by 2^n n!.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .fieldcalc import (
    FieldExpr,
    Jet,
    KForm,
    ParamRegion,
    ParamSurface,
    Point,
    coordinate_jets,
    directional,
    gauss_legendre,
    interior_product,
    product_nodes,
    sphere_angle_rules,
    sphere_components,
    surface_integral,
    wedge,
    wedge_power,
)

__all__ = [
    "chart_dim",
    "b_const",
    "orientation_sign",
    "group_mul",
    "group_inverse",
    "dilation",
    "frame_vector",
    "frame_component_jets",
    "contact_form",
    "levi_two_form",
    "volume_form",
    "lebesgue_factor",
    "rho_field",
    "green_kernel",
    "sublaplacian",
    "jl_extremal",
    "yamabe_ratio",
    "heis_sphere",
    "heis_ball",
    "flux_form",
    "green_constant",
]

SQRT2 = math.sqrt(2.0)


def chart_dim(n: int) -> int:
    return 2 * n + 1


def b_const(n: int) -> float:
    """Conformal coupling constant 2 + 2/n of the scalar operator."""
    return 2.0 + 2.0 / n


def orientation_sign(n: int) -> float:
    """Sign s_n relating dx^dy^dt order to the contact orientation."""
    return -1.0 if (n * (n - 1) // 2) % 2 else 1.0


def lebesgue_factor(n: int, measure: str = "theta") -> float:
    """Scalar converting Lebesgue dx dy dt to the requested volume form."""
    if measure == "theta":
        return float(4**n * math.factorial(n))
    if measure == "normalized":
        return float(2**n)
    if measure == "lebesgue":
        return 1.0
    raise ValueError("measure must be 'theta', 'normalized' or 'lebesgue'")


# ---------------------------------------------------------------------------
# group structure


def _split(p: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    d = len(p)
    if d % 2 == 0:
        raise ValueError("chart dimension must be odd")
    n = (d - 1) // 2
    return p[:n], p[n : 2 * n], p[2 * n]


def group_mul(p: Point, q: Point) -> Point:
    """Group product p * q in chart coordinates."""
    pa, qa = p.array(), q.array()
    if pa.size != qa.size:
        raise ValueError("points live on different groups")
    x, y, t = _split(pa)
    xq, yq, tq = _split(qa)
    tt = t + tq + 2.0 * float(y @ xq) - 2.0 * float(x @ yq)
    return Point(tuple(np.concatenate([x + xq, y + yq, [tt]])))


def group_inverse(p: Point) -> Point:
    return Point(tuple(-p.array()))


def dilation(p: Point, a: float) -> Point:
    """Anisotropic dilation (z, t) -> (a z, a^2 t)."""
    x, y, t = _split(p.array())
    return Point(tuple(np.concatenate([a * x, a * y, [a * a * t]])))


# ---------------------------------------------------------------------------
# frame and forms


def _frame_columns(n: int, a) -> list[tuple[int, Callable | float]]:
    """Sparse component list [(slot, coeff)] of a frame field.

    Coefficients are floats or slot-reading callables(coords) -> Jet.
    """
    d = chart_dim(n)
    if a == "T":
        return [(d - 1, 1.0)]
    if not 1 <= a <= 2 * n:
        raise ValueError(f"frame index {a} outside 1..{2 * n} or 'T'")
    if a <= n:
        b = a - 1
        return [(b, 1.0 / SQRT2), (d - 1, lambda c, k=n + b: c[k] * SQRT2)]
    b = a - n - 1
    return [(n + b, 1.0 / SQRT2), (d - 1, lambda c, k=b: c[k] * (-SQRT2))]


def frame_component_jets(n: int, a, coords: tuple[Jet, ...]) -> list:
    """Dense component list of a frame field as jets over the chart."""
    d = chart_dim(n)
    comps: list = [0.0] * d
    for slot, c in _frame_columns(n, a):
        comps[slot] = c(coords) if callable(c) else c
    return comps


def frame_vector(n: int, a) -> FieldExpr:
    """Left-invariant frame field e_a (a in 1..2n) or the Reeb field 'T'."""
    cols = _frame_columns(n, a)
    d = chart_dim(n)

    def fn(coords: tuple[Jet, ...]):
        dim, order = coords[0].dim, coords[0].order
        shape = np.shape(coords[0].value)
        comps = [Jet.constant(0.0, dim, order, shape) for _ in range(d)]
        for slot, c in cols:
            comps[slot] = c(coords) if callable(c) else Jet.constant(c, dim, order, shape)
        return comps

    return FieldExpr(d, fn, arity="vector", name=f"frame[{a}]")


def contact_form(n: int) -> KForm:
    """theta = dt + 2 sum_b (x_b dy_b - y_b dx_b)."""
    d = chart_dim(n)
    coeffs: dict[tuple[int, ...], object] = {(d - 1,): 1.0}
    for b in range(n):
        coeffs[(n + b,)] = lambda c, k=b: c[k] * 2.0
        coeffs[(b,)] = lambda c, k=n + b: c[k] * (-2.0)
    return KForm(d, 1, coeffs)


def levi_two_form(n: int) -> KForm:
    """d theta = 4 sum_b dx_b ^ dy_b (closed form of the derivative)."""
    d = chart_dim(n)
    return KForm(d, 2, {(b, n + b): 4.0 for b in range(n)})


def volume_form(n: int) -> KForm:
    """theta ^ (d theta)^n, assembled by the wedge machinery."""
    return wedge(contact_form(n), wedge_power(levi_two_form(n), n))


# ---------------------------------------------------------------------------
# scalar building blocks


def _abs_z2(coords: tuple[Jet, ...], n: int) -> Jet:
    out = coords[0] * coords[0]
    for k in range(1, 2 * n):
        out = out + coords[k] * coords[k]
    return out


def _rho4(coords: tuple[Jet, ...], n: int) -> Jet:
    r2 = _abs_z2(coords, n)
    t = coords[2 * n]
    return r2 * r2 + t * t


def _away_from_origin(pts: np.ndarray) -> np.ndarray:
    return np.sum(pts * pts, axis=0) > 0.0


def rho_field(n: int) -> FieldExpr:
    """Homogeneous norm rho = (|z|^4 + t^2)^{1/4}, excluded at the origin."""
    d = chart_dim(n)
    return FieldExpr(
        d,
        lambda c: _rho4(c, n) ** 0.25,
        domain=_away_from_origin,
        name="rho",
    )


def green_kernel(n: int) -> FieldExpr:
    """rho^{-2n}, the decaying homogeneous solution of the sublaplacian."""
    d = chart_dim(n)
    return FieldExpr(
        d,
        lambda c: _rho4(c, n) ** (-n / 2.0),
        domain=_away_from_origin,
        name="green-kernel",
    )


def sublaplacian(u: FieldExpr) -> FieldExpr:
    """Positive sublaplacian -(1/2) sum_a e_a e_a u as a new scalar field.

    Consumes two jet orders: evaluate with order >= 2 seeds.
    """
    d = u.dim
    if d % 2 == 0:
        raise ValueError("chart dimension must be odd")
    n = (d - 1) // 2

    def fn(coords: tuple[Jet, ...]):
        uj = u(coords)
        total = None
        for a in range(1, 2 * n + 1):
            comps = frame_component_jets(n, a, coords)
            term = directional(directional(uj, comps), comps)
            total = term if total is None else total + term
        return total * (-0.5)

    return FieldExpr(d, fn, domain=u.domain, name=f"sublap({u.name})")


def jl_extremal(n: int, beta: float) -> FieldExpr:
    """Extremal bubble u = beta^n (t^2 + (|z|^2 + beta^2)^2)^{-n/2}."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = chart_dim(n)

    def fn(coords: tuple[Jet, ...]):
        r2 = _abs_z2(coords, n)
        t = coords[2 * n]
        shift = r2 + beta * beta
        q = t * t + shift * shift
        return q ** (-n / 2.0) * beta**n

    return FieldExpr(d, fn, name=f"extremal[{beta}]")


def yamabe_ratio(params, points) -> dict[str, float]:
    """Scalar-curvature ratio b_n (sublap u) / u^{1 + 2/n} for the extremal.

    params carries n and beta; points is a (d, N) array or a sequence of
    Point.  Returns the sample mean and standard deviation; a vanishing
    spread certifies the extremal solves the constant-curvature equation.
    """
    n, beta = int(params["n"]), float(params["beta"])
    u = jl_extremal(n, beta)
    lap = sublaplacian(u)
    if isinstance(points, np.ndarray):
        pts = points
    else:
        pts = np.stack([p.array() for p in points], axis=1)
    coords = coordinate_jets(pts, 2)
    uval = u(coords).value
    lval = lap(coords).value
    ratio = b_const(n) * np.real(lval) / np.real(uval) ** (1.0 + 2.0 / n)
    return {"mean": float(np.mean(ratio)), "stdev": float(np.std(ratio))}


# ---------------------------------------------------------------------------
# spheres, balls, flux


def _euler_probe(n: int) -> Callable[[np.ndarray], np.ndarray]:
    weights = np.array([1.0] * (2 * n) + [2.0]) * orientation_sign(n)

    def probe(pts: np.ndarray) -> np.ndarray:
        return (pts * weights[:, None]).T

    return probe


def _embed(n: int, radial: Jet, polar: Jet, angles: Sequence[Jet]) -> list:
    """Ambient jets (x, y, t) from rho = radial, t = rho^2 sin(polar)."""
    scale = radial * polar.cos().sqrt()
    comps = sphere_components(angles, n)
    out_x, out_y = [], []
    for c in comps:
        zc = scale * c
        out_x.append(zc.real())
        out_y.append(zc.imag())
    t = radial * radial * polar.sin()
    return out_x + out_y + [t]


def heis_sphere(n: int, radius: float) -> ParamSurface:
    """The sphere {rho = radius}, oriented by the outward dilation probe."""
    if radius <= 0:
        raise ValueError("radius must be positive")

    def chart(pj: tuple[Jet, ...]):
        polar, angles = pj[0], pj[1:]
        radial = Jet.constant(radius, polar.dim, polar.order, np.shape(polar.value))
        return _embed(n, radial, polar, angles)

    def nodes(n_polar: int, n_angle: int):
        rules = [gauss_legendre(n_polar, -math.pi / 2, math.pi / 2)]
        rules += sphere_angle_rules(n, n_polar, n_angle)
        return product_nodes(rules)

    return ParamSurface(
        dim=chart_dim(n),
        nparams=2 * n,
        chart=chart,
        nodes=nodes,
        orient=_euler_probe(n),
        name=f"heis-sphere[{n},{radius}]",
    )


def heis_ball(n: int, radius: float, inner: float = 0.0, measure: str = "theta") -> ParamRegion:
    """The shell {inner <= rho <= radius} carrying the requested volume."""
    if not 0.0 <= inner < radius:
        raise ValueError("need 0 <= inner < radius")

    def chart(pj: tuple[Jet, ...]):
        lam, polar, angles = pj[0], pj[1], pj[2:]
        return _embed(n, lam, polar, angles)

    def nodes(n_radial: int, n_polar: int, n_angle: int):
        rules = [gauss_legendre(n_radial, inner, radius)]
        rules += [gauss_legendre(n_polar, -math.pi / 2, math.pi / 2)]
        rules += sphere_angle_rules(n, n_polar, n_angle)
        return product_nodes(rules)

    return ParamRegion(
        dim=chart_dim(n),
        chart=chart,
        nodes=nodes,
        measure_scale=lebesgue_factor(n, measure),
        name=f"heis-ball[{n},{inner},{radius}]",
    )


def flux_form(n: int, u: FieldExpr) -> KForm:
    """sum_a (e_a u) (e_a -| theta ^ (d theta)^n), the gradient flux 2n-form."""
    vol = volume_form(n)
    total: KForm | None = None
    for a in range(1, 2 * n + 1):
        cols = _frame_columns(n, a)
        comps: list = [0.0] * chart_dim(n)
        for slot, c in cols:
            comps[slot] = c

        def deriv(coords: tuple[Jet, ...], a=a) -> Jet:
            return directional(u(coords), frame_component_jets(n, a, coords))

        term = interior_product(comps, vol).scale(deriv)
        total = term if total is None else total + term
    assert total is not None
    return KForm(total.dim, total.degree, total.coeffs, seed_order=1)


def green_constant(n: int, radii: Sequence[float], n_polar: int = 48, n_angle: int = 8) -> dict:
    """Normalization of the decaying kernel from the boundary flux.

    F(L) = -(1/2) sum_a oint_{rho=L} (e_a rho^{-2n}) (e_a -| dV) is radius
    independent; the constant making b_n a (2 pi)^{-1} rho^{-2n} carry unit
    strength 16 at the origin is a = 32 pi / (b_n F).
    """
    form = flux_form(n, green_kernel(n))
    values = []
    for radius in radii:
        flux = surface_integral(form, heis_sphere(n, radius), n_polar, n_angle)
        if abs(flux.imag) > 1e-9 * max(1.0, abs(flux.real)):
            raise ValueError("green flux should be real")
        f = -0.5 * flux.real
        values.append(32.0 * math.pi / (b_const(n) * f))
    mean = float(np.mean(values))
    spread = float(np.max(np.abs(np.asarray(values) - mean))) if len(values) > 1 else 0.0
    return {"a_n": mean, "per_radius": list(map(float, values)), "spread": spread}
