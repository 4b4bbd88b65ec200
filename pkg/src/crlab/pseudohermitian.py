"""Adapted frames, canonical connection, curvature and torsion on models.

Conventions
-----------
* A model is the flat group chart or a conformal rescale of it by a
  positive factor u: contact form u^{2/n} theta, holomorphic coframe
  u^{1/n} (theta^b + 2 i v^b theta) with v^b = Zbar_b(log u) / n, dual
  frame Z_b -> u^{-1/n} Z_b and Reeb field
  u^{-2/n} (T - 2 i sum_b (v^b Z_b - conj(v^b) Zbar_b)).
* The canonical connection preserves the splitting: nabla Z_a =
  gamma_a^g (.) Z_g with connection coefficients read from the frame
  brackets; the Reeb field is parallel.
* Index bookkeeping for solved coefficients (trailing axes = points):
      gamma_anti[b, a, g] = gamma_a^g(Zbar_b)
      gamma_hol[b, a, g]  = gamma_a^g(Z_b) = -conj(gamma_anti[b, g, a])
      gamma_t[a, g]       = gamma_a^g(Reeb)
      torsion_a[g, a]     = coefficient of Zbar_g in [Z_a, Reeb]
* Bracket decompositions are taken in the frame basis ordered
  (Z_1..Z_n, Zbar_1..Zbar_n, Reeb); conj_coeffs swaps the two halves.
* Curvature operator on frame slots X, Y:
      R_a^s(X, Y) = X(gamma_a^s(Y)) - Y(gamma_a^s(X))
                    + gamma_a^g(Y) gamma_g^s(X) - gamma_a^g(X) gamma_g^s(Y)
                    - gamma_a^s([X, Y]),
  the hermitian Ricci contraction is ricci[a, b] = sum_g R_g^g(Z_a, Zbar_b)
  and the scalar curvature is its trace.
* The real connection matrix uses the real frame e_b = Z_b + Zbar_b,
  e_{n+b} = i (Z_b - Zbar_b): omega[a][b] = Re/Im blocks of gamma, skew in
  (a, b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fieldcalc import (
    FieldExpr,
    Jet,
    KForm,
    bracket_components,
    coordinate_jets,
    directional,
    jet_partial,
    memoize_coefficient,
)
from .heisenberg import (
    b_const,
    chart_dim,
    contact_form,
    frame_component_jets,
    rho_field,
    sublaplacian,
)

__all__ = [
    "Model",
    "build_model",
    "af_conformal_factor",
    "ConnectionData",
    "SolverCache",
    "solve_connection",
    "connection_trace_form",
    "coframe_forms",
    "curvature",
    "real_curvature",
    "scalar_curvature_oracle",
    "torsion_tensor",
    "bianchi_residual",
    "real_connection",
    "real_omega_values",
    "conj_coeffs",
]

SQRT2 = math.sqrt(2.0)
COND_LIMIT = 1e8


# ---------------------------------------------------------------------------
# models


def _flat_z_comps(n: int, b: int, coords: tuple[Jet, ...]) -> list:
    """Components of Z_b = (e_b - i e_{n+b}) / 2 on the flat chart."""
    ca = frame_component_jets(n, b, coords)
    cb = frame_component_jets(n, n + b, coords)
    return [x * 0.5 + y * (-0.5j) for x, y in zip(ca, cb)]


def _lift_all(comps: Sequence, coords: tuple[Jet, ...], order: int) -> list[Jet]:
    dim = coords[0].dim
    shape = np.shape(coords[0].value)
    out = []
    for c in comps:
        if isinstance(c, Jet):
            out.append(c)
        else:
            out.append(Jet.constant(complex(c), dim, order, shape))
    return out


@dataclass(frozen=True)
class Model:
    """A pseudohermitian structure on the group chart."""

    kind: str
    n: int
    u: FieldExpr | None = None

    @property
    def dim(self) -> int:
        return chart_dim(self.n)

    @property
    def frame_cost(self) -> int:
        """Jet orders the frame components consume below the seed order."""
        return 0 if self.kind == "flat" else 1

    def frame_jets(self, coords: tuple[Jet, ...]) -> tuple[list[Jet], list[list[Jet]]]:
        """Reeb components and holomorphic frame components as jets."""
        n = self.n
        order = coords[0].order
        if self.kind == "flat":
            t_comps = _lift_all(frame_component_jets(n, "T", coords), coords, order)
            z_comps = [_lift_all(_flat_z_comps(n, b, coords), coords, order) for b in range(1, n + 1)]
            return t_comps, z_comps
        uj = self.u(coords)
        logu = uj.log()
        fac_z = uj ** (-1.0 / n)
        fac_t = uj ** (-2.0 / n)
        flat_z = [_lift_all(_flat_z_comps(n, b, coords), coords, order) for b in range(1, n + 1)]
        z_comps = [[fac_z * c for c in col] for col in flat_z]
        v = [directional(logu, col) * (1.0 / n) for col in flat_z]
        vbar = [directional(logu, [c.conj() for c in col]) * (1.0 / n) for col in flat_z]
        t_comps = _lift_all(frame_component_jets(n, "T", coords), coords, order)
        out_t = []
        for i in range(self.dim):
            term = t_comps[i]
            for b in range(n):
                term = term + vbar[b] * flat_z[b][i] * (-2.0j)
                term = term + v[b] * flat_z[b][i].conj() * 2.0j
            out_t.append(fac_t * term)
        return out_t, z_comps


def build_model(kind: str, n: int, u: FieldExpr | None = None) -> Model:
    """Construct the flat model or a conformal rescale by the factor u."""
    if kind == "flat":
        if u is not None:
            raise ValueError("flat model takes no conformal factor")
        return Model("flat", n)
    if kind == "conformal":
        if u is None:
            raise ValueError("conformal model needs a positive factor field")
        if u.dim != chart_dim(n):
            raise ValueError("conformal factor lives on the wrong chart")
        return Model("conformal", n, u)
    raise ValueError("kind must be 'flat' or 'conformal'")


def af_conformal_factor(n: int, coeff: float, odd_coeff: float = 0.0) -> FieldExpr:
    """Asymptotically flat factor 1 + coeff rho^{-2n} (+ odd_coeff rho^{-2n-1}).

    The leading correction is the harmonic decay profile; the optional odd
    term breaks the parity that makes sphere averages superconvergent.
    """
    rho = rho_field(n)

    def fn(coords: tuple[Jet, ...]):
        r = rho(coords)
        out = r ** (-2 * n) * coeff + 1.0
        if odd_coeff:
            out = out + r ** (-(2 * n + 1)) * odd_coeff
        return out

    return FieldExpr(chart_dim(n), fn, domain=rho.domain, name="af_factor")


def _v_callable(model: Model, b: int) -> Callable:
    """Coefficient v^b = Zbar_b(log u)/n of the coframe correction."""

    def coeff(coords: tuple[Jet, ...]) -> Jet:
        logu = model.u(coords).log()
        zbar = [c.conj() for c in _lift_all(_flat_z_comps(model.n, b + 1, coords), coords, coords[0].order)]
        return directional(logu, zbar) * (1.0 / model.n)

    return coeff


def coframe_forms(model: Model) -> tuple[KForm, list[KForm]]:
    """The contact form and holomorphic coframe as coordinate forms."""
    n, d = model.n, model.dim
    flat_theta = contact_form(n)
    flat_alpha = [KForm(d, 1, {(b,): SQRT2, (n + b,): SQRT2 * 1j}) for b in range(n)]
    if model.kind == "flat":
        return flat_theta, flat_alpha

    def upow(p: float) -> Callable:
        return memoize_coefficient(lambda coords: model.u(coords) ** p)

    theta = flat_theta.scale(upow(2.0 / n))
    alphas = []
    for b in range(n):
        vb = memoize_coefficient(_v_callable(model, b))
        corr = flat_theta.scale(lambda coords, vb=vb: vb(coords) * 2.0j)
        alphas.append((flat_alpha[b] + corr).scale(upow(1.0 / n)))
    alphas = [KForm(d, 1, a.coeffs, seed_order=1) for a in alphas]
    theta = KForm(d, 1, theta.coeffs, seed_order=theta.seed_order)
    return theta, alphas


# ---------------------------------------------------------------------------
# connection solve


def _stack_vals(cols: Sequence[Sequence[Jet]]) -> np.ndarray:
    """(slots, cols, pts) complex array of component values."""
    return np.stack([np.stack([np.asarray(j.value, dtype=complex) for j in col]) for col in cols], axis=1)


def _stack_grads(cols: Sequence[Sequence[Jet]]) -> np.ndarray:
    """(slots, cols, coord, pts) complex array of component gradients."""
    return np.stack(
        [np.stack([np.asarray(j.d1, dtype=complex) for j in col]) for col in cols], axis=1
    )


def conj_coeffs(c: np.ndarray, n: int, axis: int = 0) -> np.ndarray:
    """Coefficients of the conjugate field: swap halves and conjugate."""
    c = np.conj(c)
    idx = list(range(n, 2 * n)) + list(range(n)) + [2 * n]
    return np.take(c, idx, axis=axis)


@dataclass
class ConnectionData:
    """Solved connection coefficients and bracket data at a point batch."""

    model: Model
    pts: np.ndarray
    order: int
    frame_val: np.ndarray  # (slots, basis cols, N)
    frame_grad: np.ndarray | None
    gamma_anti: np.ndarray  # (b, a, g, N)
    gamma_hol: np.ndarray  # (b, a, g, N)
    gamma_t: np.ndarray  # (a, g, N)
    torsion_a: np.ndarray  # (g, a, N): Zbar_g coefficient of [Z_a, Reeb]
    gamma_anti_grad: np.ndarray | None = None
    gamma_hol_grad: np.ndarray | None = None
    gamma_t_grad: np.ndarray | None = None
    torsion_a_grad: np.ndarray | None = None
    bracket_hol: np.ndarray | None = None  # (b, a, basis, N): [Z_b, Z_a]
    bracket_anti: np.ndarray | None = None  # (b, a, basis, N): [Zbar_b, Z_a]
    bracket_reeb: np.ndarray | None = None  # (a, basis, N): [Z_a, Reeb]
    bracket_hol_grad: np.ndarray | None = None
    bracket_anti_grad: np.ndarray | None = None
    bracket_reeb_grad: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.model.n


def _batch_solve(mval: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M x = rhs with point axis last on both sides."""
    m = np.moveaxis(mval, -1, 0)  # (N, d, d)
    b = np.moveaxis(rhs, -1, 0)  # (N, d, r)
    return np.moveaxis(np.linalg.solve(m, b), 0, -1)


def _ensure_batch(coords: tuple[Jet, ...]) -> tuple[Jet, ...]:
    """Give scalar-shaped coordinate jets a length-one point axis."""
    if np.ndim(coords[0].value) > 0:
        return coords

    def lift(j: Jet) -> Jet:
        return Jet(
            j.dim,
            np.reshape(j.value, (1,)),
            None if j.d1 is None else j.d1[..., None],
            None if j.d2 is None else j.d2[..., None],
            None if j.d3 is None else j.d3[..., None],
        )

    return tuple(lift(j) for j in coords)


def _solve_from_coords(model: Model, coords: tuple[Jet, ...], order: int) -> ConnectionData:
    coords = _ensure_batch(coords)
    n, d = model.n, model.dim
    t_comps, z_comps = model.frame_jets(coords)
    zbar_comps = [[c.conj() for c in col] for col in z_comps]
    cols = z_comps + zbar_comps + [t_comps]

    mval = _stack_vals(cols)
    cond = float(np.max(np.linalg.cond(np.moveaxis(mval, -1, 0))))
    if cond > COND_LIMIT:
        raise ValueError(f"frame matrix conditioning {cond:.3e} beyond guard")
    want_grad = order >= 1
    mgrad = _stack_grads(cols) if want_grad else None

    # Bracket catalogue: [Zbar_b, Z_a] (n^2), [Z_b, Z_a] for b < a, [Z_a, T].
    rhs_jets: list[list[Jet]] = []
    labels: list[tuple[str, int, int]] = []
    for b in range(n):
        for a in range(n):
            rhs_jets.append(bracket_components(zbar_comps[b], z_comps[a]))
            labels.append(("anti", b, a))
    for b in range(n):
        for a in range(b + 1, n):
            rhs_jets.append(bracket_components(z_comps[b], z_comps[a]))
            labels.append(("hol", b, a))
    for a in range(n):
        rhs_jets.append(bracket_components(z_comps[a], t_comps))
        labels.append(("reeb", a, 0))

    bval = _stack_vals(rhs_jets)
    bgrad = _stack_grads(rhs_jets) if want_grad else None

    x0 = _batch_solve(mval, bval)  # (d basis, r, N) -> actually (slots->basis)
    x1 = None
    if want_grad:
        mj = np.moveaxis(mgrad, (2, 3), (0, 1))  # (dc, N, d, d)
        mn = np.moveaxis(mval, -1, 0)  # (N, d, d)
        x0n = np.moveaxis(x0, -1, 0)  # (N, d, r)
        rhs1 = np.moveaxis(bgrad, (2, 3), (0, 1)) - mj @ x0n  # (dc, N, d, r)
        sol = np.linalg.solve(mn[None], rhs1)  # (dc, N, d, r)
        x1 = np.moveaxis(sol, (0, 1), (2, 3))  # (d, r, dc, N)

    npts = mval.shape[-1]
    anti = np.zeros((n, n, d, npts), dtype=complex)
    anti_g = np.zeros((n, n, d, mval.shape[0], npts), dtype=complex) if want_grad else None
    hol_raw = np.zeros((n, n, d, npts), dtype=complex)
    hol_raw_g = np.zeros_like(anti_g) if want_grad else None
    reeb = np.zeros((n, d, npts), dtype=complex)
    reeb_g = np.zeros((n, d, d, npts), dtype=complex) if want_grad else None
    for r, (kind, b, a) in enumerate(labels):
        if kind == "anti":
            anti[b, a] = x0[:, r]
            if want_grad:
                anti_g[b, a] = x1[:, r]
        elif kind == "hol":
            hol_raw[b, a] = x0[:, r]
            hol_raw[a, b] = -x0[:, r]
            if want_grad:
                hol_raw_g[b, a] = x1[:, r]
                hol_raw_g[a, b] = -x1[:, r]
        else:
            reeb[b] = x0[:, r]
            if want_grad:
                reeb_g[b] = x1[:, r]

    # Coefficient reads.
    gamma_anti = np.ascontiguousarray(anti[:, :, :n])  # (b, a, g, N)
    gamma_hol = -np.conj(np.swapaxes(gamma_anti, 1, 2))
    gamma_t = -np.ascontiguousarray(reeb[:, :n])  # (a, g, N)
    torsion_a = np.ascontiguousarray(np.moveaxis(reeb[:, n : 2 * n], 0, 1))  # (g, a, N)
    gamma_anti_grad = gamma_hol_grad = gamma_t_grad = torsion_a_grad = None
    if want_grad:
        gamma_anti_grad = np.ascontiguousarray(anti_g[:, :, :n])
        gamma_hol_grad = -np.conj(np.swapaxes(gamma_anti_grad, 1, 2))
        gamma_t_grad = -np.ascontiguousarray(reeb_g[:, :n])
        torsion_a_grad = np.ascontiguousarray(np.moveaxis(reeb_g[:, n : 2 * n], 0, 1))

    # Structure residuals (all should vanish for an admissible model).
    eye = np.eye(n)[:, :, None]
    res = {
        "levi": float(np.max(np.abs(anti[:, :, 2 * n] - 1j * eye))),
        "conjugate": float(
            np.max(np.abs(anti[:, :, n : 2 * n] + np.conj(np.swapaxes(gamma_anti, 0, 1))))
        ),
        "hol_closed": float(
            np.max(np.abs(hol_raw[:, :, :n] - (gamma_hol - np.swapaxes(gamma_hol, 0, 1))))
        ),
        "hol_spurious": float(np.max(np.abs(hol_raw[:, :, n:]))),
        "reeb_spurious": float(np.max(np.abs(reeb[:, 2 * n]))),
        "reeb_skew": float(np.max(np.abs(gamma_t + np.conj(np.swapaxes(gamma_t, 0, 1))))),
        "conditioning": cond,
    }

    pts = np.stack([np.real(np.asarray(coords[i].value)) for i in range(d)])
    return ConnectionData(
        model=model,
        pts=pts,
        order=order,
        frame_val=mval,
        frame_grad=mgrad,
        gamma_anti=gamma_anti,
        gamma_hol=gamma_hol,
        gamma_t=gamma_t,
        torsion_a=torsion_a,
        gamma_anti_grad=gamma_anti_grad,
        gamma_hol_grad=gamma_hol_grad,
        gamma_t_grad=gamma_t_grad,
        torsion_a_grad=torsion_a_grad,
        bracket_hol=hol_raw,
        bracket_anti=anti,
        bracket_reeb=reeb,
        bracket_hol_grad=hol_raw_g,
        bracket_anti_grad=anti_g,
        bracket_reeb_grad=reeb_g,
        residuals=res,
    )


def solve_connection(model: Model, pts, order: int = 0) -> ConnectionData:
    """Solve the canonical connection at a (d, N) point batch.

    order=0 gives coefficient values; order=1 also their chart gradients
    (needed by curvature and covariant differentiation).
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if model.u is not None:
        model.u.check_domain(pts)
    coords = coordinate_jets(pts, order + model.frame_cost + 1)
    return _solve_from_coords(model, coords, order)


class SolverCache:
    """Memoize solver runs keyed on the identity of the seed jets.

    Coefficient callables of solver-backed forms share one cache so a node
    chunk is solved once no matter how many coefficients read from it.  The
    anchor jet is kept alive in the slot: a bare id() key could be recycled
    by a later allocation and hand back stale data.
    """

    def __init__(self, model: Model, order: int = 0, keep: int = 4):
        self.model = model
        self.order = order
        self.keep = keep
        self._slots: list[tuple[Jet, ConnectionData]] = []

    def __call__(self, coords: tuple[Jet, ...]) -> ConnectionData:
        for anchor, data in self._slots:
            if anchor is coords[0]:
                return data
        data = _solve_from_coords(self.model, coords, self.order)
        self._slots.append((coords[0], data))
        if len(self._slots) > self.keep:
            self._slots.pop(0)
        return data


def connection_trace_form(model: Model) -> KForm:
    """sum_g gamma_g^g as a coordinate 1-form with solver-backed coefficients."""
    theta, alphas = coframe_forms(model)
    cache = SolverCache(model, order=0)

    def tr_t(coords: tuple[Jet, ...]) -> Jet:
        data = cache(coords)
        val = np.einsum("gg...->...", data.gamma_t)
        return Jet(coords[0].dim, val)

    def tr_hol(coords: tuple[Jet, ...], b: int) -> Jet:
        data = cache(coords)
        return Jet(coords[0].dim, np.einsum("gg...->...", data.gamma_hol[b]))

    def tr_anti(coords: tuple[Jet, ...], b: int) -> Jet:
        data = cache(coords)
        return Jet(coords[0].dim, np.einsum("gg...->...", data.gamma_anti[b]))

    total = theta.scale(tr_t)
    for b in range(model.n):
        total = total + alphas[b].scale(lambda c, b=b: tr_hol(c, b))
        conj_form = KForm(
            model.dim,
            1,
            {idx: (lambda c, cc=cc: _coeff_conj(cc, c)) for idx, cc in alphas[b].coeffs.items()},
            seed_order=alphas[b].seed_order,
        )
        total = total + conj_form.scale(lambda c, b=b: tr_anti(c, b))
    need = model.frame_cost + 1
    return KForm(model.dim, 1, total.coeffs, seed_order=max(total.seed_order, need))


def _coeff_conj(c, coords):
    from .fieldcalc import _coeff_jet

    return _coeff_jet(c, coords).conj()


# ---------------------------------------------------------------------------
# curvature


def _theta_on(data: ConnectionData, coeffs: np.ndarray) -> np.ndarray:
    """gamma_a^s(V) for V given by basis coefficients (basis, N) -> (a, s, N)."""
    n = data.n
    out = np.einsum("g...,gas...->as...", coeffs[:n], data.gamma_hol)
    out += np.einsum("g...,gas...->as...", coeffs[n : 2 * n], data.gamma_anti)
    out += coeffs[2 * n] * data.gamma_t
    return out


def _horizontal_tables(data: ConnectionData):
    """Stack gamma reads and brackets over the 2n horizontal frame labels."""
    n = data.n
    gh = np.concatenate([data.gamma_hol, data.gamma_anti])  # (2n, a, s, N)
    gh_g = None
    if data.order >= 1:
        gh_g = np.concatenate([data.gamma_hol_grad, data.gamma_anti_grad])
    # Bracket table bt[x, y] = [E_x, E_y] basis coefficients.
    npts = data.pts.shape[-1]
    d = 2 * n + 1
    bt = np.zeros((2 * n, 2 * n, d, npts), dtype=complex)
    bt_g = np.zeros((2 * n, 2 * n, d, d, npts), dtype=complex) if data.order >= 1 else None
    for b in range(n):
        for a in range(n):
            bt[n + b, a] = data.bracket_anti[b, a]
            bt[a, n + b] = -data.bracket_anti[b, a]
            bt[b, a] = data.bracket_hol[b, a]
            bt[n + b, n + a] = conj_coeffs(data.bracket_hol[b, a], n)
            if bt_g is not None:
                bt_g[n + b, a] = data.bracket_anti_grad[b, a]
                bt_g[a, n + b] = -data.bracket_anti_grad[b, a]
                bt_g[b, a] = data.bracket_hol_grad[b, a]
                bt_g[n + b, n + a] = conj_coeffs(data.bracket_hol_grad[b, a], n)
    # Component values of the horizontal frame fields.
    ev = np.concatenate([data.frame_val[:, :n], data.frame_val[:, n : 2 * n]], axis=1)
    ev = np.moveaxis(ev, 1, 0)  # (2n labels, slots, N)
    return gh, gh_g, bt, bt_g, ev


def _hcurvature(data: ConnectionData) -> np.ndarray:
    """R[x, y, a, s, N] = R_a^s(E_x, E_y) over horizontal frame labels."""
    if data.order < 1:
        raise ValueError("curvature needs a gradient-order solve")
    gh, gh_g, bt, _, ev = _horizontal_tables(data)
    # Directional derivatives E_x(gamma reads): (x, y, a, s, N).
    dgamma = np.einsum("xi...,yasi...->xyas...", ev, gh_g)
    quad = np.einsum("yag...,xgs...->xyas...", gh, gh)
    r = dgamma - np.swapaxes(dgamma, 0, 1) + quad - np.swapaxes(quad, 0, 1)
    n = data.n
    # gamma_a^s([E_x, E_y]) assembled from the bracket decomposition:
    hol_part = np.einsum("xyg...,gas...->xyas...", bt[:, :, :n], data.gamma_hol)
    anti_part = np.einsum("xyg...,gas...->xyas...", bt[:, :, n : 2 * n], data.gamma_anti)
    reeb_part = np.einsum("xy...,as...->xyas...", bt[:, :, 2 * n], data.gamma_t)
    return r - hol_part - anti_part - reeb_part


def curvature(model: Model, pts) -> dict:
    """Curvature operator data, hermitian Ricci and scalar curvature."""
    data = solve_connection(model, pts, order=1)
    rh = _hcurvature(data)
    n = data.n
    mixed = rh[:n, n:]  # (r, s, a, b, N) = R_a^b(Z_r, Zbar_s)
    ricci = np.einsum("rsgg...->rs...", mixed)
    scalar = np.einsum("bb...->...", ricci)
    herm = float(np.max(np.abs(np.conj(ricci) - np.swapaxes(ricci, 0, 1))))
    return {
        "data": data,
        "horizontal": rh,
        "mixed": mixed,
        "ricci": ricci,
        "scalar": scalar,
        "hermitian_residual": herm,
        "scalar_imag": float(np.max(np.abs(np.imag(scalar)))),
    }


def scalar_curvature_oracle(model: Model, pts) -> np.ndarray:
    """Independent scalar curvature from the conformal factor alone."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if model.kind == "flat":
        return np.zeros(pts.shape[1])
    n = model.n
    coords = coordinate_jets(pts, 2)
    uj = model.u(coords)
    lap = sublaplacian(model.u)(coords)
    return b_const(n) * np.real(lap.value) / np.real(uj.value) ** (1.0 + 2.0 / n)


def real_curvature(model: Model, pts) -> dict:
    """Real-slot curvature pairings <R_{e_P e_Q} e_A, e_B> on the real frame.

    With <Z_a, Zbar_b> = delta_ab / 2 the real frame is orthonormal and the
    pairing matrix G[P, Q, A, B] is assembled from the complex operator by
    the Re/Im block dictionary.  Also returns the horizontal trace
    sum_{P,Q} G[P, Q, Q, P], which equals four times the scalar curvature.
    """
    out = curvature(model, pts)
    rh = out["horizontal"]  # (x, y, a, s, N)
    n = model.n
    conv = np.zeros((2 * n, 2 * n), dtype=complex)
    for p in range(n):
        conv[p, p] = 1.0
        conv[p, n + p] = 1.0
        conv[n + p, p] = 1.0j
        conv[n + p, n + p] = -1.0j
    rr = np.einsum("Px,Qy,xyas...->PQas...", conv, conv, rh)
    npts = rr.shape[-1]
    g = np.zeros((2 * n, 2 * n, 2 * n, 2 * n, npts))
    g[:, :, :n, :n] = np.real(rr)
    g[:, :, :n, n:] = np.imag(rr)
    g[:, :, n:, :n] = -np.imag(rr)
    g[:, :, n:, n:] = np.real(rr)
    trace = np.einsum("pqqp...->...", g)
    return {"pairings": g, "trace": trace, "scalar": out["scalar"], "data": out["data"]}


# ---------------------------------------------------------------------------
# torsion


def torsion_tensor(model: Model, pts) -> dict:
    """Torsion of the canonical connection, computed definitionally.

    Returns basis-coefficient arrays for frame pairs and the residuals
    against the structural form: T(Z_a, Zbar_b) = i delta_ab Reeb,
    T(Z_a, Z_b) = 0, T(Z_a, Reeb) = -A[g, a] Zbar_g.
    """
    data = solve_connection(model, pts, order=0)
    n, d = data.n, 2 * data.n + 1
    npts = data.pts.shape[-1]

    mixed = np.zeros((n, n, d, npts), dtype=complex)
    for a in range(n):
        for b in range(n):
            # nabla_{Z_a} Zbar_b - nabla_{Zbar_b} Z_a - [Z_a, Zbar_b].
            coeff = np.zeros((d, npts), dtype=complex)
            coeff[n : 2 * n] += np.conj(data.gamma_anti[a, b])
            coeff[:n] -= data.gamma_anti[b, a]
            coeff += data.bracket_anti[b, a]  # -[Z_a, Zbar_b]
            mixed[a, b] = coeff

    hol = np.zeros((n, n, d, npts), dtype=complex)
    for a in range(n):
        for b in range(n):
            coeff = np.zeros((d, npts), dtype=complex)
            coeff[:n] += data.gamma_hol[a, b]
            coeff[:n] -= data.gamma_hol[b, a]
            hol[a, b] = coeff - data.bracket_hol[a, b]

    reeb = np.zeros((n, d, npts), dtype=complex)
    for a in range(n):
        coeff = np.zeros((d, npts), dtype=complex)
        coeff[:n] -= data.gamma_t[a]
        reeb[a] = coeff - data.bracket_reeb[a]

    eye = np.eye(n)[:, :, None]
    want_mixed = np.zeros_like(mixed)
    want_mixed[:, :, 2 * n] = 1j * eye
    want_reeb = np.zeros_like(reeb)
    want_reeb[:, n : 2 * n] = -np.moveaxis(data.torsion_a, 1, 0)
    residuals = {
        "mixed": float(np.max(np.abs(mixed - want_mixed))),
        "holomorphic": float(np.max(np.abs(hol))),
        "reeb": float(np.max(np.abs(reeb - want_reeb))),
    }
    return {
        "data": data,
        "mixed": mixed,
        "holomorphic": hol,
        "reeb": reeb,
        "residuals": residuals,
    }


# ---------------------------------------------------------------------------
# first structure identity (cyclic sum with torsion terms)


def _torsion_tables(data: ConnectionData):
    """Torsion coefficients over horizontal labels, with gradients.

    tt[x, y] = T(E_x, E_y) basis coefficients, tr[x] = T(E_x, Reeb).
    """
    n = data.n
    d = 2 * n + 1
    npts = data.pts.shape[-1]
    gh, gh_g, bt, bt_g, _ = _horizontal_tables(data)

    def nabla_coeffs(x: int, y: int, grad: bool):
        """Basis coefficients of nabla_{E_x} E_y (y horizontal)."""
        out = np.zeros((d, npts) if not grad else (d, d, npts), dtype=complex)
        src = gh_g if grad else gh
        if y < n:
            out[:n] = src[x, y]  # gamma_y^s(E_x) on Z_s
        else:
            xb = (x + n) % (2 * n)
            out[n : 2 * n] = np.conj(src[xb, y - n])
        return out

    tt = np.zeros((2 * n, 2 * n, d, npts), dtype=complex)
    tt_g = np.zeros((2 * n, 2 * n, d, d, npts), dtype=complex) if data.order >= 1 else None
    for x in range(2 * n):
        for y in range(2 * n):
            tt[x, y] = nabla_coeffs(x, y, False) - nabla_coeffs(y, x, False) - bt[x, y]
            if tt_g is not None:
                tt_g[x, y] = nabla_coeffs(x, y, True) - nabla_coeffs(y, x, True) - bt_g[x, y]

    tr = np.zeros((2 * n, d, npts), dtype=complex)
    tr_g = np.zeros((2 * n, d, d, npts), dtype=complex) if data.order >= 1 else None
    for x in range(2 * n):
        coeff = np.zeros((d, npts), dtype=complex)
        if x < n:
            coeff[:n] -= data.gamma_t[x]
            br = data.bracket_reeb[x]
            br_g = data.bracket_reeb_grad[x] if data.order >= 1 else None
        else:
            coeff[n : 2 * n] -= np.conj(data.gamma_t[x - n])
            br = conj_coeffs(data.bracket_reeb[x - n], n)
            br_g = (
                conj_coeffs(data.bracket_reeb_grad[x - n], n) if data.order >= 1 else None
            )
        tr[x] = coeff - br
        if tr_g is not None:
            gcoeff = np.zeros((d, d, npts), dtype=complex)
            if x < n:
                gcoeff[:n] -= data.gamma_t_grad[x]
            else:
                gcoeff[n : 2 * n] -= np.conj(data.gamma_t_grad[x - n])
            tr_g[x] = gcoeff - br_g
    return tt, tt_g, tr, tr_g


def bianchi_residual(model: Model, pts) -> dict:
    """Cyclic curvature identity residual over horizontal frame triples.

    Checks sum_cyc R_{XY}(Z) = sum_cyc T(X, [Y, Z]) + sum_cyc
    nabla_X (T(Y, Z)) for X, Y, Z ranging over the horizontal frame.
    """
    data = solve_connection(model, pts, order=1)
    n = data.n
    d = 2 * n + 1
    npts = data.pts.shape[-1]
    gh, gh_g, bt, bt_g, ev = _horizontal_tables(data)
    tt, tt_g, tr, tr_g = _torsion_tables(data)
    rh = _hcurvature(data)

    def r_vector(x: int, y: int, z: int) -> np.ndarray:
        """Basis coefficients of R_{E_x E_y}(E_z)."""
        out = np.zeros((d, npts), dtype=complex)
        if z < n:
            out[:n] = rh[x, y, z]
        else:
            xb, yb = (x + n) % (2 * n), (y + n) % (2 * n)
            out[n : 2 * n] = np.conj(rh[xb, yb, z - n])
        return out

    def t_on(x: int, coeffs: np.ndarray) -> np.ndarray:
        """T(E_x, V) for V given by basis coefficients."""
        out = np.einsum("y...,yc...->c...", coeffs[: 2 * n], tt[x])
        out += coeffs[2 * n] * tr[x]
        return out

    def nabla_t(x: int, y: int, z: int) -> np.ndarray:
        """Coefficients of nabla_{E_x}(T(E_y, E_z))."""
        w = tt[y, z]
        wg = tt_g[y, z]  # (c, coord, N)
        out = np.einsum("i...,ci...->c...", ev[x], wg)
        out[:n] += np.einsum("g...,gs...->s...", w[:n], gh[x])
        xb = (x + n) % (2 * n)
        out[n : 2 * n] += np.einsum("g...,gs...->s...", w[n : 2 * n], np.conj(gh[xb]))
        return out

    worst = 0.0
    scale = max(float(np.max(np.abs(rh))), float(np.max(np.abs(tt))), 1e-30)
    for x in range(2 * n):
        for y in range(2 * n):
            for z in range(2 * n):
                lhs = np.zeros((d, npts), dtype=complex)
                rhs = np.zeros((d, npts), dtype=complex)
                for a, b, c in ((x, y, z), (y, z, x), (z, x, y)):
                    lhs += r_vector(a, b, c)
                    rhs += t_on(a, bt[b, c])
                    rhs += nabla_t(a, b, c)
                worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return {"max_residual": worst, "scale": scale, "relative": worst / scale}


# ---------------------------------------------------------------------------
# real frame picture


def _assemble_real_omega(n: int, gh_like: np.ndarray, gt_like: np.ndarray, extra_shape=()):
    d = 2 * n + 1
    npts = gt_like.shape[-1]
    theta_args = np.zeros((n, n, d) + extra_shape + (npts,), dtype=complex)
    for g in range(n):
        theta_args[:, :, g] = gh_like[g] + gh_like[n + g]
        theta_args[:, :, n + g] = 1j * (gh_like[g] - gh_like[n + g])
    theta_args[:, :, 2 * n] = gt_like
    omega = np.zeros((2 * n, 2 * n, d) + extra_shape + (npts,))
    re, im = np.real(theta_args), np.imag(theta_args)
    omega[:n, :n] = re
    omega[:n, n:] = im
    omega[n:, :n] = -im
    omega[n:, n:] = re
    return omega


def real_omega_values(data: ConnectionData) -> dict:
    """Real connection matrix and real frame components from solved data.

    omega has shape (2n, 2n, 2n+1, N): the last argument index runs over
    (e_1..e_{2n}, Reeb).  The real frame is e_b = Z_b + Zbar_b,
    e_{n+b} = i (Z_b - Zbar_b).
    """
    n = data.n
    gh = np.concatenate([data.gamma_hol, data.gamma_anti])
    omega = _assemble_real_omega(n, gh, data.gamma_t)
    z = data.frame_val[:, :n]
    out = {
        "omega": omega,
        "frame": np.concatenate([2.0 * np.real(z), -2.0 * np.imag(z)], axis=1),
        "reeb": np.real(data.frame_val[:, 2 * n]),
        "skew_residual": float(np.max(np.abs(omega + np.swapaxes(omega, 0, 1)))),
    }
    if data.order >= 1:
        gh_g = np.concatenate([data.gamma_hol_grad, data.gamma_anti_grad])
        out["omega_grad"] = _assemble_real_omega(n, gh_g, data.gamma_t_grad, extra_shape=(data.model.dim,))
        zg = data.frame_grad[:, :n]
        out["frame_grad"] = np.concatenate([2.0 * np.real(zg), -2.0 * np.imag(zg)], axis=1)
        out["reeb_grad"] = np.real(data.frame_grad[:, 2 * n])
    return out


def real_connection(model: Model, pts, order: int = 0) -> dict:
    """Real connection matrix on the real frame at a point batch."""
    data = solve_connection(model, pts, order=order)
    out = real_omega_values(data)
    out["data"] = data
    return out
