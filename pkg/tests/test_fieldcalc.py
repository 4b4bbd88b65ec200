"""Jet arithmetic, forms, and quadrature: oracle and property tests."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlab.fieldcalc import (
    DomainError,
    FieldExpr,
    Jet,
    KForm,
    ParamRegion,
    ParamSurface,
    Point,
    bracket_components,
    coordinate_jets,
    dform,
    directional,
    exterior_derivative,
    fd_jet,
    form_eval,
    gauss_legendre,
    interior_product,
    jet_eval,
    jet_partial,
    lie_bracket,
    periodic_grid,
    product_nodes,
    region_integral,
    sphere_angle_rules,
    sphere_components,
    stable_sum,
    surface_integral,
    wedge,
    wedge_power,
)

RNG = np.random.default_rng(0xC0FFEE)


def _poly(coords):
    x, y, z = coords
    return x * x * y + (z ** 3) * 2.0 + x * y * z - y


def _poly_grad(p):
    x, y, z = p
    return np.array([2 * x * y + y * z, x * x + x * z - 1.0, 6 * z * z + x * y])


def _poly_hess(p):
    x, y, z = p
    return np.array([[2 * y, 2 * x + z, y], [2 * x + z, 0.0, x], [y, x, 12 * z]])


class TestJetAlgebra:
    def test_polynomial_jet_matches_hand_derivatives(self):
        p = np.array([0.7, -1.3, 0.4])
        j = _poly(coordinate_jets(p, 2))
        x, y, z = p
        assert np.isclose(j.value, x * x * y + 2.0 * z ** 3 + x * y * z - y)
        assert np.allclose(j.d1, _poly_grad(p), atol=1e-12)
        assert np.allclose(j.d2, _poly_hess(p), atol=1e-12)

    def test_transcendental_chain_rule(self):
        p = np.array([0.3, 0.9])
        x, y = coordinate_jets(p, 2)
        f = (x * y).exp() * (x + y * y).sin() + (x * x + 1.0).log()
        g = FieldExpr(2, lambda c: (c[0] * c[1]).exp() * (c[0] + c[1] * c[1]).sin() + (c[0] * c[0] + 1.0).log())
        _, grad, hess = fd_jet(g, Point(tuple(p)))
        assert np.allclose(f.d1, grad, rtol=1e-7, atol=1e-7)
        assert np.allclose(f.d2, hess, rtol=1e-4, atol=1e-4)

    def test_division_and_negative_powers_agree(self):
        p = np.array([1.2, -0.4])
        x, y = coordinate_jets(p, 2)
        a = 1.0 / (x * x + y * y)
        b = (x * x + y * y) ** (-1)
        assert np.allclose(a.value, b.value)
        assert np.allclose(a.d1, b.d1)
        assert np.allclose(a.d2, b.d2)

    def test_complex_conjugation_commutes_with_partials(self):
        p = np.array([0.5, 0.25, -0.75])
        x, y, t = coordinate_jets(p, 2)
        z = x + 1j * y
        f = z * z * t + z.conj() * 3.0
        g = (z.conj() * z.conj() * t + z * 3.0).conj()
        assert np.allclose(f.conj().value, g.conj().value)
        assert np.allclose(f.d1, np.conj(f.conj().d1))

    def test_jet_partial_lowers_order(self):
        p = np.array([0.7, -1.3, 0.4])
        j = _poly(coordinate_jets(p, 2))
        dx = jet_partial(j, 0)
        assert dx.order == 1
        assert np.isclose(dx.value, _poly_grad(p)[0])
        assert np.allclose(dx.d1, _poly_hess(p)[0])

    def test_batched_evaluation_matches_loop(self):
        pts = RNG.normal(size=(3, 17))
        jb = _poly(coordinate_jets(pts, 2))
        for k in range(17):
            js = _poly(coordinate_jets(pts[:, k], 2))
            assert np.isclose(jb.value[k], js.value)
            assert np.allclose(jb.d1[:, k], js.d1)
            assert np.allclose(jb.d2[:, :, k], js.d2)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2))
    @settings(max_examples=60, deadline=None)
    def test_product_rule_property(self, a, b, c):
        x, y, z = coordinate_jets(np.array([a, b, c]), 2)
        f = x * y + z
        g = z * z - y
        fg = f * g
        assert np.allclose(fg.d1, f.d1 * g.value + f.value * g.d1, atol=1e-10)
        lhs = fg.d2
        rhs = f.d2 * g.value + f.value * g.d2 + f.d1[:, None] * g.d1[None, :] + g.d1[:, None] * f.d1[None, :]
        assert np.allclose(lhs, rhs, atol=1e-10)


class TestFiniteDifferenceOracle:
    def test_fd_convergence_order_is_second(self):
        # halving h should cut the gradient error by ~4: fitted order in [1.8, 2.2]
        fld = FieldExpr(3, lambda c: (c[0] * c[1]).sin() * (c[2] ** 3) + (c[0] ** 2) * c[2])
        p = Point((0.6, -0.35, 0.8))
        exact = jet_eval(fld, p, 1).d1
        errs = []
        steps = [4e-4, 2e-4, 1e-4]
        for h in steps:
            _, g, _ = fd_jet(fld, p, rel_step=h)
            errs.append(np.max(np.abs(g - exact)))
        order = np.polyfit(np.log(steps), np.log(errs), 1)[0]
        assert 1.8 <= order <= 2.2

    def test_fd_agrees_with_jets_at_default_step(self):
        fld = FieldExpr(3, lambda c: (c[0] * c[2]).exp() + c[1] * c[1] * c[0])
        p = Point((0.2, 1.1, -0.5))
        j = jet_eval(fld, p, 2)
        _, g, H = fd_jet(fld, p)
        assert np.allclose(j.d1, g, rtol=1e-8, atol=1e-8)
        assert np.allclose(j.d2, H, rtol=1e-4, atol=1e-4)


class TestDomain:
    def test_outside_domain_raises(self):
        fld = FieldExpr(
            2,
            lambda c: (c[0] * c[0] + c[1] * c[1]) ** (-1),
            domain=lambda pts: (pts[0] ** 2 + pts[1] ** 2) > 1e-12,
            name="inverse-square",
        )
        with pytest.raises(DomainError):
            jet_eval(fld, Point((0.0, 0.0)), 1)
        assert np.isfinite(jet_eval(fld, Point((1.0, 1.0)), 0).value)


class TestBrackets:
    def test_linear_fields_bracket_matches_matrix_commutator(self):
        A = np.array([[0.0, 1.0], [-2.0, 0.5]])
        B = np.array([[1.0, 0.0], [3.0, -1.0]])
        X = FieldExpr(2, lambda c: [c[0] * A[k, 0] + c[1] * A[k, 1] for k in range(2)], arity="vector")
        Y = FieldExpr(2, lambda c: [c[0] * B[k, 0] + c[1] * B[k, 1] for k in range(2)], arity="vector")
        p = Point((0.3, -0.7))
        got = lie_bracket(X, Y, p)
        want = (B @ A - A @ B) @ p.array()
        assert np.allclose(got, want, atol=1e-12)

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    @settings(max_examples=30, deadline=None)
    def test_jacobi_identity(self, a, b, c):
        p = np.array([a, b, c + 2.0])

        def mk(seed):
            rng = np.random.default_rng(seed)
            C = rng.normal(size=(3, 3, 3))

            def comps(co):
                return [
                    sum(co[i] * co[j] * C[k, i, j] for i in range(3) for j in range(3)) + co[k]
                    for k in range(3)
                ]

            return comps

        X, Y, Z = mk(1), mk(2), mk(3)
        cj = coordinate_jets(p, 2)

        def bracket2(F, G):
            # jet-level bracket of component functions, keeping one order
            return bracket_components(F(cj), G(cj))

        def bracket1(Fj, Gj):
            return bracket_components(Fj, Gj)

        xyz = bracket1(bracket2(X, Y), Z(cj))
        yzx = bracket1(bracket2(Y, Z), X(cj))
        zxy = bracket1(bracket2(Z, X), Y(cj))
        for k in range(3):
            total = xyz[k].value + yzx[k].value + zxy[k].value
            assert abs(total) < 1e-9


class TestForms:
    def test_wedge_shuffle_convention_on_one_forms(self):
        # (dx ^ dy)(V, W) = Vx Wy - Vy Wx, no 1/2
        dx = KForm(3, 1, {(0,): 1.0})
        dy = KForm(3, 1, {(1,): 1.0})
        V = np.array([1.0, 2.0, 0.0])
        W = np.array([3.0, 5.0, 0.0])
        val = form_eval(wedge(dx, dy), Point((0.0, 0.0, 0.0)), np.stack([V, W]))
        assert np.isclose(val.real, 1 * 5 - 2 * 3)

    def test_wedge_anticommutes_on_one_forms(self):
        a = KForm(4, 1, {(0,): 2.0, (2,): -1.0})
        b = KForm(4, 1, {(1,): 1.5, (3,): 0.5})
        ab = wedge(a, b)
        ba = wedge(b, a)
        v = RNG.normal(size=(2, 4))
        p = Point((0.1, 0.2, 0.3, 0.4))
        assert np.isclose(form_eval(ab, p, v), -form_eval(ba, p, v))

    def test_d_of_d_is_zero(self):
        f = KForm(3, 0, {(): lambda c: (c[0] * c[1]).sin() * c[2] + c[0] ** 3})
        ddf = dform(dform(f))
        p = Point((0.4, -0.2, 0.9))
        v = RNG.normal(size=(2, 3))
        assert abs(form_eval(ddf, p, v)) < 1e-12

    def test_exterior_derivative_of_polynomial_one_form(self):
        # d(x dy) = dx ^ dy
        a = KForm(2, 1, {(1,): lambda c: c[0]})
        p = Point((0.7, -0.3))
        v = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert np.isclose(exterior_derivative(a, p, v), 1.0)

    def test_leibniz_rule_for_d_on_wedge(self):
        # d(a ^ b) = da ^ b - a ^ db for 1-forms a, b
        a = KForm(3, 1, {(0,): lambda c: c[1] * c[2], (2,): lambda c: c[0] ** 2})
        b = KForm(3, 1, {(1,): lambda c: (c[0] + c[2]) ** 3})
        lhs = dform(wedge(a, b))
        rhs = wedge(dform(a), b) - wedge(a, dform(b))
        p = Point((0.3, 0.8, -0.6))
        v = RNG.normal(size=(3, 3))
        assert np.isclose(form_eval(lhs, p, v), form_eval(rhs, p, v), atol=1e-10)

    def test_interior_product_antiderivation(self):
        # i_V on a 2-form: (i_V w)(W) = w(V, W)
        w = KForm(3, 2, {(0, 1): lambda c: c[2], (1, 2): 2.0})
        vec = [0.5, -1.0, 2.0]
        iv = interior_product(vec, w)
        p = Point((0.2, 0.4, 0.6))
        W = np.array([[1.0, 1.0, -1.0]])
        direct = form_eval(w, p, np.stack([np.array(vec), W[0]]))
        assert np.isclose(form_eval(iv, p, W), direct)

    def test_wedge_power_of_symplectic_form(self):
        # (dx1^dy1 + dx2^dy2)^2 = 2 dx1^dy1^dx2^dy2
        w = KForm(4, 2, {(0, 1): 1.0, (2, 3): 1.0})
        w2 = wedge_power(w, 2)
        p = Point((0.0,) * 4)
        v = np.eye(4)
        assert np.isclose(form_eval(w2, p, v), 2.0)


class TestQuadrature:
    def test_stable_sum_matches_fsum(self):
        vals = RNG.normal(size=1000) * 10.0 ** RNG.integers(-8, 8, size=1000)
        assert stable_sum(vals).real == math.fsum(vals.tolist())

    def test_gauss_legendre_exactness(self):
        x, w = gauss_legendre(8, 0.0, 2.0)
        # exact for polynomials of degree <= 15
        assert np.isclose(np.sum(w * x ** 15), 2.0 ** 16 / 16, rtol=1e-13)

    def test_periodic_grid_kills_pure_phases(self):
        x, w = periodic_grid(6)
        for k in range(1, 6):
            assert abs(np.sum(w * np.exp(1j * k * x))) < 1e-12
        assert np.isclose(np.sum(w), 2 * math.pi)

    def test_product_nodes_weight_product(self):
        r1 = gauss_legendre(3, 0.0, 1.0)
        r2 = periodic_grid(4)
        params, w = product_nodes([r1, r2])
        assert params.shape == (2, 12)
        assert np.isclose(np.sum(w), 1.0 * 2 * math.pi)

    def test_sphere_components_unit_norm(self):
        for n in (1, 2, 3):
            rules = sphere_angle_rules(n, 5, 7)
            params, _ = product_nodes(rules)
            jets = coordinate_jets(params, 0)
            comps = sphere_components(list(jets), n)
            norm = sum((c * c.conj()).value.real for c in comps)
            assert np.allclose(norm, 1.0, atol=1e-12)

    def test_sphere_area_from_angular_rules(self):
        # vol(S^{2n-1}) = 2 pi^n / (n-1)!; measure from angles:
        # prod cos(eta_k)^{2k-1} sin(eta_k) d eta d alpha
        for n, want in ((1, 2 * math.pi), (2, 2 * math.pi ** 2), (3, math.pi ** 3)):
            rules = sphere_angle_rules(n, 24, 6)
            params, w = product_nodes(rules)
            dens = np.ones(params.shape[1])
            for k in range(1, n):
                eta = params[k - 1]
                dens = dens * np.cos(eta) ** (2 * k - 1) * np.sin(eta)
            assert np.isclose(stable_sum(w * dens).real, want, rtol=1e-10)


class TestSurfaceAndRegion:
    def test_circle_line_integral(self):
        # integral over unit circle of (x dy - y dx) = 2 * area = 2 pi
        form = KForm(2, 1, {(0,): lambda c: -c[1], (1,): lambda c: c[0]})

        def chart(ps):
            (a,) = ps
            return [a.cos(), a.sin()]

        def nodes(n_polar, n_angle):
            x, w = periodic_grid(n_angle)
            return x[None, :], w

        surf = ParamSurface(
            dim=2,
            nparams=1,
            chart=chart,
            nodes=nodes,
            orient=lambda pts: pts.T.copy(),
            name="unit circle",
        )
        val = surface_integral(form, surf, n_polar=1, n_angle=40)
        assert np.isclose(val.real, 2 * math.pi, rtol=1e-12)

    def test_sphere_flux_in_r3(self):
        # flux of radial field through S^2: form = x dy^dz - y dx^dz + z dx^dy -> 4 pi
        form = KForm(
            3,
            2,
            {
                (1, 2): lambda c: c[0],
                (0, 2): lambda c: -c[1],
                (0, 1): lambda c: c[2],
            },
        )

        def chart(ps):
            eta, alpha = ps
            return [eta.sin() * alpha.cos(), eta.sin() * alpha.sin(), eta.cos()]

        def nodes(n_polar, n_angle):
            return product_nodes([gauss_legendre(n_polar, 0.0, math.pi), periodic_grid(n_angle)])

        surf = ParamSurface(3, 2, chart, nodes, orient=lambda pts: pts.T.copy(), name="round sphere")
        val = surface_integral(form, surf, n_polar=24, n_angle=24)
        assert np.isclose(val.real, 4 * math.pi, rtol=1e-10)

    def test_orientation_probe_rejects_folded_chart(self):
        form = KForm(2, 1, {(0,): 1.0})

        def chart(ps):
            (s,) = ps
            return [s * s, s]  # tangent flips against fixed probe

        def nodes(n_polar, n_angle):
            x, w = gauss_legendre(n_angle, -1.0, 1.0)
            return x[None, :], w

        surf = ParamSurface(2, 1, chart, nodes, orient=lambda pts: np.tile([0.0, 1.0], (pts.shape[1], 1)), name="fold")
        with pytest.raises(ValueError, match="orientation"):
            surface_integral(form, surf, n_polar=1, n_angle=8)

    def test_region_integral_ball_volume(self):
        def chart(ps):
            r, eta, alpha = ps
            return [r * eta.sin() * alpha.cos(), r * eta.sin() * alpha.sin(), r * eta.cos()]

        def nodes(n_radial, n_polar, n_angle):
            return product_nodes(
                [gauss_legendre(n_radial, 0.0, 1.0), gauss_legendre(n_polar, 0.0, math.pi), periodic_grid(n_angle)]
            )

        reg = ParamRegion(3, chart, nodes, name="unit ball")
        val = region_integral(lambda c: Jet.constant(1.0, 3, 0, np.shape(c[0].value)), reg, n_radial=20, n_polar=20, n_angle=8)
        assert np.isclose(val.real, 4 * math.pi / 3, rtol=1e-10)

    def test_region_integrand_may_take_ambient_derivatives(self):
        # integral over unit ball of laplacian(|p|^2 / 6) = volume
        def chart(ps):
            r, eta, alpha = ps
            return [r * eta.sin() * alpha.cos(), r * eta.sin() * alpha.sin(), r * eta.cos()]

        def nodes(n_radial, n_polar, n_angle):
            return product_nodes(
                [gauss_legendre(n_radial, 0.0, 1.0), gauss_legendre(n_polar, 0.0, math.pi), periodic_grid(n_angle)]
            )

        reg = ParamRegion(3, chart, nodes, name="unit ball")

        def lap(c):
            f = (c[0] ** 2 + c[1] ** 2 + c[2] ** 2) * (1.0 / 6.0)
            return Jet(3, sum(f.d2[i, i] for i in range(3)), None, None)

        val = region_integral(lap, reg, order=2, n_radial=16, n_polar=16, n_angle=6)
        assert np.isclose(val.real, 4 * math.pi / 3, rtol=1e-10)


class TestDirectional:
    def test_directional_matches_contraction(self):
        p = np.array([0.2, -0.4, 0.9])
        j = _poly(coordinate_jets(p, 2))
        v = [0.3, 1.1, -0.7]
        d = directional(j, v)
        assert np.isclose(d.value, np.dot(_poly_grad(p), v))
        assert np.allclose(d.d1, _poly_hess(p) @ np.asarray(v))


class TestThirdOrder:
    def test_polynomial_third_partials_exact(self):
        pts = np.array([1.3, -0.4, 2.1])
        x, y, t = coordinate_jets(pts, 3)
        f = x * x * y * t + y * y * y
        # d^3/dx^2 dy (x^2 y t) = 2 t; d^3/dy^3 (y^3) = 6.
        assert f.d3[0, 0, 1] == pytest.approx(2.0 * pts[2])
        assert f.d3[0, 1, 0] == pytest.approx(2.0 * pts[2])
        assert f.d3[1, 1, 1] == pytest.approx(6.0)
        assert f.d3[0, 0, 2] == pytest.approx(2.0 * pts[1])
        assert f.d3[0, 0, 0] == pytest.approx(0.0)

    def test_transcendental_third_partials(self):
        pts = np.array([0.7, -1.2])
        x, y = coordinate_jets(pts, 3)
        f = (x * y).sin()
        # d^3/dx^2 dy sin(xy) = -2 x y^2... compute analytically:
        # d/dx = y cos, d2/dx2 = -y^2 sin, d3/dx2 dy = -2y sin - x y^2 cos.
        a, b = pts
        want = -2 * b * math.sin(a * b) - a * b * b * math.cos(a * b)
        assert f.d3[0, 0, 1] == pytest.approx(want, rel=1e-12)
        g = (x * x + y * y).log()
        # h = log(q), q = x^2 + y^2: d3/dx3 = 2x(-6/q^2) ... check against
        # finite differences of the jet's own second derivatives instead.
        eps = 1e-6
        xp, yp = coordinate_jets(np.array([a + eps, b]), 2)
        xm, ym = coordinate_jets(np.array([a - eps, b]), 2)
        gp = (xp * xp + yp * yp).log()
        gm = (xm * xm + ym * ym).log()
        fd = (gp.d2 - gm.d2) / (2 * eps)
        assert np.allclose(g.d3[:, :, 0], fd, atol=1e-6)

    def test_third_order_symmetry_and_pow(self):
        pts = np.array([0.9, 0.3, -0.8])
        x, y, t = coordinate_jets(pts, 3)
        f = (x * x + y * y + t * t + 1.5) ** -1.5 + (x * y * t).exp()
        d3 = f.d3
        for perm in ((0, 2, 1), (1, 0, 2), (2, 1, 0)):
            assert np.allclose(d3, np.transpose(d3, perm), atol=1e-13)

    def test_jet_partial_drops_to_second_order(self):
        pts = np.array([0.5, 1.1])
        x, y = coordinate_jets(pts, 3)
        f = x * x * x * y
        fx = jet_partial(f, 0)
        assert fx.order == 2
        assert fx.value == pytest.approx(3 * pts[0] ** 2 * pts[1])
        assert fx.d2[0, 0] == pytest.approx(6 * pts[1])
        assert fx.d2[0, 1] == pytest.approx(6 * pts[0])
