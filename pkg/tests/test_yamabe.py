"""Level-set family, quotient functional, and energy-deficit scan checks.

Scan anchors are frozen from an independent scaled-coordinate quadrature
prototype (closed-form radial profiles reduced to a polar integral); the
module must reproduce them through its own assembly.  Closed-form constants
(powers of pi) are exact values of the extremal integrals.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from crlab import yamabe
from crlab.fieldcalc import FieldExpr, coordinate_jets, directional, surface_integral
from crlab.heisenberg import b_const, chart_dim, frame_component_jets, green_kernel, jl_extremal
from crlab.pseudohermitian import af_conformal_factor, build_model

RNG = np.random.default_rng(0xC0FFEE)
PI = math.pi

# Independent-prototype anchors at beta = 16, R = 4 (default sigma rules).
ANCHOR = {
    1: {
        "fit_coeff": 1.587668782457e01,
        "fit_exponent": 1.9620799845,
        "deficit_16": 5.486970701115e-02,
        "energy_16": 3.950327382054e01,
        "norm_16": 1.774242666879e00,
        "bulk_16": 3.938081949875e01,
        "crucial_16": 1.519083427042e-02,
        "boundary_16": 1.832176588732e-01,
        "boundary_16_bare": 1.782193866711e-01,
        "coupling_full": 4.0 * PI,
    },
    2: {
        "fit_coeff": 1.593986202358e01,
        "fit_exponent": 3.9000381670,
        "deficit_16": 1.652649613842e-04,
        "energy_16": 3.720753154313e02,
        "norm_16": 3.141593331313e00,
        "bulk_16": 3.720607927544e02,
        "crucial_16": 7.889769371664e-05,
        "boundary_16": 1.475937003239e-02,
        "boundary_16_bare": 1.475275104666e-02,
        "coupling_full": 16.0 * PI**3,
    },
}


def sample_box(n: int, count: int, rng) -> np.ndarray:
    """Seeded points in the containment sampling box for rank n."""
    r = 4.0
    z = rng.uniform(-2.0 * math.sqrt(r), 2.0 * math.sqrt(r), size=(2 * n, count))
    t = rng.uniform(-8.0 * r, 8.0 * r, size=(1, count))
    return np.concatenate([z, t])


class TestLevelSetSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            yamabe.LevelSetSpec(n=1, beta=0.0)
        with pytest.raises(ValueError):
            yamabe.LevelSetSpec(n=1, beta=10.0, R=-1.0)

    def test_epsilon_and_threshold(self):
        spec = yamabe.LevelSetSpec(n=1, beta=16.0, R=4.0)
        eps = 4.0 / 256.0
        assert abs(spec.epsilon - eps) < 1e-15
        assert abs(spec.threshold - (2.0 * eps + eps * eps)) < 1e-15
        spec2 = yamabe.LevelSetSpec(n=2, beta=16.0, R=4.0)
        assert abs(spec2.threshold - spec2.epsilon) < 1e-17

    def test_origin_outside(self):
        for n in (1, 2, 3):
            spec = yamabe.LevelSetSpec(n=n, beta=20.0, R=4.0)
            assert not yamabe.level_set_contains(spec, np.zeros(2 * n + 1))

    def test_membership_matches_extremal_level(self):
        # the far zone is exactly where the bubble dips below the cut value
        for n in (1, 2):
            spec = yamabe.LevelSetSpec(n=n, beta=12.0, R=4.0)
            pts = sample_box(n, 500, np.random.default_rng(7))
            inside = yamabe.level_set_contains(spec, pts)
            u = jl_extremal(n, spec.beta)(coordinate_jets(pts, 0)).value.real
            cut = spec.beta ** (-n) / (1.0 + spec.epsilon)
            assert np.array_equal(inside, u < cut)

    def test_exact_floor_relations(self):
        r = 4.0
        spec1 = yamabe.LevelSetSpec(n=1, beta=40.0, R=r)
        assert abs(spec1.exact_rho2_floor - r) < 1e-12
        assert abs(spec1.claimed_rho2_floor - r) < 1e-15
        spec2 = yamabe.LevelSetSpec(n=2, beta=40.0, R=r)
        # rank 2 sits exactly on the borderline; the true floor undershoots
        # the nominal R/2 by an O(epsilon) shell
        assert spec2.claimed_rho2_floor == r / 2.0
        assert spec2.exact_rho2_floor < spec2.claimed_rho2_floor
        assert spec2.exact_rho2_floor > spec2.claimed_rho2_floor * (1.0 - spec2.epsilon)
        spec3 = yamabe.LevelSetSpec(n=3, beta=40.0, R=r)
        assert spec3.exact_rho2_floor > spec3.claimed_rho2_floor


class TestContainment:
    def test_seeded_scan_no_violations(self):
        for n in (1, 2, 3):
            rows = yamabe.containment_scan(n, points=10000, seed=0xC0FFEE)
            assert len(rows) == 3
            for row in rows:
                assert row["inner_violations"] == 0
                assert row["outer_violations"] == 0
                assert row["points"] == 10000

    def test_inner_inclusion_is_exact(self):
        # any point with |z|^2 > R/n lies in the far zone, whatever t is
        for n in (1, 2, 3):
            spec = yamabe.LevelSetSpec(n=n, beta=2.5 * math.sqrt(4.0), R=4.0)
            rng = np.random.default_rng(3)
            pts = sample_box(n, 4000, rng)
            z2 = np.sum(pts[: 2 * n] ** 2, axis=0)
            sel = z2 > spec.inner_z2
            assert sel.sum() > 100
            assert yamabe.level_set_contains(spec, pts[:, sel]).all()

    def test_outer_floor_attained_on_waist(self):
        spec = yamabe.LevelSetSpec(n=1, beta=30.0, R=4.0)
        x = math.sqrt(spec.exact_rho2_floor)
        onset = np.array([x * (1.0 + 1e-9), 0.0, 0.0])
        offset = np.array([x * (1.0 - 1e-9), 0.0, 0.0])
        assert yamabe.level_set_contains(spec, onset)
        assert not yamabe.level_set_contains(spec, offset)


class TestBinomialBounds:
    def test_exact_low_rank_forms(self):
        out = yamabe.binomial_bounds(1, 16.0, 4.0)
        eps = 4.0 / 256.0
        assert abs(out["lower"] - 2.0 * eps) < 1e-16
        assert abs(out["value"] - (2.0 * eps + eps * eps)) < 1e-16
        assert abs(out["upper"] - 3.0 * eps) < 1e-16
        out2 = yamabe.binomial_bounds(2, 16.0, 4.0)
        assert out2["lower"] == out2["value"] == out2["upper"] == eps

    def test_bracketing_high_rank(self):
        for n in (3, 4, 5):
            for beta in (10.0 * 2.0, 20.0 * 2.0, 40.0 * 2.0):
                out = yamabe.binomial_bounds(n, beta, 4.0)
                assert out["lower"] <= out["value"] <= out["upper"]
                assert out["lower"] > 0.0

    def test_requires_wide_separation(self):
        with pytest.raises(ValueError):
            yamabe.binomial_bounds(2, 1.5, 4.0)


class TestTestFunction:
    def test_branches(self):
        spec = yamabe.LevelSetSpec(n=1, beta=10.0, R=4.0)
        phi = yamabe.TestFunction(spec)
        u = jl_extremal(1, 10.0)
        far = np.array([[8.0], [0.0], [0.0]])  # |z|^2 = 64 >> R
        vals, grad = yamabe.test_function(spec, far)
        assert abs(vals[0] - u(coordinate_jets(far, 0)).value.real[0]) < 1e-15
        near = np.array([[0.1], [0.0], [0.0]])
        vals, grad = yamabe.test_function(spec, near)
        assert abs(vals[0] - phi.plateau) < 1e-16
        assert np.all(grad[:, 0] == 0.0)

    def test_branch_agreement_on_level_set(self):
        for n in (1, 2):
            spec = yamabe.LevelSetSpec(n=n, beta=14.0, R=4.0)
            phi = yamabe.TestFunction(spec)
            # build on-set points from the polar parametrization
            sig = np.linspace(-1.4, 1.4, 17)
            c = np.cos(sig)
            lam2 = -c + np.sqrt(c * c + spec.threshold)
            r = spec.beta * np.sqrt(lam2 * c)
            t = spec.beta**2 * lam2 * np.sin(sig)
            pts = np.zeros((2 * n + 1, sig.size))
            pts[0] = r
            pts[2 * n] = t
            u = jl_extremal(n, spec.beta)(coordinate_jets(pts, 0)).value.real
            assert np.max(np.abs(u - phi.plateau)) < 1e-12 * phi.plateau

    def test_positive_and_lipschitz(self):
        spec = yamabe.LevelSetSpec(n=1, beta=12.0, R=4.0)
        rng = np.random.default_rng(11)
        pts = sample_box(1, 3000, rng)
        vals, _ = yamabe.test_function(spec, pts)
        assert np.all(vals > 0.0)
        # finite differences across random nearby pairs stay gradient-bounded
        base = sample_box(1, 400, np.random.default_rng(5))
        step = 1e-4 * rng.standard_normal(base.shape)
        va, _ = yamabe.test_function(spec, base)
        vb, _ = yamabe.test_function(spec, base + step)
        jets = jl_extremal(1, spec.beta)(coordinate_jets(base, 1))
        sup_grad = np.max(np.sqrt(np.sum(np.abs(jets.d1) ** 2, axis=0)))
        dist = np.sqrt(np.sum(step**2, axis=0))
        assert np.all(np.abs(vb - va) <= 4.0 * sup_grad * dist + 1e-15)

    def test_inside_gradient_matches_jets(self):
        for n in (1, 2):
            spec = yamabe.LevelSetSpec(n=n, beta=9.0, R=4.0)
            rng = np.random.default_rng(23)
            pts = sample_box(n, 300, rng)
            inside = yamabe.level_set_contains(spec, pts)
            pts = pts[:, inside]
            _, grad = yamabe.test_function(spec, pts)
            jets = jl_extremal(n, spec.beta)(coordinate_jets(pts, 1))
            coords = coordinate_jets(pts, 1)
            for a in range(1, 2 * n + 1):
                want = directional(jets, frame_component_jets(n, a, coords)).value.real
                assert np.max(np.abs(grad[a - 1] - want)) < 1e-10 * np.max(np.abs(want))


class TestExtremalConstants:
    def test_closed_forms(self):
        for n in (1, 2, 3):
            out = yamabe.extremal_constants(n)
            s_exact = PI ** (n + 1)
            assert abs(out["norm_power"] / s_exact - 1.0) < 1e-10
            assert abs(out["energy"] / (2 * n * (n + 1) * s_exact) - 1.0) < 1e-10
            assert abs(out["quotient"] / (2 * n * (n + 1) * PI) - 1.0) < 1e-10
            assert abs(out["extremal_norm"] / PI ** (n / 2.0) - 1.0) < 1e-10
        assert abs(yamabe.extremal_constants(1)["coupling"] / (4 * PI) - 1.0) < 1e-10
        assert abs(yamabe.extremal_constants(2)["coupling"] / (16 * PI**3) - 1.0) < 1e-10
        assert abs(yamabe.extremal_constants(3)["coupling"] / (384 * PI**3) - 1.0) < 1e-10


class TestEnergyQuotient:
    def test_scale_invariance(self):
        u = jl_extremal(1, 1.0)
        scaled = FieldExpr(3, lambda c: u(c) * 3.7, name="scaled")
        quad = yamabe.QuadratureSpec(n=1, radius=12.0, n_radial=40, n_polar=24, n_angle=6)
        model = build_model("flat", 1)
        q1 = yamabe.energy_quotient(u, model, quad)
        q2 = yamabe.energy_quotient(scaled, model, quad)
        assert abs(q1 - q2) < 1e-10 * abs(q1)

    def test_dilation_invariance_whole_chart(self):
        # fixed quadrature, moving bubble: agreement is a real covariance check
        for n in (1, 2):
            quad = yamabe.QuadratureSpec(
                n=n, radius=None, n_radial=48, n_polar=24, n_angle=6
            )
            model = build_model("flat", n)
            qs = [
                yamabe.energy_quotient(jl_extremal(n, b), model, quad)
                for b in (1.0, 2.0)
            ]
            assert abs(qs[0] - qs[1]) < 1e-8 * abs(qs[0])
            assert abs(qs[0] - 2 * n * (n + 1) * PI) < 1e-8 * abs(qs[0])

    def test_ball_reference_near_exact_value(self):
        quad = yamabe.QuadratureSpec(n=1, radius=50.0, n_radial=64, n_polar=32, n_angle=6)
        q = yamabe.energy_quotient(jl_extremal(1, 1.0), build_model("flat", 1), quad)
        assert 0.0 < q < 4.0 * PI
        assert abs(q - 4.0 * PI) < 3e-3 * 4.0 * PI  # truncation-limited

    def test_vanishing_denominator(self):
        zero = FieldExpr(3, lambda c: c[0] * 0.0, name="zero")
        quad = yamabe.QuadratureSpec(n=1, radius=5.0, n_radial=16, n_polar=12, n_angle=4)
        with pytest.raises(ValueError):
            yamabe.energy_quotient(zero, build_model("flat", 1), quad)

    def test_conformal_potential_shifts_numerator(self):
        u = jl_extremal(1, 1.0)
        quad = yamabe.QuadratureSpec(n=1, radius=9.0, inner=0.5, n_radial=32, n_polar=16, n_angle=4)
        flat = yamabe.energy_quotient(u, build_model("flat", 1), quad)
        # the harmonic decay factor has zero potential: quotient unchanged
        harmonic = yamabe.energy_quotient(
            u, build_model("conformal", 1, af_conformal_factor(1, 1.0)), quad
        )
        assert abs(harmonic - flat) < 1e-12 * abs(flat)
        # the odd tail is not harmonic, so the potential term kicks in
        bent = yamabe.energy_quotient(
            u, build_model("conformal", 1, af_conformal_factor(1, 1.0, 0.5)), quad
        )
        assert math.isfinite(bent)
        assert abs(bent - flat) > 1e-6


class TestEnergyScan:
    def test_anchor_values(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 1.0)
            a = ANCHOR[n]
            assert abs(rep.betas[0] - 16.0) < 1e-12
            assert abs(rep.fit_coeff / a["fit_coeff"] - 1.0) < 1e-6
            assert abs(rep.fit_exponent - a["fit_exponent"]) < 1e-3
            assert abs(rep.deficit[0] / a["deficit_16"] - 1.0) < 1e-6
            assert abs(rep.E[0] / a["energy_16"] - 1.0) < 1e-9
            assert abs(rep.norm_s[0] / a["norm_16"] - 1.0) < 1e-9
            assert abs(rep.bulk[0] / a["bulk_16"] - 1.0) < 1e-9
            assert abs(rep.crucial[0] / a["crucial_16"] - 1.0) < 1e-6
            assert abs(rep.boundary[0] / a["boundary_16"] - 1.0) < 1e-6
            assert abs(rep.Y_num - 2 * n * (n + 1) * PI) < 1e-10
            assert abs(rep.extremal_norm - PI ** (n / 2.0)) < 1e-10

    def test_divergence_identity_closes(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 1.0)
            scale = rep.E[0]
            assert max(abs(r) for r in rep.identity_residual) < 1e-9 * scale

    def test_deficit_positive_and_decaying(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 1.0)
            assert all(d > 0.0 for d in rep.deficit)
            assert all(a > b for a, b in zip(rep.deficit, rep.deficit[1:]))
            assert 2 * n * 0.9 < rep.fit_exponent < 2 * n * 1.1

    def test_crucial_term_sign_and_exponent(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 1.0)
            assert all(c > 0.0 for c in rep.crucial)
            slope, _ = np.polyfit(np.log(rep.betas), np.log(rep.crucial), 1)
            assert abs(-slope - 2 * n) < 0.2 * n
            neg = yamabe.energy_scan(n, -1.0)
            assert all(c < 0.0 for c in neg.crucial)

    def test_boundary_decay_exponent(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 1.0)
            mags = np.abs(rep.boundary)
            slope, _ = np.polyfit(np.log(rep.betas), np.log(mags), 1)
            assert -slope >= 2 * n + 0.5

    def test_bulk_dominated_by_quotient_bound(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 1.0)
            for m in rep.bulk_margin:
                assert m > 0.0

    def test_coefficient_linear_in_amplitude(self):
        for n in (1, 2):
            slopes = [
                yamabe.energy_scan(n, a).fit_coeff / a for a in (0.5, 1.0, 2.0)
            ]
            mid = slopes[1]
            assert abs(slopes[0] / mid - 1.0) < 0.01
            assert abs(slopes[2] / mid - 1.0) < 0.01
            neg = yamabe.energy_scan(n, -1.0).fit_coeff
            assert abs(neg / mid + 1.0) < 0.01

    def test_zero_amplitude_bounded_by_truncation(self):
        for n in (1, 2):
            rep = yamabe.energy_scan(n, 0.0)
            ref = yamabe.energy_scan(n, 1.0).fit_coeff
            assert abs(rep.fit_coeff) < 1e-3 * abs(ref)
            for d, bound in zip(rep.deficit, rep.truncation_bound):
                assert d <= 1e-12 * rep.E[0]
                assert d >= -bound * (1.0 + 1e-9)

    def test_report_invariants_and_rows(self):
        rep = yamabe.energy_scan(2, 1.0)
        assert all(e > 0 for e in rep.E)
        assert all(v > 0 for v in rep.norm_s)
        assert rep.radial_cutoff == math.inf
        header = yamabe.EnergyReport.header()
        assert header == [
            "n", "A_p", "beta", "E", "norm_s", "bulk", "crucial",
            "boundary", "D", "fit_exponent", "fit_coeff",
        ]
        rows = rep.rows()
        assert len(rows) == len(rep.betas)
        assert rows[0][0] == 2 and rows[0][1] == 1.0
        assert rows[0][8] == rep.deficit[0]

    def test_workers_and_reruns_identical(self):
        one = yamabe.energy_scan(1, 1.0, workers=1)
        two = yamabe.energy_scan(1, 1.0, workers=3)
        assert one.deficit == two.deficit
        assert one.rows() == two.rows()

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            yamabe.energy_scan(1, 1.0, betas=(16.0, 32.0, 64.0))
        with pytest.raises(ValueError):
            yamabe.energy_scan(1, 1.0, betas=(64.0, 32.0, 16.0, 8.0, 4.0))
        with pytest.raises(ValueError):
            yamabe.energy_scan(1, 1.0, betas=(0.5, 1.0, 2.0, 4.0, 8.0))
        with pytest.raises(ValueError):
            yamabe.energy_scan(3, 1.0)  # no packaged decay coefficient

    def test_generic_rank_identity(self):
        betas = tuple(8.0 * 2.0 * 2 ** (k / 2.0) for k in range(5))
        rep = yamabe.energy_scan(3, 1.0, betas=betas, green_coefficient=1.0)
        assert max(abs(r) for r in rep.identity_residual) < 1e-8 * rep.E[0]
        assert all(math.isfinite(e) for e in rep.E)

    def test_default_grid(self):
        grid = yamabe.default_beta_grid(4.0)
        assert len(grid) == 9
        assert abs(grid[0] - 16.0) < 1e-12
        assert abs(grid[-1] - 256.0) < 1e-12
        ratios = [b / a for a, b in zip(grid, grid[1:])]
        assert max(abs(r - math.sqrt(2.0)) for r in ratios) < 1e-12


class TestBoundaryFluxCrossCheck:
    def test_polar_reduction_matches_surface_quadrature(self):
        # independent path: flux 2n-form over the oriented level-set surface
        spec = yamabe.LevelSetSpec(n=1, beta=16.0, R=4.0)
        u = jl_extremal(1, 16.0)
        surf = yamabe.level_set_surface(spec)
        form = yamabe.weighted_flux_form(1, u, weight=u)
        flux = surface_integral(form, surf, n_polar=64, n_angle=8).real
        direct = -(b_const(1) / 2.0) * flux
        assert abs(direct / ANCHOR[1]["boundary_16_bare"] - 1.0) < 1e-6
        assert (
            abs(yamabe.boundary_flux(1, 16.0, 4.0, 0.0) / direct - 1.0) < 1e-6
        )

    def test_weighted_version_with_decay_profile(self):
        spec = yamabe.LevelSetSpec(n=1, beta=16.0, R=4.0)
        u = jl_extremal(1, 16.0)
        k = green_kernel(1)
        g0 = 1.0 / (2.0 * PI)

        def wfn(coords):
            h = k(coords) * g0 + 1.0
            return u(coords) * h * h

        weight = FieldExpr(3, wfn, domain=k.domain, name="u-h2")
        surf = yamabe.level_set_surface(spec)
        form = yamabe.weighted_flux_form(1, u, weight=weight)
        flux = surface_integral(form, surf, n_polar=64, n_angle=8).real
        direct = -(b_const(1) / 2.0) * flux
        assert abs(direct / ANCHOR[1]["boundary_16"] - 1.0) < 1e-6

    def test_rank_two_surface(self):
        spec = yamabe.LevelSetSpec(n=2, beta=16.0, R=4.0)
        u = jl_extremal(2, 16.0)
        surf = yamabe.level_set_surface(spec)
        form = yamabe.weighted_flux_form(2, u, weight=u)
        flux = surface_integral(form, surf, n_polar=48, n_angle=8).real
        direct = -(b_const(2) / 2.0) * flux
        assert abs(direct / ANCHOR[2]["boundary_16_bare"] - 1.0) < 1e-6


class TestAxialAgainstJets:
    def test_gradient_square_closed_form(self):
        # the scan's radial-profile integrands against jet evaluation
        for n in (1, 2):
            beta = 13.0
            sig = np.array([-1.1, -0.3, 0.2, 0.9])
            lam = np.array([0.4, 0.8, 1.7, 2.6])
            c, sn = np.cos(sig), np.sin(sig)
            pts = np.zeros((2 * n + 1, sig.size))
            pts[0] = beta * lam * np.sqrt(c)
            pts[2 * n] = beta**2 * lam**2 * sn
            u = jl_extremal(n, beta)
            coords = coordinate_jets(pts, 1)
            jets = u(coords)
            grad2 = np.zeros(sig.size)
            for a in range(1, 2 * n + 1):
                da = directional(jets, frame_component_jets(n, a, coords)).value.real
                grad2 += 0.5 * da * da
            lam2 = lam * lam
            q = 1.0 + 2.0 * lam2 * c + lam2 * lam2
            want = n * n * lam2 * c * q ** (-(n + 1.0)) * beta ** (-2.0 * (n + 1.0))
            assert np.max(np.abs(grad2 - want)) < 1e-12 * np.max(np.abs(want))
