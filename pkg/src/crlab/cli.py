"""Command-line driver exposing every verification suite as a subcommand.

Exit codes: 0 when every assertion of the requested command holds, 1 when
any fails (each failure is listed on standard error), 2 on bad flags or
usage.  Reports go to standard output or --out.  CSV output carries a
header row, '.' decimal separator, full-precision floats (%.17g) and no
quoting; the same flags and seed give byte-identical CSV across runs and
across --workers values.  JSON output is a single document that echoes the
resolved configuration.  `mass` defaults to JSON (its natural report is a
single extrapolation record), everything else to CSV.

Randomness is drawn from numpy Generators seeded as (seed, stream-tag), so
every subcommand sees its own reproducible stream regardless of ordering.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import clifford, mass, spinconn, yamabe
from .fieldcalc import gauss_legendre
from .heisenberg import green_constant, jl_extremal, yamabe_ratio
from .pseudohermitian import (
    af_conformal_factor,
    build_model,
    curvature,
    scalar_curvature_oracle,
    solve_connection,
)

__all__ = ["dispatch", "main"]

DEFAULT_SEED = 0xC0FFEE

# Light whole-chart quadratures for the scale-invariant quotient; the
# integrand is smooth after the tail inversion, so these are near exact.
QUOTIENT_GRID = {1: (40, 20, 6), 2: (32, 16, 4)}
SPHERE_GRID = {1: (48, 12), 2: (24, 8), 3: (12, 6)}
SPHERE_TOL = {1: 1e-6, 2: 1e-6, 3: 1e-4}


@dataclass(frozen=True)
class Check:
    label: str
    passed: bool
    detail: str


@dataclass
class Report:
    command: str
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    summary: list[tuple[str, float]] = field(default_factory=list)
    extra: dict | None = None

    def check(self, label: str, passed: bool, detail: str) -> None:
        self.checks.append(Check(label, bool(passed), detail))


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _jsonable(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        out = float(value)
        return out if math.isfinite(out) else None
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _jsonable(value.real), "im": _jsonable(value.imag)}
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag])


def _sample_points(n: int, count: int, rng: np.random.Generator,
                   lo: float, hi: float) -> np.ndarray:
    dim = 2 * n + 1
    mags = rng.uniform(lo, hi, size=(dim, count))
    signs = np.where(rng.random(size=(dim, count)) < 0.5, -1.0, 1.0)
    return mags * signs


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------- commands


def run_clifford(ns, tol: float, seed: int) -> Report:
    rep = Report("clifford-check", ("n", "spinor_dim", "anticommutator_defect",
                                    "even_norm", "odd_norm"))
    for n in ns:
        dim = clifford.spinor_dim(n)
        eye = np.eye(dim)
        gens = [clifford.generator(n, a) for a in range(1, 2 * n + 1)]
        defect = 0.0
        for a, ga in enumerate(gens):
            for b, gb in enumerate(gens):
                target = -2.0 * eye if a == b else 0.0
                defect = max(defect, float(np.max(np.abs(ga @ gb + gb @ ga - target))))
        even = clifford.key_operator_norm(n, "even")
        odd = clifford.key_operator_norm(n, "odd")
        rep.rows.append((n, dim, defect, even, odd))
        rep.check(f"anticommutators exact at rank {n}", defect == 0.0,
                  f"max defect {defect:.3e}")
        if n == 2:
            k = clifford.key_operator(2)
            basis = np.eye(4, dtype=complex)
            wanted = (np.zeros(4), 2.0 * basis[2], -2.0 * basis[1], np.zeros(4))
            four = max(float(np.max(np.abs(k @ basis[i] - wanted[i])))
                       for i in range(4))
            rep.check("pair operator acts exactly on the rank-2 basis",
                      four == 0.0, f"max defect {four:.3e}")
            rep.check("even restriction vanishes at rank 2", even == 0.0,
                      f"norm {even:.3e}")
            rep.summary.append(("even_norm_rank_2", even))
        if n in (1, 3):
            rep.check(f"even operator norm exceeds 0.5 at rank {n}", even > 0.5,
                      f"norm {even:.6g}")
    rng = _rng(seed, 1)
    worst = 0.0
    for _ in range(100):
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi = clifford.grade_projection(psi, "even")
        norm2 = float(np.vdot(psi, psi).real)
        val = clifford.quartic_form(psi)
        worst = max(worst, abs(val - norm2) / (norm2 + 1.0))
    rep.check("quartic form equals squared norm on 100 even spinors",
              worst <= tol, f"max relative defect {worst:.3e}")
    rep.summary.append(("quartic_max_relative_defect", worst))
    return rep


def run_alpha(max_n: int, tol: float) -> Report:
    rep = Report("alpha", ("n", "recursion", "quadrature", "abs_gap"))
    nodes, weights = gauss_legendre(80, -math.pi / 2.0, math.pi / 2.0)
    worst = 0.0
    for k in range(1, max_n + 1):
        rec = mass.alpha(k)
        quad = float(weights @ np.cos(nodes) ** k)
        gap = abs(rec - quad)
        worst = max(worst, gap)
        rep.rows.append((k, rec, quad, gap))
    rep.check("first constant equals 2", abs(mass.alpha(1) - 2.0) <= 1e-12,
              f"alpha(1) = {mass.alpha(1)!r}")
    rep.check("second constant equals pi/2",
              abs(mass.alpha(2) - math.pi / 2.0) <= 1e-12,
              f"alpha(2) = {mass.alpha(2)!r}")
    rep.check(f"recursion matches quadrature through rank {max_n}",
              worst <= tol, f"max gap {worst:.3e}")
    rep.summary.append(("max_recursion_gap", worst))
    return rep


def run_sphere(ns, tol: float | None) -> Report:
    rep = Report("sphere-identity", ("n", "quadrature", "closed_form", "rel_gap"))
    for n in ns:
        n_polar, n_angle = SPHERE_GRID[n]
        out = mass.unit_sphere_identity(n, n_polar=n_polar, n_angle=n_angle)
        quad = float(np.real(out["quadrature"]))
        rep.rows.append((n, quad, out["closed_form"], out["rel_gap"]))
        bound = tol if tol is not None else SPHERE_TOL[n]
        rep.check(f"unit-sphere identity holds at rank {n}",
                  out["rel_gap"] <= bound, f"rel gap {out['rel_gap']:.3e}")
        rep.summary.append((f"rel_gap_rank_{n}", out["rel_gap"]))
    return rep


def run_flat(ns, lambdas, tol: float, seed: int) -> Report:
    rep = Report("flat-check", ("item", "n", "lambda", "value"))
    for n in ns:
        model = build_model("flat", n)
        pts = _sample_points(n, 100, _rng(seed, 2), 0.25, 0.9)
        data = solve_connection(model, pts, order=0)
        cmax = max(float(np.max(np.abs(arr))) for arr in
                   (data.gamma_anti, data.gamma_hol, data.gamma_t, data.torsion_a))
        rep.rows.append(("connection", n, 0.0, cmax))
        rep.check(f"connection coefficients vanish at rank {n} (100 points)",
                  cmax <= tol, f"max coefficient {cmax:.3e}")
        rep.summary.append((f"connection_max_rank_{n}", cmax))
        for lam in lambdas:
            # roundoff, not truncation, limits this residue; (32, 8) keeps the
            # compensated sum under 1e-9 out to radius 25
            val = abs(complex(mass.pmass_quadrature(model, lam,
                                                    n_polar=32, n_angle=8)))
            rep.rows.append(("pmass", n, lam, val))
            rep.check(f"p-mass vanishes at rank {n} radius {lam:g}",
                      val <= 1e-9, f"|quadrature| {val:.3e}")
    return rep


def run_conformal(ns, tol: float, seed: int) -> Report:
    rep = Report("conformal-check",
                 ("n", "tail", "max_gap", "oracle_scale", "scaled_gap"))
    for n in ns:
        pts = _sample_points(n, 200, _rng(seed, 3), 0.5, 1.5)
        cases = (("harmonic", af_conformal_factor(n, 1.0)),
                 ("odd", af_conformal_factor(n, 1.0, 0.5)))
        for tail, factor in cases:
            model = build_model("conformal", n, factor)
            out = curvature(model, pts)
            want = scalar_curvature_oracle(model, pts)
            scale = float(np.max(np.abs(want))) + 1.0
            gap = float(np.max(np.abs(np.real(out["scalar"]) - want)))
            rep.rows.append((n, tail, gap, scale, gap / scale))
            rep.check(f"curvature scalar matches oracle ({tail} tail) at rank {n}",
                      gap <= tol * scale, f"gap {gap:.3e} scale {scale:.3g}")
    return rep


def run_weitzenbock(n: int, tol: float, seed: int, fields: int) -> Report:
    rep = Report("weitzenbock",
                 ("n", "background", "field", "relative", "reduced_relative"))
    flat = build_model("flat", n)
    pts = _sample_points(n, 5, _rng(seed, 4), 0.3, 0.9)
    rng = _rng(seed, 5)
    worst = 0.0
    for k in range(fields):
        psi = spinconn.polynomial_spinor(n, rng, t_dependent=True)
        res = spinconn.weitzenbock_residual(flat, psi, pts)
        worst = max(worst, res["relative"])
        rep.rows.append((n, "flat", k, res["relative"], res["reduced_relative"]))
    rep.check(f"full identity closes on {fields} seeded fields at rank {n}",
              worst <= tol, f"max relative residual {worst:.3e}")
    rep.summary.append(("flat_max_relative", worst))
    if n == 1:
        psi = spinconn.polynomial_spinor(1, _rng(seed, 6), parity="even",
                                         t_dependent=True)
        res = spinconn.weitzenbock_residual(flat, psi, pts)
        rep.rows.append((1, "flat", fields, res["relative"],
                         res["reduced_relative"]))
        rep.check("reduced identity fails at rank 1 (expected at odd rank)",
                  res["reduced_relative"] > 1e-3,
                  f"reduced residual {res['reduced_relative']:.3e}")
        rep.summary.append(("reduced_relative_rank_1", res["reduced_relative"]))
    else:
        conf = build_model("conformal", n, af_conformal_factor(n, 0.35))
        pts_c = _sample_points(n, 5, _rng(seed, 7), 0.4, 1.0)
        rng_c = _rng(seed, 6)
        worst_red = 0.0
        for k in range(5):
            psi = spinconn.polynomial_spinor(n, rng_c, parity="even",
                                             t_dependent=True)
            res = spinconn.weitzenbock_residual(conf, psi, pts_c)
            worst_red = max(worst_red, res["reduced_relative"])
            rep.rows.append((n, "conformal", k, res["relative"],
                             res["reduced_relative"]))
        rep.check("reduced identity closes on even fields at rank 2",
                  worst_red <= 1e-7, f"max reduced residual {worst_red:.3e}")
        rep.summary.append(("reduced_max_relative", worst_red))
    return rep


def run_mass(model: str, n: int, coeff: float, lambdas, tol: float,
             grid: tuple[int, int]) -> Report:
    rep = Report("mass", ("n", "lambda", "quad_re", "quad_im",
                          "closed_form", "rel_gap"))
    if model == "flat":
        flat = build_model("flat", n)
        for lam in lambdas:
            val = complex(mass.pmass_quadrature(flat, lam,
                                                n_polar=grid[0], n_angle=grid[1]))
            rep.rows.append((n, lam, val.real, val.imag, 0.0, abs(val)))
            rep.check(f"flat p-mass vanishes at radius {lam:g}",
                      abs(val) <= 1e-9, f"|quadrature| {abs(val):.3e}")
        return rep
    record = mass.mass_report(n, coeff, radii=tuple(lambdas),
                              n_polar=grid[0], n_angle=grid[1])
    for row in record.rows():
        rep.rows.append((row["n"], row["Lambda"], row["m_quad_re"],
                         row["m_quad_im"], row["m_closed"], row["rel_gap"]))
    rep.check("extrapolated quadrature matches measured-constant closed form",
              record.rel_gap <= tol, f"rel gap {record.rel_gap:.3e}")
    rep.summary.append(("extrapolated", record.extrapolated))
    rep.summary.append(("closed_form", record.closed_form))
    rep.summary.append(("rel_gap", record.rel_gap))
    rep.extra = {"report": {
        "n": record.n, "coeff": record.coeff,
        "lambdas": _jsonable(record.lambdas),
        "quadrature": _jsonable(record.quadrature),
        "extrapolated": record.extrapolated,
        "closed_form": record.closed_form,
        "rel_gap": record.rel_gap,
    }}
    return rep


def run_real_mass(coeff: float, lambdas, tol: float,
                  grid: tuple[int, int]) -> Report:
    rep = Report("real-mass", ("lambda", "quadrature"))
    out = mass.real_mass_report(2, coeff, radii=tuple(lambdas),
                                n_polar=grid[0], n_angle=grid[1])
    for lam, val in zip(out["radii"], out["per_radius"]):
        rep.rows.append((lam, float(np.real(val))))
    rep.check("quadrature matches the audited closed form",
              out["rel_gap_audited"] <= tol,
              f"rel gap {out['rel_gap_audited']:.3e}")
    rep.check("imaginary part negligible",
              out["imag_max"] <= 1e-8 * abs(out["value"]),
              f"max imaginary part {out['imag_max']:.3e}")
    rep.summary.extend([
        ("value", out["value"]),
        ("closed_form_audited", out["closed_form_audited"]),
        ("rel_gap_audited", out["rel_gap_audited"]),
        ("closed_form_reference", out["closed_form"]),
        ("rel_gap_reference", out["rel_gap"]),
    ])
    return rep


def run_cross_term(coeff: float, lambdas, tol: float,
                   grid: tuple[int, int]) -> Report:
    rep = Report("cross-term", ("lambda", "quadrature"))
    out = mass.cross_term_report(coeff, radii=tuple(lambdas),
                                 n_polar=grid[0], n_angle=grid[1])
    real = mass.real_mass_report(2, coeff, radii=tuple(lambdas),
                                 n_polar=grid[0], n_angle=grid[1])
    for lam, val in zip(out["radii"], out["per_radius"]):
        rep.rows.append((lam, float(np.real(val))))
    rep.check("boundary sum matches the bracket closed form",
              out["rel_gap"] <= tol, f"rel gap {out['rel_gap']:.3e}")
    assembly = 0.5 * real["value"] + out["value"]
    audited = 0.5 * real["closed_form_audited"] + out["closed_form"]
    rep.check("half real mass plus cross term matches the audited bracket",
              _rel(assembly, audited) <= tol,
              f"assembly {assembly:.6g} vs {audited:.6g}")
    reference = mass.witten_constant(coeff)
    rep.summary.extend([
        ("value", out["value"]),
        ("closed_form", out["closed_form"]),
        ("rel_gap", out["rel_gap"]),
        ("assembly", assembly),
        ("audited_bracket", audited),
        ("reference_bracket", reference),
        ("assembly_reference_rel_gap", _rel(assembly, reference)),
    ])
    return rep


def run_green(n: int, lambdas, tol: float) -> Report:
    rep = Report("green-constant", ("lambda", "constant"))
    out = green_constant(n, list(lambdas))
    for lam, val in zip(lambdas, out["per_radius"]):
        rep.rows.append((lam, val))
    if n == 1:
        rep.check("flux constant equals 1 at rank 1",
                  abs(out["a_n"] - 1.0) <= tol, f"a = {out['a_n']!r}")
    elif n == 2:
        target = 1.0 / (3.0 * math.pi ** 2)
        rep.check("flux constant matches 1/(3 pi^2) at rank 2",
                  _rel(out["a_n"], target) <= 1e-6, f"a = {out['a_n']!r}")
    rep.check("flux constant stable across radii",
              out["spread"] <= 1e-6 * abs(out["a_n"]),
              f"spread {out['spread']:.3e}")
    rep.summary.append(("constant", out["a_n"]))
    rep.summary.append(("spread", out["spread"]))
    return rep


def run_yamabe_residual(ns, betas, tol: float, seed: int) -> Report:
    rep = Report("yamabe-residual",
                 ("n", "beta", "ratio_mean", "ratio_stdev", "quotient"))
    for n in ns:
        pts = _rng(seed, 8).normal(scale=1.2, size=(2 * n + 1, 40))
        flat = build_model("flat", n)
        n_radial, n_polar, n_angle = QUOTIENT_GRID[n]
        quad = yamabe.QuadratureSpec(n=n, radius=None, n_radial=n_radial,
                                     n_polar=n_polar, n_angle=n_angle)
        means, quotients = [], []
        for beta in betas:
            out = yamabe_ratio({"n": n, "beta": beta}, pts)
            q = yamabe.energy_quotient(jl_extremal(n, beta), flat, quad)
            means.append(out["mean"])
            quotients.append(q)
            rep.rows.append((n, beta, out["mean"], out["stdev"], q))
            rep.check(f"curvature ratio constant at rank {n} width {beta:g}",
                      out["stdev"] <= tol * abs(out["mean"]),
                      f"stdev/mean {out['stdev'] / abs(out['mean']):.3e}")
        spread = max(means) - min(means)
        rep.check(f"curvature ratio width-invariant at rank {n}",
                  spread <= tol * abs(means[0]),
                  f"relative spread {spread / abs(means[0]):.3e}")
        rep.check(f"curvature ratio matches 2n(n+1) at rank {n}",
                  _rel(means[0], 2.0 * n * (n + 1)) <= tol,
                  f"mean {means[0]!r}")
        qspread = max(quotients) - min(quotients)
        rep.check(f"energy quotient width-independent at rank {n}",
                  qspread <= 1e-4 * abs(quotients[0]),
                  f"relative spread {qspread / abs(quotients[0]):.3e}")
        rep.summary.append((f"quotient_rank_{n}", quotients[0]))
    return rep


def run_levelset(ns, R: float, seed: int, betas=None) -> Report:
    rep = Report("levelset-check", ("item", "n", "beta", "v1", "v2", "v3"))
    for n in ns:
        scan = yamabe.containment_scan(n, betas=betas, R=R, seed=seed)
        bad = 0
        for row in scan:
            bad += row["inner_violations"] + row["outer_violations"]
            rep.rows.append(("containment", n, row["beta"],
                             row["inner_violations"], row["outer_violations"],
                             row["points"]))
        rep.check(f"containments hold at rank {n} (30000 points)", bad == 0,
                  f"{bad} violations")
        grid = yamabe.default_beta_grid(R)
        margin = math.inf
        for beta in grid:
            b = yamabe.binomial_bounds(n, beta, R)
            margin = min(margin, b["value"] - b["lower"], b["upper"] - b["value"])
            rep.rows.append(("bracket", n, beta, b["lower"], b["value"],
                             b["upper"]))
        rep.check(f"binomial bracket holds on the width grid at rank {n}",
                  margin >= 0.0, f"worst margin {margin:.3e}")
        spec = yamabe.LevelSetSpec(n=n, beta=grid[0], R=R)
        tf = yamabe.TestFunction(spec)
        side = 2.0 * math.sqrt(R)
        rng = _rng(seed, 9)
        z = rng.uniform(-side, side, size=(2 * n, 2000))
        t = rng.uniform(-8.0 * R, 8.0 * R, size=(1, 2000))
        pts = np.concatenate([z, t])
        inside = yamabe.level_set_contains(spec, pts)
        grad = tf.horizontal_gradient(pts)
        core_max = float(np.max(np.abs(grad[:, ~inside]))) if np.any(~inside) else 0.0
        tail_max = float(np.max(np.abs(grad[:, inside]))) if np.any(inside) else 0.0
        rep.check(f"gradient vanishes exactly on the capped core at rank {n}",
                  core_max == 0.0 and tail_max > 0.0,
                  f"core {core_max:.3e} tail {tail_max:.3e}")
    return rep


def run_energy_scan(n: int, coeff: float, betas, R: float, workers: int,
                    tol: float | None) -> tuple[Report, yamabe.EnergyReport]:
    record = yamabe.energy_scan(n, coeff, betas=betas, R=R, workers=workers)
    rep = Report("energy-scan", tuple(yamabe.EnergyReport.header()))
    rep.rows = [tuple(row) for row in record.rows()]
    window = tol if tol is not None else 0.1
    if coeff > 0.0:
        rep.check("deficit positive on the width grid",
                  all(d > 0.0 for d in record.deficit),
                  f"min deficit {min(record.deficit):.3e}")
    if coeff != 0.0 and math.isfinite(record.fit_exponent):
        rep.check(f"fitted decay exponent within 10 percent of {2 * n}",
                  abs(record.fit_exponent - 2.0 * n) <= window * 2.0 * n,
                  f"exponent {record.fit_exponent:.4f}")
    worst_residual = max(record.identity_residual)
    rep.check("energy identity residual small",
              worst_residual <= 1e-8 * record.E[0],
              f"max residual {worst_residual:.3e}")
    rep.check("bulk terms dominate on the width grid",
              all(m > 0.0 for m in record.bulk_margin),
              f"min margin {min(record.bulk_margin):.3e}")
    logs = np.log(np.abs(np.asarray(record.boundary)))
    slope = float(np.polyfit(np.log(record.betas), logs, 1)[0])
    rep.check(f"boundary flux decays at least as width^-{2 * n + 0.5:g}",
              -slope >= 2.0 * n + 0.5, f"exponent {-slope:.3f}")
    rep.summary.extend([
        ("fit_coeff", record.fit_coeff),
        ("fit_exponent", record.fit_exponent),
        ("boundary_exponent", -slope),
        ("reference_quotient", record.Y_num),
        ("deficit_first", record.deficit[0]),
    ])
    rep.extra = {"report": _jsonable(record.as_dict())}
    return rep, record


def run_all(seed: int, workers: int) -> list[Report]:
    reports = [
        run_clifford((1, 2, 3, 4), 1e-12, seed),
        run_alpha(8, 1e-10),
        run_sphere((1, 2, 3), None),
        run_flat((1, 2), (1.0, 5.0, 25.0), 1e-10, seed),
        run_conformal((1, 2), 1e-6, seed),
        run_weitzenbock(2, 1e-8, seed, 50),
        run_weitzenbock(1, 1e-8, seed, 50),
        run_mass("conformal", 2, 1.0, (5.0, 7.0, 9.0), 0.01, (16, 6)),
        run_real_mass(1.0, (5.0, 7.0, 9.0), 1e-4, (16, 6)),
        run_cross_term(1.0, (5.0, 7.0, 9.0), 0.02, (16, 6)),
        run_green(1, (1.0, 2.0, 4.0), 1e-4),
        run_yamabe_residual((1, 2), (1.0, 2.0), 1e-8, seed),
        run_levelset((1, 2, 3), 4.0, seed),
    ]
    scans: dict[float, yamabe.EnergyReport] = {}
    for coeff in (0.5, 1.0, 2.0):
        rep, record = run_energy_scan(2, coeff, None, 4.0, workers, None)
        rep.command = f"energy-scan-A={coeff:g}"
        scans[coeff] = record
        reports.append(rep)
    rep, _ = run_energy_scan(1, 1.0, None, 4.0, workers, None)
    rep.command = "energy-scan-rank-1"
    reports.append(rep)
    linear = Report("energy-linearity", ("A_p", "fit_coeff", "ratio_to_linear"))
    base = scans[1.0].fit_coeff
    for coeff in (0.5, 1.0, 2.0):
        ratio = scans[coeff].fit_coeff / (coeff * base)
        linear.rows.append((coeff, scans[coeff].fit_coeff, ratio))
        if coeff != 1.0:
            linear.check(f"deficit coefficient linear at amplitude {coeff:g}",
                         abs(ratio - 1.0) <= 0.1, f"ratio {ratio:.4f}")
    reports.append(linear)
    return reports


# ------------------------------------------------------------------ output


def _render_csv(reports: list[Report], command: str) -> str:
    if command == "all":
        lines = ["command,metric,value"]
        for rep in reports:
            for label, value in rep.summary:
                lines.append(f"{rep.command},{label},{_fmt(value)}")
            for c in rep.checks:
                lines.append(f"{rep.command},check: {c.label},{1 if c.passed else 0}")
        return "\n".join(lines) + "\n"
    rep = reports[0]
    lines = [",".join(rep.header)]
    for row in rep.rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _render_json(reports: list[Report], command: str, config: dict) -> str:
    def one(rep: Report) -> dict:
        doc = {
            "command": rep.command,
            "header": list(rep.header),
            "rows": [_jsonable(list(row)) for row in rep.rows],
            "checks": [{"label": c.label, "passed": c.passed, "detail": c.detail}
                       for c in rep.checks],
            "summary": {label: _jsonable(value) for label, value in rep.summary},
        }
        if rep.extra:
            doc.update(_jsonable(rep.extra))
        return doc

    if command == "all":
        doc = {"command": "all", "config": _jsonable(config),
               "reports": [one(rep) for rep in reports]}
    else:
        doc = {"config": _jsonable(config)}
        doc.update(one(reports[0]))
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ------------------------------------------------------------------ parser


def _float_tuple(text: str) -> tuple[float, ...]:
    try:
        items = tuple(float(part) for part in text.split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc
    if not items:
        raise argparse.ArgumentTypeError("empty float list")
    return items


def _seed_value(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed {text!r}") from exc


COMMANDS = ("clifford-check", "alpha", "sphere-identity", "flat-check",
            "conformal-check", "weitzenbock", "mass", "real-mass",
            "cross-term", "green-constant", "yamabe-residual",
            "levelset-check", "energy-scan", "all")

DEFAULT_FORMAT = {"mass": "json"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crlab",
        description="Verification suites for the pseudohermitian laboratory; "
                    "each subcommand checks one family of identities.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} suite")
        sp.add_argument("--n", type=int, default=None,
                        help="rank (half the horizontal dimension)")
        sp.add_argument("--A", type=float, default=None,
                        help="decay amplitude of the conformal tail")
        sp.add_argument("--R", type=float, default=4.0,
                        help="core radius parameter of the level-set family")
        sp.add_argument("--betas", "--beta", dest="betas", type=_float_tuple,
                        default=None, help="comma-separated bubble widths")
        sp.add_argument("--lambdas", "--lambda", dest="lambdas",
                        type=_float_tuple, default=None,
                        help="comma-separated sphere radii")
        sp.add_argument("--tol", type=float, default=None,
                        help="override the principal tolerance of the suite")
        sp.add_argument("--seed", type=_seed_value, default=DEFAULT_SEED,
                        help="RNG seed (default 0xC0FFEE)")
        sp.add_argument("--out", default=None,
                        help="output path ('-' or absent for stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=None,
                        help="report format (mass defaults to json)")
        sp.add_argument("--workers", type=int, default=1,
                        help="parallel workers for the energy scan")
        if name == "alpha":
            sp.add_argument("--max-n", dest="max_n", type=int, default=8)
        if name == "mass":
            sp.add_argument("--model", choices=("flat", "conformal"),
                            default="conformal")
        if name == "weitzenbock":
            sp.add_argument("--fields", type=int, default=50)
    return parser


def _or_default(value, default):
    return default if value is None else value


def _run_command(args: argparse.Namespace,
                 parser: argparse.ArgumentParser) -> list[Report]:
    name = args.command
    lam = args.lambdas
    ns = (args.n,) if args.n is not None else None
    tol = args.tol
    if name == "clifford-check":
        ns = ns or (1, 2, 3, 4)
        if any(k < 1 or k > 4 for k in ns):
            parser.error("clifford-check supports ranks 1 through 4")
        return [run_clifford(ns, _or_default(tol, 1e-12), args.seed)]
    if name == "alpha":
        return [run_alpha(args.max_n, _or_default(tol, 1e-10))]
    if name == "sphere-identity":
        ns = ns or (1, 2, 3)
        if any(k not in SPHERE_GRID for k in ns):
            parser.error("sphere-identity supports ranks 1 through 3")
        return [run_sphere(ns, tol)]
    if name == "flat-check":
        return [run_flat(ns or (1, 2), lam or (1.0, 5.0, 25.0),
                         _or_default(tol, 1e-10), args.seed)]
    if name == "conformal-check":
        ns = ns or (1, 2)
        if any(k not in (1, 2) for k in ns):
            parser.error("conformal-check supports ranks 1 and 2")
        return [run_conformal(ns, _or_default(tol, 1e-6), args.seed)]
    if name == "weitzenbock":
        n = _or_default(args.n, 2)
        if n not in (1, 2):
            parser.error("weitzenbock supports ranks 1 and 2")
        return [run_weitzenbock(n, _or_default(tol, 1e-8), args.seed,
                                args.fields)]
    if name == "mass":
        return [run_mass(args.model, _or_default(args.n, 2),
                         _or_default(args.A, 1.0),
                         lam or (5.0, 10.0, 20.0, 40.0),
                         _or_default(tol, 0.01), (32, 8))]
    if name == "real-mass":
        return [run_real_mass(_or_default(args.A, 1.0), lam or (5.0, 7.0, 9.0),
                              _or_default(tol, 1e-4), (16, 6))]
    if name == "cross-term":
        return [run_cross_term(_or_default(args.A, 1.0), lam or (5.0, 7.0, 9.0),
                               _or_default(tol, 0.02), (16, 6))]
    if name == "green-constant":
        return [run_green(_or_default(args.n, 1), lam or (1.0, 2.0, 4.0),
                          _or_default(tol, 1e-4))]
    if name == "yamabe-residual":
        ns = ns or (1, 2)
        if any(k not in QUOTIENT_GRID for k in ns):
            parser.error("yamabe-residual supports ranks 1 and 2")
        return [run_yamabe_residual(ns, args.betas or (1.0, 2.0),
                                    _or_default(tol, 1e-8), args.seed)]
    if name == "levelset-check":
        return [run_levelset(ns or (1, 2, 3), args.R, args.seed, args.betas)]
    if name == "energy-scan":
        n = _or_default(args.n, 2)
        if n not in (1, 2):
            parser.error("energy-scan needs an explicit coupling beyond rank 2")
        rep, _ = run_energy_scan(n, _or_default(args.A, 1.0), args.betas,
                                 args.R, args.workers, tol)
        return [rep]
    if name == "all":
        return run_all(args.seed, args.workers)
    parser.error(f"unknown command {name!r}")
    raise AssertionError("unreachable")


def _config_echo(args: argparse.Namespace) -> dict:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key == "command":
            continue
        config[key] = _jsonable(value)
    return config


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        reports = _run_command(args, parser)
    except SystemExit as exc:  # argparse already wrote the usage message
        return int(exc.code) if exc.code else 0
    fmt = args.format or DEFAULT_FORMAT.get(args.command, "csv")
    if fmt == "csv":
        text = _render_csv(reports, args.command)
    else:
        text = _render_json(reports, args.command, _config_echo(args))
    _emit(text, args.out)
    failures = [(rep.command, c) for rep in reports
                for c in rep.checks if not c.passed]
    for cmd, c in failures:
        print(f"FAIL {cmd}: {c.label} ({c.detail})", file=sys.stderr)
    return 1 if failures else 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
