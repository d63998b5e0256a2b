"""Acceptance criteria 1-10 at their stated tolerances and runtime limits.

Each test records one PASS/FAIL line; the lines are printed together at the
end of the pytest run.
"""
import math
import time

import numpy as np
import pytest

from dpgraph import (DoublePhaseParams, LatticeSpec, SolverConfig, apply_L, build_lattice,
                     check_green, check_interpolation, check_modular_norm_laws, energy_I,
                     gradient, luxemburg_norm_edge, luxemburg_norm_vertex, minimize_constrained,
                     modular_edge, shift, solve_monotone)
from dpgraph.cli import oracle_comparisons
from dpgraph.experiment import ExperimentConfig, path_graph, sweep_lambda
from dpgraph.operator import check_monotonicity
from dpgraph.solvers import delta_candidate

from .conftest import record


def coefficient(g, kind):
    return {"zero": np.zeros(g.n_vertices), "one": np.ones(g.n_vertices),
            "norm": g.norm1().astype(float)}[kind]


def test_criterion_01_green():
    t0 = time.perf_counter()
    fails = []
    for N, R in [(2, 4), (3, 2)]:
        g = build_lattice(LatticeSpec(N, R))
        for kind in ("zero", "one", "norm"):
            for p, q in [(1.5, 2.5), (2.0, 4.0)]:
                rep = check_green(g, DoublePhaseParams(p, q, coefficient(g, kind)), samples=500,
                                  rtol=1e-10)
                if not rep.passed:
                    fails.append(rep.to_json())
    dt = time.perf_counter() - t0
    record(1, not fails and dt < 10, f"12 configurations x 500 pairs, {len(fails)} failing, {dt:.1f}s")


def test_criterion_02_modular_norm_laws():
    t0 = time.perf_counter()
    g = build_lattice(LatticeSpec(2, 4))
    params = DoublePhaseParams(1.5, 2.5, g.norm1().astype(float), "coercive")
    reps = [check_modular_norm_laws(g, params, samples=1000, tol=1e-9, kind=k)
            for k in ("vertex", "edge")]
    dt = time.perf_counter() - t0
    v = sum(r.violations for r in reps)
    record(2, v == 0 and dt < 10, f"2 x 1000 samples, {v} violations, {dt:.1f}s")


def test_criterion_03_interpolation():
    t0 = time.perf_counter()
    rep = check_interpolation(build_lattice(LatticeSpec(2, 4)), samples=1000)
    dt = time.perf_counter() - t0
    record(3, rep.passed and dt < 5, f"1000 samples, {rep.violations} violations, {dt:.1f}s")


def test_criterion_04_scalar_monotonicity():
    reps = [check_monotonicity(samples=100_000, p=p, slack=1e-12) for p in (1.5, 3.0)]
    v = sum(r.violations for r in reps)
    record(4, v == 0, f"p=1.5 and p=3, 1e5 pairs each, {v} violations "
                      "(|xi-eta|^2 on the right for 1<p<2)")


@pytest.mark.xfail(strict=True, reason="degree-p right-hand side is not homogeneous of degree 2")
def test_criterion_04_literal_variant():
    rep = check_monotonicity(samples=100_000, p=1.5, slack=1e-12, form="literal")
    record("4-literal", rep.passed,
           f"|xi-eta|^p on the right for p=1.5: {rep.violations} violations, "
           f"e.g. {rep.witness}")


def test_criterion_05_closed_forms():
    errs = []
    for N in (2, 3):
        g = build_lattice(LatticeSpec(N, 2))
        params = DoublePhaseParams.constant(g, 1.5, 2.5, 0.0)
        du = gradient(g, g.delta())
        errs.append(abs(modular_edge(g, du, params) - 2 * N))
        errs.append(abs(luxemburg_norm_edge(g, du, params) - (2 * N) ** (1 / 1.5)))
    g0 = build_lattice(LatticeSpec(2, 0))
    single = luxemburg_norm_vertex(g0, g0.delta(), DoublePhaseParams.constant(g0, 2.0, 4.0, 1.0))
    err_single = abs(single - ((math.sqrt(5) - 1) / 2) ** -0.5)
    ok = max(errs) <= 1e-10 and err_single <= 1e-8
    record(5, ok, f"max error {max(errs):.1e} (tol 1e-10), single site {err_single:.1e} (tol 1e-8)")


def test_criterion_06_monotone_solver():
    t0 = time.perf_counter()
    g = build_lattice(LatticeSpec(2, 4))
    params = DoublePhaseParams(1.5, 2.5, g.norm1().astype(float), "coercive")
    f = g.delta()
    sols, res = [], []
    for seed in (11, 12):
        u0 = np.random.default_rng(seed).standard_normal(g.n_interior)
        u, rep = solve_monotone(g, f, params, SolverConfig(grad_tol=1e-8), u0=u0)
        sols.append(u)
        res.append(float(np.max(np.abs(apply_L(g, u, params) - f))))
    agree = float(np.max(np.abs(sols[0] - sols[1])))
    p3 = path_graph(3)
    u3, _ = solve_monotone(p3, np.array([0.0, 1, 0]), DoublePhaseParams(2.0, 3.0, np.zeros(5)),
                           SolverConfig(grad_tol=1e-12))
    err3 = float(np.max(np.abs(u3 - [0.5, 1, 0.5])))
    dt = time.perf_counter() - t0
    ok = max(res) <= 1e-8 and agree <= 1e-6 and err3 <= 1e-10 and dt < 60
    record(6, ok, f"residual {max(res):.1e}, starts agree to {agree:.1e}, "
                  f"path-of-3 error {err3:.1e}, {dt:.1f}s")


def test_criterion_07_oracle():
    rows = list(oracle_comparisons(1e-6))
    worst = max(r["max_abs_diff"] for r in rows)
    record(7, all(r["passed"] for r in rows), f"{len(rows)} instances, worst difference {worst:.1e}")


def test_criterion_08_constrained():
    t0 = time.perf_counter()
    g = build_lattice(LatticeSpec(2, 6))
    params = DoublePhaseParams(1.5, 2.5, g.norm1().astype(float), "coercive")
    r, t = 7.0, 1 / 7
    u, lam, rep = minimize_constrained(g, params, SolverConfig(grad_tol=1e-6, r=r, t=t),
                                       regime="coercive")
    I = energy_I(g, u, params)
    lo, hi = params.p * I / (r * t), params.q * I / (r * t)
    cand = energy_I(g, delta_candidate(g, r, t), params)
    dt = time.perf_counter() - t0
    ok = (rep.converged and rep.residual_inf <= 1e-6 and np.all(u > 0)
          and lo - 1e-6 <= lam <= hi + 1e-6 and I <= cand and dt < 300)
    record(8, ok, f"residual {rep.residual_inf:.1e}, min u {u.min():.2e}, "
                  f"lambda {lam:.5f} in [{lo:.5f}, {hi:.5f}], I {I:.5f} <= {cand:.5f}, {dt:.1f}s")


def test_criterion_09_multiplier_sweep():
    t0 = time.perf_counter()
    ts = [2.0**k for k in range(-4, 5)]
    out = {}
    for profile, args in [("zero", {}), ("coercive", {"c": 1.0, "s": 1.0})]:
        cfg = ExperimentConfig(mode="sweep", lattice={"N": 2, "R": 6}, p=1.5, q=2.5, r=7.0,
                               profile=profile, profile_args=args, t_list=ts,
                               solver={"grad_tol": 1e-8, "restarts": 2})
        out[profile] = sweep_lambda(cfg)[1]
    dt = time.perf_counter() - t0
    z, c = out["zero"], out["coercive"]
    ok = (z["all_converged"] and c["all_converged"]
          and z["lambda_strictly_decreasing"] and c["lambda_strictly_decreasing"]
          and abs(z["slope_fit"] - z["homogeneous_slope"]) <= 0.05
          and c["slope_large_t"] <= c["q_slope"] + 0.1 and dt < 1800)
    record(9, ok, f"a=0 slope {z['slope_fit']:.4f} (target {z['homogeneous_slope']:.4f}); "
                  f"coercive large-t slope {c['slope_large_t']:.4f} "
                  f"(bound {c['q_slope'] + 0.1:.4f}); both decreasing; {dt:.0f}s")


def test_criterion_10_translation_equivariance():
    g = build_lattice(LatticeSpec(2, 6))
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 2, g.n_vertices)
    a_shift = np.zeros_like(a)
    for k in range(g.n_vertices):
        j = g._index.get(tuple(g.coords[k] + (1, 0)))
        if j is not None:
            a_shift[j] = a[k]
    inner = np.abs(g.coords[: g.n_interior]).max(axis=1) <= 3
    u = np.where(inner, rng.standard_normal(g.n_interior), 0.0)
    Lu = apply_L(g, u, DoublePhaseParams(1.5, 2.5, a))
    Lsu = apply_L(g, shift(g, u, (1, 0)), DoublePhaseParams(1.5, 2.5, a_shift))
    # compare wherever the shifted neighbourhood stays inside the box
    ks = np.flatnonzero(np.abs(g.coords[: g.n_interior]).max(axis=1) <= 4)
    mismatches = sum(Lsu[g.index_of(g.coords[k] + (1, 0))] != Lu[k] for k in ks)
    record(10, mismatches == 0, f"{len(ks)} vertices compared bitwise, {mismatches} mismatches")
