import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpgraph import (DoublePhaseParams, LatticeSpec, apply_L, build_lattice, check_green,
                     energy_gradient, energy_I, pairing, shift)
from dpgraph.operator import (check_monotonicity, check_operator_monotonicity, monotonicity_gap,
                              signed_power)

from .conftest import coercive, constant


def test_L_of_delta_plain():
    g = build_lattice(LatticeSpec(2, 3))
    Lu = apply_L(g, g.delta(), constant(g, 1.5, 2.5, 0.0))
    assert Lu[g.index_of((0, 0))] == 4
    for y in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert Lu[g.index_of(y)] == -1
    assert np.count_nonzero(Lu) == 5


def test_L_of_delta_double_phase():
    g = build_lattice(LatticeSpec(2, 3))
    Lu = apply_L(g, g.delta(), constant(g, 1.5, 2.5, 1.0))
    assert Lu[g.index_of((0, 0))] == 8
    assert Lu[g.index_of((0, 1))] == -2


def test_L_uses_edge_averaged_coefficient():
    g = build_lattice(LatticeSpec(2, 3))
    Lu = apply_L(g, g.delta(), coercive(g))
    # abar on the four edges at the origin is (0 + 1) / 2
    assert Lu[g.index_of((0, 0))] == pytest.approx(4 + 4 * 0.5)
    assert Lu[g.index_of((1, 0))] == pytest.approx(-1.5)


@pytest.mark.parametrize("c, expected", [(0.0, 4 / 1.5), (1.0, 4 / 1.5 + 4 / 2.5)])
def test_energy_of_delta(c, expected):
    g = build_lattice(LatticeSpec(2, 2))
    assert energy_I(g, g.delta(), constant(g, 1.5, 2.5, c)) == pytest.approx(expected, abs=1e-14)


def test_energy_of_delta_coercive():
    g = build_lattice(LatticeSpec(2, 2))
    # a taken at the tail: the four edges into the origin carry a = 1
    assert energy_I(g, g.delta(), coercive(g)) == pytest.approx(4 / 1.5 + 2 / 2.5, abs=1e-14)


def test_gradient_by_central_differences(z2, rng):
    params = coercive(z2)
    # keep every edge difference away from 0, where |t|^p is not smooth
    c = z2.coords[: z2.n_interior]
    u = 3 + 0.3 * c[:, 0] + 0.17 * c[:, 1] + 0.01 * rng.standard_normal(z2.n_interior)
    v = rng.standard_normal(z2.n_interior)
    exact = float(np.dot(energy_gradient(z2, u, params), v))
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (energy_I(z2, u + h * v, params) - energy_I(z2, u - h * v, params)) / (2 * h)
        errs.append(abs(fd - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.2), orders


def test_gradient_matches_pairing(z2, rng):
    params = coercive(z2)
    u, v = rng.standard_normal((2, z2.n_interior))
    assert np.dot(energy_gradient(z2, u, params), v) == pytest.approx(pairing(z2, u, v, params),
                                                                        rel=1e-12)


@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("pq", [(1.5, 2.5), (2.0, 4.0)])
@pytest.mark.parametrize("profile", ["zero", "one", "norm"])
def test_green(N, pq, profile):
    g = build_lattice(LatticeSpec(N, 3 if N == 2 else 2))
    a = {"zero": np.zeros(g.n_vertices), "one": np.ones(g.n_vertices),
         "norm": g.norm1().astype(float)}[profile]
    rep = check_green(g, DoublePhaseParams(*pq, a), samples=100)
    assert rep.passed, rep.to_json()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pairing_bounds_energy(seed):
    g = build_lattice(LatticeSpec(2, 2))
    params = coercive(g)
    u = np.random.default_rng(seed).standard_normal(g.n_interior)
    e, lu = energy_I(g, u, params), pairing(g, u, u, params)
    assert params.p * e * (1 - 1e-12) <= lu <= params.q * e * (1 + 1e-12)


@pytest.mark.parametrize("p", [1.1, 1.5, 1.9, 2.0, 2.5, 4.0])
def test_scalar_monotonicity(p):
    assert check_monotonicity(samples=20_000, p=p).passed


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1.05, 1.95))
def test_scalar_monotonicity_hypothesis(xi, eta, p):
    gap = monotonicity_gap(xi, eta, p)
    scale = max(1.0, abs(xi) ** 2 + abs(eta) ** 2)
    assert gap >= -1e-12 * scale


def test_literal_variant_fails_at_small_scale():
    # degree 2 on the left, degree p on the right: small antipodal pairs break it
    assert monotonicity_gap(-1e-3, 1e-3, 1.5, form="literal") < 0
    assert monotonicity_gap(-1.0, 1.0, 1.5, form="literal") > 0
    assert monotonicity_gap(-1e-3, 1e-3, 1.5) > 0


def test_operator_monotonicity(z2):
    for params in (coercive(z2), coercive(z2, 2.5, 4.0, 0.5)):
        assert check_operator_monotonicity(z2, params, samples=100).passed


def test_signed_power_at_zero():
    assert signed_power(0.0, 1.5) == 0
    assert signed_power(-4.0, 1.5) == -2


def test_translation_equivariance(z2_big, rng):
    g = z2_big
    a = rng.uniform(0, 2, g.n_vertices)
    a_shift = np.zeros_like(a)
    for k in range(g.n_vertices):
        j = g._index.get(tuple(g.coords[k] + (1, 0)))
        if j is not None:
            a_shift[j] = a[k]
    inner = np.abs(g.coords[: g.n_interior]).max(axis=1) <= 2
    u = np.where(inner, rng.standard_normal(g.n_interior), 0.0)
    Lu = apply_L(g, u, DoublePhaseParams(1.5, 2.5, a))
    Lsu = apply_L(g, shift(g, u, (1, 0)), DoublePhaseParams(1.5, 2.5, a_shift))
    for k in np.flatnonzero(np.abs(g.coords[: g.n_interior]).max(axis=1) <= 4):
        assert Lsu[g.index_of(g.coords[k] + (1, 0))] == Lu[k]


def test_L_requires_matching_coefficient(z2):
    with pytest.raises(ValueError):
        apply_L(z2, z2.delta(), DoublePhaseParams(1.5, 2.5, np.zeros(3)))
