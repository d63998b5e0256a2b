"""The double-phase operator, its energy and weak form."""
from __future__ import annotations

import numpy as np

from .graph import Graph, divergence, gradient, integrate_vertices
from .norms import CheckReport, DoublePhaseParams, random_function

__all__ = [
    "apply_L",
    "check_green",
    "check_monotonicity",
    "check_operator_monotonicity",
    "energy_I",
    "energy_gradient",
    "flux",
    "pairing",
    "signed_power",
]


def signed_power(t, s: float) -> np.ndarray:
    """``|t|^(s-2) t`` with the removable value 0 at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** (s - 1.0)


def _check_params(params: DoublePhaseParams):
    if not params.p > 1:
        raise ValueError(f"operator needs p > 1, got {params.p}")


def flux(g: Graph, u, params: DoublePhaseParams, du=None) -> np.ndarray:
    """Antisymmetric flux ``|grad u|^(p-2) grad u + abar |grad u|^(q-2) grad u``.

    ``abar`` on edge ``(x, y)`` is ``(a(x) + a(y)) / 2``.
    """
    if du is None:
        du = gradient(g, u)
    abar = 0.5 * (params.a[g.tail] + params.a[g.head])
    return signed_power(du, params.p) + abar * signed_power(du, params.q)


def apply_L(g: Graph, u, params: DoublePhaseParams) -> np.ndarray:
    """``L(u)(x) = -(1/mu(x)) sum_y w_xy flux(u)(x, y)`` on the interior."""
    _check_params(params)
    params.for_graph(g)
    terms = g.weight * flux(g, u, params)
    s = np.bincount(g.tail, weights=terms, minlength=g.n_vertices)[: g.n_interior]
    return -s / g.mu


def energy_I(g: Graph, u, params: DoublePhaseParams) -> float:
    """``1/2 sum_(x,y) w_xy (|grad u|^p / p + a(x) |grad u|^q / q)``."""
    du = np.abs(gradient(g, u))
    dens = du**params.p / params.p + params.a[g.tail] * du**params.q / params.q
    return 0.5 * float(np.dot(g.weight, dens))


def pairing(g: Graph, u, v, params: DoublePhaseParams) -> float:
    """Weak form ``<L(u), v>`` with ``a`` evaluated at the tail of each edge."""
    du = gradient(g, u)
    tail_flux = signed_power(du, params.p) + params.a[g.tail] * signed_power(du, params.q)
    return 0.5 * float(np.dot(g.weight, tail_flux * gradient(g, v)))


def energy_gradient(g: Graph, u, params: DoublePhaseParams) -> np.ndarray:
    """Partial derivatives of :func:`energy_I`: ``mu(x) L(u)(x)``."""
    return g.mu * apply_L(g, u, params)


def check_green(g: Graph, params: DoublePhaseParams, samples: int = 500, seed: int = 7,
                rtol: float = 1e-10) -> CheckReport:
    """Integration by parts: ``<L(u), v> = -int v div(flux(u)) dmu`` on random pairs.

    The left side uses the tail coefficient, the right side the averaged one,
    so this also confirms the two conventions agree.
    """
    rep = CheckReport("green", samples)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        u = random_function(g, rng, scale_decades=1.0)
        v = random_function(g, rng, scale_decades=1.0)
        lhs = pairing(g, u, v, params)
        rhs = -integrate_vertices(g, v * divergence(g, flux(g, u, params)))
        if abs(lhs - rhs) > rtol * (1 + abs(lhs)):
            rep.record("green", u, {"lhs": lhs, "rhs": rhs})
    return rep


def monotonicity_gap(xi, eta, p: float, form: str = "consistent") -> np.ndarray:
    """LHS minus RHS of the scalar monotonicity inequality for exponent ``p``.

    With ``phi(t) = |t|^(p-2) t``, for ``1 < p < 2``::

        (phi(xi) - phi(eta))(xi - eta)(|xi|^p + |eta|^p)^((2-p)/p) >= (p-1)|xi-eta|^2

    and for ``p >= 2``::

        (phi(xi) - phi(eta))(xi - eta) >= 2^-p |xi-eta|^p

    ``form="literal"`` puts ``|xi-eta|^p`` on the right in the first case as
    well.  Both sides then have different degrees of homogeneity, so that
    variant fails for small arguments; it is kept to demonstrate this.
    """
    if form not in ("consistent", "literal"):
        raise ValueError(f"unknown form {form!r}")
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    base = (signed_power(xi, p) - signed_power(eta, p)) * (xi - eta)
    if p < 2:
        d = np.abs(xi - eta) ** (2.0 if form == "consistent" else p)
        return base * (np.abs(xi) ** p + np.abs(eta) ** p) ** ((2 - p) / p) - (p - 1) * d
    return base - 0.5**p * np.abs(xi - eta) ** p


def check_monotonicity(samples: int = 100_000, p: float = 1.5, seed: int = 0,
                       slack: float = 1e-12, form: str = "consistent") -> CheckReport:
    """Scalar monotonicity inequality on random real pairs, relative slack ``slack``."""
    if not p > 1:
        raise ValueError(f"need p > 1, got {p}")
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-3, 3, size=(2, samples))
    xi, eta = rng.standard_normal((2, samples)) * scale
    # a share of exactly equal and sign-flipped pairs
    eta[: samples // 20] = xi[: samples // 20]
    eta[samples // 20: samples // 10] = -xi[samples // 20: samples // 10]
    gap = monotonicity_gap(xi, eta, p, form)
    base = np.abs(signed_power(xi, p) - signed_power(eta, p)) * np.abs(xi - eta)
    mag = base * ((np.abs(xi) ** p + np.abs(eta) ** p) ** ((2 - p) / p) if p < 2 else 1.0)
    bad = np.flatnonzero(gap < -slack * np.maximum(mag, 1.0))
    name = f"monotonicity[p={p}]" if form == "consistent" else f"monotonicity[p={p},{form}]"
    rep = CheckReport(name, samples, violations=int(bad.size))
    if bad.size:
        k = bad[0]
        rep.law = "scalar"
        rep.witness = {"xi": float(xi[k]), "eta": float(eta[k]), "gap": float(gap[k])}
    return rep


def check_operator_monotonicity(g: Graph, params: DoublePhaseParams, samples: int = 200,
                                seed: int = 0, slack: float = 1e-12) -> CheckReport:
    """``<L(u) - L(v), u - v> >= 0`` on random pairs (pointwise sums over the interior)."""
    rep = CheckReport("operator_monotonicity", samples)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        u = random_function(g, rng, scale_decades=1.0)
        v = random_function(g, rng, scale_decades=1.0)
        d = u - v
        val = pairing(g, u, d, params) - pairing(g, v, d, params)
        scale = abs(pairing(g, u, d, params)) + abs(pairing(g, v, d, params))
        if val < -slack * max(1.0, scale):
            rep.record("operator", d, {"value": val})
    return rep
