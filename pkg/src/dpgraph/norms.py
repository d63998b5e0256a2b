"""Lebesgue norms, double-phase modulars and Luxemburg norms on graphs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, gradient

__all__ = [
    "CheckReport",
    "DoublePhaseParams",
    "NumericalError",
    "check_interpolation",
    "check_modular_norm_laws",
    "check_norm_equivalence",
    "lp_norm",
    "luxemburg_norm",
    "luxemburg_norm_edge",
    "luxemburg_norm_vertex",
    "modular_edge",
    "modular_vertex",
    "random_function",
]


class NumericalError(ArithmeticError):
    """Non-finite values where a finite computation was required."""


@dataclass(frozen=True, eq=False)
class DoublePhaseParams:
    """Exponents ``1 < p < q`` and a coefficient ``a >= 0`` on interior + halo.

    ``a`` is indexed like the graph's vertices, so ``a[g.tail]`` gives the
    coefficient at the tail of every directed edge.
    """

    p: float
    q: float
    a: np.ndarray
    profile: str = "custom"
    profile_args: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1.0 < self.p < self.q < math.inf:
            raise ValueError(f"need 1 < p < q < inf, got p={self.p}, q={self.q}")
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1:
            raise ValueError("coefficient must be a 1-D array over the vertices")
        if not np.all(np.isfinite(a)):
            raise ValueError("coefficient must be finite")
        if np.any(a < 0):
            raise ValueError("coefficient must be non-negative")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def constant(cls, g: Graph, p, q, c=0.0):
        return cls(p, q, np.full(g.n_vertices, float(c)),
                   profile="zero" if c == 0 else "constant", profile_args={"c": float(c)})

    def for_graph(self, g: Graph) -> "DoublePhaseParams":
        if self.a.shape != (g.n_vertices,):
            raise ValueError(
                f"coefficient has {self.a.size} entries, graph has {g.n_vertices} vertices"
            )
        return self

    def sobolev_conjugate(self, N: int) -> float:
        """``p* = N p / (N - p)``; infinite when ``p >= N``."""
        return N * self.p / (N - self.p) if self.p < N else math.inf


def _weights(g: Graph, kind: str):
    if kind == "vertex":
        return g.mu, g.n_interior
    if kind == "edge":
        return 0.5 * g.weight, g.n_edges
    raise ValueError(f"kind must be 'vertex' or 'edge', got {kind!r}")


def lp_norm(g: Graph, x, alpha: float, kind: str = "vertex") -> float:
    """``l^alpha`` norm of a vertex function (measure mu) or edge function (measure w/2)."""
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    weights, n = _weights(g, kind)
    x = np.abs(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise ValueError(f"{kind} function has shape {x.shape}, expected ({n},)")
    if math.isinf(alpha):
        return float(x.max(initial=0.0))
    return float(np.dot(weights, x**alpha) ** (1.0 / alpha))


def modular_vertex(g: Graph, u, params: DoublePhaseParams) -> float:
    """``sum_x mu(x) (|u|^p + a(x) |u|^q)`` over the interior."""
    u = np.abs(np.asarray(u, dtype=float))
    a = params.a[: g.n_interior]
    return float(np.dot(g.mu, u**params.p + a * u**params.q))


def modular_edge(g: Graph, f, params: DoublePhaseParams) -> float:
    """``1/2 sum_(x,y) w_xy (|f|^p + a(x) |f|^q)`` with ``a`` taken at the edge tail."""
    f = np.abs(np.asarray(f, dtype=float))
    a = params.a[g.tail]
    return 0.5 * float(np.dot(g.weight, f**params.p + a * f**params.q))


@dataclass
class LuxemburgInfo:
    norm: float
    residual: float  # |rho(f / norm) - 1|
    norm_error: float  # first-order bound on |norm - exact|
    evaluations: int


def luxemburg_norm(modular, f, p: float = 1.0, tol: float = 1e-12, lam0=None,
                   full_output: bool = False):
    """Luxemburg norm ``inf{lam > 0 : modular(f / lam) <= 1}`` by bisection.

    ``lam -> modular(f / lam)`` is continuous and strictly decreasing for
    ``f != 0``; the root of ``modular(f / lam) = 1`` is bracketed by doubling
    or halving from ``lam0`` and then bisected until the modular residual is
    at most ``tol`` or the bracket reaches machine resolution.

    Parameters
    ----------
    modular : callable
        Maps an array shaped like ``f`` to a non-negative float.
    f : array_like
    p : float
        Lower growth exponent of the modular, used only for the error estimate.
    tol : float
        Tolerance on ``|modular(f / lam) - 1|``.
    lam0 : float, optional
        Initial guess, defaults to ``max |f|``.
    full_output : bool
        Return a :class:`LuxemburgInfo` instead of the bare norm.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise NumericalError("function has non-finite values")
    if not np.any(f):
        info = LuxemburgInfo(0.0, 0.0, 0.0, 0)
        return info if full_output else 0.0

    evals = 0

    def rho(lam):
        nonlocal evals
        evals += 1
        return modular(f / lam)

    lam = float(lam0) if lam0 else float(np.max(np.abs(f)))
    r = rho(lam)
    if r > 1:
        lo, hi = lam, 2 * lam
        while rho(hi) > 1:
            lo, hi = hi, 2 * hi
    else:
        lo, hi = 0.5 * lam, lam
        while rho(lo) <= 1:
            lo, hi = 0.5 * lo, lo
    best, best_res = hi, abs(rho(hi) - 1)
    while best_res > tol:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        r = rho(mid)
        if abs(r - 1) < best_res:
            best, best_res = mid, abs(r - 1)
        if r > 1:
            lo = mid
        else:
            hi = mid
    if not full_output:
        return best
    # |d rho(f/lam) / d lam| >= p rho / lam near the root
    err = best_res * best / (p * max(1.0 - best_res, 1e-300))
    return LuxemburgInfo(best, best_res, err, evals)


def luxemburg_norm_vertex(g: Graph, u, params: DoublePhaseParams, tol: float = 1e-12, **kw):
    lam0 = lp_norm(g, u, params.p) or None
    return luxemburg_norm(lambda v: modular_vertex(g, v, params), u, params.p, tol, lam0, **kw)


def luxemburg_norm_edge(g: Graph, f, params: DoublePhaseParams, tol: float = 1e-12, **kw):
    lam0 = lp_norm(g, f, params.p, kind="edge") or None
    return luxemburg_norm(lambda v: modular_edge(g, v, params), f, params.p, tol, lam0, **kw)


# ---------------------------------------------------------------------------
# property checks

@dataclass
class CheckReport:
    name: str
    samples: int
    violations: int = 0
    witness: dict | None = None
    law: str | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def record(self, law: str, values, detail: dict | None = None):
        self.violations += 1
        if self.witness is None:
            values = np.asarray(values, dtype=float)
            self.law = law
            self.witness = {str(int(i)): float(values[i]) for i in np.flatnonzero(values)}
            if detail:
                self.witness.update({f"_{k}": v for k, v in detail.items()})

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "samples": self.samples,
            "violations": self.violations,
            "law": self.law,
            "witness": self.witness,
        }, sort_keys=True)


def random_function(g: Graph, rng: np.random.Generator, max_support: int = 12,
                    scale_decades: float = 2.0) -> np.ndarray:
    """Random finitely supported vertex function with a log-uniform overall scale."""
    k = int(rng.integers(1, min(max_support, g.n_interior) + 1))
    u = np.zeros(g.n_interior)
    idx = rng.choice(g.n_interior, size=k, replace=False)
    u[idx] = rng.standard_normal(k)
    return u * 10.0 ** rng.uniform(-scale_decades, scale_decades)


def _le(lhs, rhs, tol):
    return lhs <= rhs + tol * max(1.0, abs(rhs))


def check_modular_norm_laws(g: Graph, params: DoublePhaseParams, samples: int = 1000,
                            seed: int = 42, tol: float = 1e-9, kind: str = "vertex") -> CheckReport:
    """Check the modular/norm correspondence on random finitely supported functions.

    Laws checked for each sample ``u`` (``kind='edge'`` uses ``grad u``):
    unit modular at the norm, ``||u|| < 1 <=> rho(u) < 1`` (and ``> 1``), the
    power sandwiches between ``||u||^p`` and ``||u||^q``, the scaling bounds
    ``b^p rho(u) <= rho(b u) <= b^q rho(u)`` (reversed for ``b < 1``), the
    doubling bound ``rho(2u) <= 2^q rho(u)`` and homogeneity of the norm.
    """
    params.for_graph(g)
    p, q = params.p, params.q
    if kind == "vertex":
        def rho(x):
            return modular_vertex(g, x, params)

        def norm(x):
            return luxemburg_norm_vertex(g, x, params)
    else:
        def rho(x):
            return modular_edge(g, x, params)

        def norm(x):
            return luxemburg_norm_edge(g, x, params)

    rep = CheckReport(f"modular_norm_laws[{kind}]", samples)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        u = random_function(g, rng)
        x = u if kind == "vertex" else gradient(g, u)
        if not np.any(x):
            continue
        r, n = rho(x), norm(x)
        if abs(rho(x / n) - 1) > tol:
            rep.record("unit_modular", u, {"norm": n})
        if abs(r - 1) > tol and (n < 1) != (r < 1):
            rep.record("unit_ball", u, {"norm": n, "modular": r})
        if n < 1 and not (_le(n**q, r, tol) and _le(r, n**p, tol)):
            rep.record("sandwich_below_one", u, {"norm": n, "modular": r})
        if n > 1 and not (_le(n**p, r, tol) and _le(r, n**q, tol)):
            rep.record("sandwich_above_one", u, {"norm": n, "modular": r})
        b = 10.0 ** rng.uniform(-2, 2)
        rb = rho(b * x)
        lo, hi = (b**p * r, b**q * r) if b > 1 else (b**q * r, b**p * r)
        if not (_le(lo, rb, tol) and _le(rb, hi, tol)):
            rep.record("scaling", u, {"b": b})
        if not _le(rho(2 * x), 2**q * r, tol):
            rep.record("doubling", u)
        c = rng.uniform(-10, 10)
        if abs(norm(c * x) - abs(c) * n) > tol * max(1.0, abs(c) * n):
            rep.record("homogeneity", u, {"c": c})
    return rep


def check_interpolation(g: Graph, samples: int = 1000, seed: int = 0) -> CheckReport:
    """``||u||_beta <= ||u||_alpha`` and the same for gradients, ``1 <= alpha <= beta``.

    Requires ``mu >= 1`` and ``w >= 1`` (true on lattices).
    """
    if np.any(g.mu < 1) or np.any(g.weight < 1):
        raise ValueError("interpolation inequality needs mu >= 1 and w >= 1")
    rep = CheckReport("interpolation", samples)
    rng = np.random.default_rng(seed)
    slack = 1e-12
    for _ in range(samples):
        u = random_function(g, rng)
        alpha = rng.uniform(1, 8)
        beta = math.inf if rng.random() < 0.1 else rng.uniform(alpha, 12)
        du = gradient(g, u)
        if lp_norm(g, u, beta) > lp_norm(g, u, alpha) * (1 + slack):
            rep.record("vertex", u, {"alpha": alpha, "beta": beta})
        if lp_norm(g, du, beta, "edge") > lp_norm(g, du, alpha, "edge") * (1 + slack):
            rep.record("gradient", u, {"alpha": alpha, "beta": beta})
    return rep


def check_norm_equivalence(g: Graph, params: DoublePhaseParams, samples: int = 500,
                           seed: int = 0, tol: float = 1e-9) -> CheckReport:
    """For bounded ``a``: ``||grad u||_p <= ||u||`` and ``rho(grad u / ||grad u||_p) <= 1 + ||a||_inf``."""
    rep = CheckReport("norm_equivalence", samples)
    rng = np.random.default_rng(seed)
    a_sup = float(params.a[g.tail].max(initial=0.0))
    for _ in range(samples):
        u = random_function(g, rng)
        du = gradient(g, u)
        if not np.any(du):
            continue
        np_ = lp_norm(g, du, params.p, "edge")
        if not _le(np_, luxemburg_norm_edge(g, du, params), tol):
            rep.record("lp_below_luxemburg", u)
        if not _le(modular_edge(g, du / np_, params), 1 + a_sup, tol):
            rep.record("modular_bound", u)
    return rep
