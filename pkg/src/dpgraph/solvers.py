"""Variational solvers for the monotone equation and the constrained problem.

Both solvers are first-order descent methods with Armijo backtracking on the
exact energy gradient.  Energy differences are evaluated edge by edge with a
cancellation-free formula so that the sufficient-decrease test keeps working
when the gradient is close to machine precision.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import CapacityError, Graph, gradient
from .norms import DoublePhaseParams, NumericalError, modular_edge
from .operator import apply_L, energy_I

__all__ = [
    "SolveReport",
    "SolverConfig",
    "block_candidate",
    "brute_force_oracle",
    "constraint_J",
    "delta_candidate",
    "eigen_residual",
    "lagrange_multiplier",
    "minimize_constrained",
    "project_to_sphere",
    "solve_monotone",
    "validate_exponents",
]

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    max_iters: int = 50_000
    grad_tol: float = 1e-8
    step0: float = 1.0
    shrink: float = 0.5
    armijo_c: float = 1e-4
    restarts: int = 4
    seed: int = 0
    r: float | None = None
    t: float | None = None
    # "bb": Barzilai-Borwein trial step, "grow": previous accepted step times 2
    step_rule: str = "bb"
    # backtracking below this step means rounding noise dominates the decrease
    min_step: float = 1e-12
    check_hypotheses: bool = True

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.step_rule not in ("bb", "grow"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.max_iters < 0 or self.restarts < 1:
            raise ValueError("max_iters must be >= 0 and restarts >= 1")


@dataclass
class SolveReport:
    converged: bool
    iters: int
    energy: float
    constraint: float = math.nan
    multiplier: float = math.nan
    residual_inf: float = math.nan
    wall_ms: float = 0.0
    seed: int | None = None
    peak: list | None = None
    # share of the gradient modular on edges into the halo (set by the experiment layer)
    halo_share: float | None = None
    history: list = field(default_factory=list, repr=False)
    decrements: list = field(default_factory=list, repr=False)
    restarts: list = field(default_factory=list, repr=False)

    def to_dict(self, with_history: bool = False) -> dict:
        d = asdict(self)
        if not with_history:
            d.pop("history")
            d.pop("decrements")
        return d


# ---------------------------------------------------------------------------
# accurate energy differences

def _pow_diff(a, d, s):
    """``|a + d|^s - |a|^s`` without catastrophic cancellation when ``d`` is small."""
    b = a + d
    out = np.abs(b) ** s - np.abs(a) ** s
    # same sign: (|b| - |a|) / |a| = d / a, which avoids rounding in b
    ok = a * b > 0
    if np.any(ok):
        ao = a[ok]
        out[ok] = np.abs(ao) ** s * np.expm1(s * np.log1p(d[ok] / ao))
    return out


def _energy_diff(g: Graph, du, ddu, params: DoublePhaseParams) -> float:
    """``I(u + v) - I(u)`` from ``du = grad u`` and the increment ``ddu = grad v``."""
    p, q = params.p, params.q
    dens = _pow_diff(du, ddu, p) / p + params.a[g.tail] * _pow_diff(du, ddu, q) / q
    return 0.5 * float(np.dot(g.weight, dens))


def _safe_step(s):
    if not math.isfinite(s):
        raise NumericalError("line search produced a non-finite step")
    return s


def _trial_step(cfg, s_prev, dx, dg, first):
    if first or s_prev is None:
        return cfg.step0
    if cfg.step_rule == "bb" and dx is not None:
        sy = float(np.dot(dx, dg))
        if sy > 0:
            return float(np.dot(dx, dx)) / sy
    return 2.0 * s_prev


# ---------------------------------------------------------------------------
# monotone equation L(u) = f

def solve_monotone(g: Graph, f, params: DoublePhaseParams, cfg: SolverConfig | None = None,
                   u0=None):
    """Solve ``L(u) = f`` by minimizing ``Phi(u) = I(u) - int f u dmu``.

    Returns ``(u, report)``.  Stops when ``||mu L(u) - mu f||_inf <= grad_tol``.
    ``report.history`` holds ``Phi`` at every accepted iterate and
    ``report.decrements`` the accurately computed changes between them.
    """
    cfg = cfg or SolverConfig()
    params.for_graph(g)
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n_interior,):
        raise ValueError(f"right-hand side has shape {f.shape}, expected ({g.n_interior},)")
    t0 = time.perf_counter()
    u = np.zeros(g.n_interior) if u0 is None else np.array(u0, dtype=float)
    mf = g.mu * f

    def phi(x):
        return energy_I(g, x, params) - float(np.dot(mf, x))

    du = gradient(g, u)
    grad = g.mu * apply_L(g, u, params) - mf
    hist = [phi(u)]
    decs = []
    s, dx, dgr = None, None, None
    it = 0
    converged = bool(np.max(np.abs(grad), initial=0.0) <= cfg.grad_tol)
    while not converged and it < cfg.max_iters:
        s = _trial_step(cfg, s, dx, dgr, it == 0)
        gg = float(np.dot(grad, grad))
        while True:
            s = _safe_step(s)
            cand = u - s * grad
            step = cand - u
            delta = _energy_diff(g, du, gradient(g, step), params) - float(np.dot(mf, step))
            if not math.isfinite(delta):
                raise NumericalError("non-finite energy in line search")
            if delta <= -cfg.armijo_c * s * gg:
                break
            s *= cfg.shrink
            if s < cfg.min_step:
                break
        if s < cfg.min_step:
            log.info("solve_monotone: line search stalled at iteration %d", it)
            break
        new_grad = g.mu * apply_L(g, cand, params) - mf
        dx, dgr = cand - u, new_grad - grad
        u, du, grad = cand, gradient(g, cand), new_grad
        decs.append(delta)
        hist.append(phi(u))
        it += 1
        converged = bool(np.max(np.abs(grad)) <= cfg.grad_tol)
    rep = SolveReport(
        converged=converged, iters=it, energy=energy_I(g, u, params),
        residual_inf=float(np.max(np.abs(grad), initial=0.0)),
        wall_ms=1e3 * (time.perf_counter() - t0), history=hist, decrements=decs,
    )
    return u, rep


# ---------------------------------------------------------------------------
# constrained problem  S_t = inf { I(u) : J(u) = t }

def constraint_J(g: Graph, u, r: float) -> float:
    """``J(u) = (1/r) sum_x mu(x) |u(x)|^r``."""
    return float(np.dot(g.mu, np.abs(u) ** r)) / r


def project_to_sphere(g: Graph, u, r: float, t: float) -> np.ndarray:
    """Rescale ``u`` so that ``J(u) = t`` exactly (up to rounding)."""
    m = float(np.dot(g.mu, np.abs(u) ** r))
    if not m > 0:
        raise ValueError("cannot project the zero function onto the constraint set")
    return np.asarray(u, dtype=float) * (r * t / m) ** (1.0 / r)


def lagrange_multiplier(g: Graph, u, params: DoublePhaseParams, r: float) -> float:
    """``rho_E(grad u) / sum mu |u|^r``, the multiplier of a constrained critical point."""
    den = float(np.dot(g.mu, np.abs(u) ** r))
    if not den > 0:
        raise ValueError("multiplier undefined for u = 0")
    return modular_edge(g, gradient(g, u), params) / den


def eigen_residual(g: Graph, u, lam: float, params: DoublePhaseParams, r: float) -> float:
    """``sup_x |L(u)(x) - lam |u(x)|^(r-2) u(x)|`` over the interior."""
    u = np.asarray(u, dtype=float)
    res = apply_L(g, u, params) - lam * np.sign(u) * np.abs(u) ** (r - 1)
    return float(np.max(np.abs(res), initial=0.0))


def validate_exponents(N: int, params: DoublePhaseParams, r: float, regime: str) -> None:
    """Check the exponent hypotheses for a coefficient regime on ``Z^N``.

    ``coercive`` needs ``r > p*``; ``zero``, ``constant``, ``periodic`` and
    ``bounded_potential`` also need ``r >= q`` (``zero`` is exempt since the
    ``q`` term vanishes).  Always ``1 < p < N``.
    """
    p, q = params.p, params.q
    if not 1 < p < N:
        raise ValueError(f"need 1 < p < N, got p={p}, N={N}")
    pstar = params.sobolev_conjugate(N)
    if not r > pstar:
        raise ValueError(f"need r > p* = {pstar:g}, got r={r}")
    if regime in ("constant", "periodic", "bounded_potential") and not r >= q:
        raise ValueError(f"regime {regime!r} needs r >= q, got r={r}, q={q}")


def delta_candidate(g: Graph, r: float, t: float, coord=None) -> np.ndarray:
    """``delta_y`` rescaled onto ``J = t`` (``(rt)^(1/r) delta_y`` when ``mu = 1``)."""
    return project_to_sphere(g, g.delta(coord), r, t)


def block_candidate(g: Graph, n: int, r: float, t: float) -> np.ndarray:
    """Flat block ``n^(-N/r)`` on ``[-n/2, n/2)^N`` rescaled onto ``J = t``."""
    if g.lattice is None:
        raise ValueError("block candidates need a lattice graph")
    lo, hi = math.ceil(-n / 2), math.ceil(n / 2) - 1
    if lo < -g.lattice.R or hi > g.lattice.R:
        raise ValueError(f"block of side {n} does not fit in the box of radius {g.lattice.R}")
    c = g.coords[: g.n_interior]
    inside = np.all((c >= lo) & (c <= hi), axis=1)
    w = np.where(inside, float(n) ** (-g.dim / r), 0.0)
    return project_to_sphere(g, w, r, t)


def _near_projection(g, u, r, t, slack=1e-13):
    # rescaling by a factor within rounding of 1 only injects energy noise
    c = (r * t / float(np.dot(g.mu, np.abs(u) ** r))) ** (1.0 / r)
    return u * c if abs(c - 1.0) > slack else u


def _constrained_run(g, params, cfg, u, r, t, seed):
    t0 = time.perf_counter()
    u = project_to_sphere(g, np.abs(u), r, t)
    du = gradient(g, u)
    it = 0
    s, dx, dgr = None, None, None
    hist = [energy_I(g, u, params)]
    decs = []
    sign_restarts = 0

    def state(x):
        Lx = apply_L(g, x, params)
        G = g.mu * Lx
        pw = np.sign(x) * np.abs(x) ** (r - 1)
        h = g.mu * pw
        lam = lagrange_multiplier(g, x, params, r)
        res = max(float(np.max(np.abs(G - lam * h))), float(np.max(np.abs(Lx - lam * pw))))
        d = G - (float(np.dot(G, h)) / float(np.dot(h, h))) * h
        return d, lam, res

    d, lam, res = state(u)
    while True:
        while res > cfg.grad_tol and it < cfg.max_iters:
            s = _trial_step(cfg, s, dx, dgr, s is None)
            dd = float(np.dot(d, d))
            while True:
                s = _safe_step(s)
                cand = _near_projection(g, u - s * d, r, t)
                delta = _energy_diff(g, du, gradient(g, cand - u), params)
                if not math.isfinite(delta):
                    raise NumericalError("non-finite energy in line search")
                if delta <= -cfg.armijo_c * s * dd:
                    break
                s *= cfg.shrink
                if s < cfg.min_step:
                    break
            if s < cfg.min_step:
                log.info("constrained run (seed %s): line search stalled at %d", seed, it)
                break
            new_d, lam, res = state(cand)
            dx, dgr = cand - u, new_d - d
            u, du, d = cand, gradient(g, cand), new_d
            decs.append(delta)
            hist.append(energy_I(g, u, params))
            it += 1
        # descent does not preserve sign; restart from |u| if it flipped
        if np.any(u < 0) and sign_restarts < 3:
            sign_restarts += 1
            log.info("constrained run (seed %s): sign change, restarting from |u|", seed)
            u = project_to_sphere(g, np.abs(u), r, t)
            du = gradient(g, u)
            d, lam, res = state(u)
            s = None
            hist.append(energy_I(g, u, params))
            continue
        break
    u = project_to_sphere(g, u, r, t)
    d, lam, res = state(u)
    peak = g.coords[int(np.argmax(np.abs(u)))].tolist() if g.dim else [int(np.argmax(np.abs(u)))]
    rep = SolveReport(
        converged=bool(res <= cfg.grad_tol and np.all(u >= 0)), iters=it,
        energy=energy_I(g, u, params), constraint=constraint_J(g, u, r),
        multiplier=lam, residual_inf=res, wall_ms=1e3 * (time.perf_counter() - t0),
        seed=seed, peak=peak, history=hist, decrements=decs,
    )
    return u, rep


def _random_start(g: Graph, rng: np.random.Generator) -> np.ndarray:
    z = np.abs(rng.standard_normal(g.n_interior))
    if g.dim == 0:
        return z
    # localized bump around a random point near the origin
    R = g.lattice.R if g.lattice is not None else int(np.abs(g.coords).max(initial=1))
    centre = rng.integers(-(R // 2), R // 2 + 1, size=g.dim)
    dist = np.abs(g.coords[: g.n_interior] - centre).sum(axis=1)
    return z * np.exp(-dist / rng.uniform(0.5, 2.0))


def minimize_constrained(g: Graph, params: DoublePhaseParams, cfg: SolverConfig,
                         starts=None, regime: str | None = None, seed_delta: bool = True):
    """Minimize ``I`` on ``{J = t}`` by normalized descent with multistart.

    Restart ``k`` begins from a random non-negative bump (seeded by
    ``cfg.seed + k``).  With ``seed_delta`` the rescaled ``delta_0`` is an
    extra start, and any arrays in ``starts`` are used as well.  Every step is
    an Armijo step along the tangential gradient followed by an exact
    rescaling onto the constraint.  Returns ``(u, lam, report)`` for the
    lowest-energy run, preferring converged runs; ``report.restarts`` lists
    every run with its energy and peak location.
    """
    r, t = cfg.r, cfg.t
    if r is None or t is None or not t > 0 or not r > 1:
        raise ValueError("constrained solve needs cfg.r > 1 and cfg.t > 0")
    params.for_graph(g)
    if cfg.check_hypotheses and g.lattice is not None:
        validate_exponents(g.dim, params, r, regime or params.profile)
    t0 = time.perf_counter()
    inits = []
    for k in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + k)
        inits.append((cfg.seed + k, _random_start(g, rng)))
    if seed_delta:
        origin = np.zeros(g.n_interior)
        origin[g.index_of((0,) * g.dim) if g.dim else 0] = 1.0
        inits.append(("delta0", origin))
    for j, x in enumerate(starts or []):
        inits.append((f"start{j}", np.asarray(x, dtype=float)))
    runs = [_constrained_run(g, params, cfg, x, r, t, seed) for seed, x in inits]
    best_u, best = min(runs, key=lambda ur: (not ur[1].converged, ur[1].energy, str(ur[1].seed)))
    best.restarts = [
        {"seed": rep.seed, "energy": rep.energy, "converged": rep.converged,
         "iters": rep.iters, "peak": rep.peak}
        for _, rep in runs
    ]
    best.wall_ms = 1e3 * (time.perf_counter() - t0)
    return best_u, best.multiplier, best


# ---------------------------------------------------------------------------
# brute-force oracle

def _batch_energy(g: Graph, U, params, f=None):
    """Energy of every row of ``U`` (independent of :func:`energy_I`)."""
    Ue = np.hstack([U, np.zeros((U.shape[0], g.n_halo))])
    D = np.abs(Ue[:, g.head] - Ue[:, g.tail])
    a = params.a[g.tail]
    vals = 0.5 * ((D**params.p / params.p + a * D**params.q / params.q) * g.weight).sum(axis=1)
    if f is not None:
        vals -= U @ (g.mu * f)
    return vals


def brute_force_oracle(g: Graph, params: DoublePhaseParams, f=None, constraint=None,
                       half_width: float = 4.0, points: int = 21, rounds: int = 12,
                       center=None, chunk: int = 200_000) -> np.ndarray:
    """Nested grid search for tiny graphs (at most 6 interior vertices).

    Minimizes ``I(u) - int f u`` (``f`` given) or ``I`` over the constraint
    set ``J = t`` (``constraint=(r, t)``, searched through the radial
    projection of the grid).  Each round evaluates a ``points^n`` grid around
    the incumbent and then zooms the window to two grid spacings.
    """
    n = g.n_interior
    if n > 6:
        raise CapacityError(f"brute force oracle supports at most 6 vertices, got {n}")
    if (f is None) == (constraint is None):
        raise ValueError("give exactly one of f or constraint")
    if f is not None:
        f = np.asarray(f, dtype=float)
        if not np.any(f):
            return np.zeros(n)
    c = np.zeros(n) if center is None else np.array(center, dtype=float)
    h = float(half_width)
    axis = np.linspace(-1.0, 1.0, points)
    for _ in range(rounds):
        best_val, best_pt = math.inf, c
        grid = itertools.product(axis, repeat=n)
        while True:
            block = np.array(list(itertools.islice(grid, chunk)))
            if block.size == 0:
                break
            U = c + h * block.reshape(-1, n)
            if constraint is not None:
                r, t = constraint
                m = (np.abs(U) ** r) @ g.mu
                U = U[m > 0]
                U = U * ((r * t / m[m > 0]) ** (1.0 / r))[:, None]
            vals = _batch_energy(g, U, params, f)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val, best_pt = vals[k], U[k]
        c = best_pt
        h *= 4.0 / (points - 1)
    return c
