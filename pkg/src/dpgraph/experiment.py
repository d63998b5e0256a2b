"""Experiment configs, coefficient profiles and run orchestration."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .graph import Graph, LatticeSpec, build_lattice, gradient, load_graph
from .norms import DoublePhaseParams
from .operator import energy_I
from .solvers import (SolverConfig, delta_candidate, minimize_constrained, solve_monotone)

log = logging.getLogger(__name__)

PROFILES = ("zero", "constant", "coercive", "periodic", "bounded_potential", "custom")
SWEEP_COLUMNS = ["t", "I", "lambda", "residual", "iters", "seed", "converged"]


class ConfigError(ValueError):
    """Invalid experiment config; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# ---------------------------------------------------------------------------
# coefficient profiles

def _periodic_table(args, N):
    T = args["T"]
    table = np.asarray(args["table"], dtype=float)
    if table.size != T**N:
        raise ValueError(f"periodic table needs T^N = {T**N} entries, got {table.size}")
    return table.reshape((T,) * N)


def build_coefficient(profile: str, g: Graph, **args) -> np.ndarray:
    """Tabulate ``a(x)`` on every vertex (interior and halo) of ``g``.

    ``|x|`` is the graph distance to the origin, the l1 norm of the coordinates.
    Profiles: ``zero``; ``constant(c)``; ``coercive(c, s)`` with
    ``a = c |x|^s``; ``periodic(T, table)`` with ``a(x) = table[x mod T]``;
    ``bounded_potential(a_inf, c)`` with ``a = a_inf - c / (1 + |x|)``;
    ``custom(file)`` reading ``coords... value`` lines (``default`` fills
    vertices the file omits).
    """
    nv = g.n_vertices
    dist = g.norm1().astype(float)
    if profile == "zero":
        return np.zeros(nv)
    if profile == "constant":
        return np.full(nv, float(args["c"]))
    if profile == "coercive":
        return float(args.get("c", 1.0)) * dist ** float(args.get("s", 1.0))
    if profile == "periodic":
        table = _periodic_table(args, g.dim)
        idx = tuple(np.mod(g.coords, args["T"]).T)
        return table[idx].astype(float)
    if profile == "bounded_potential":
        return float(args["a_inf"]) - float(args["c"]) / (1.0 + dist)
    if profile == "custom":
        return _read_custom(g, args["file"], args.get("default"))
    raise ValueError(f"unknown coefficient profile {profile!r}")


def _read_custom(g: Graph, path, default=None):
    path = Path(path)
    if not path.is_file():
        raise OSError(f"coefficient file {path} not found")
    a = np.full(g.n_vertices, np.nan if default is None else float(default))
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            *coord, value = line
            k = g.index_of([int(c) for c in coord]) if g.dim else int(coord[0])
            a[k] = float(value)
        except (ValueError, KeyError, IndexError) as exc:
            raise OSError(f"{path}:{lineno}: malformed coefficient line {raw!r} ({exc})") from None
    if np.isnan(a).any():
        raise OSError(f"{path}: {int(np.isnan(a).sum())} vertices have no coefficient")
    return a


def verify_profile(profile: str, g: Graph, a: np.ndarray, **args) -> None:
    """Re-check a tabulated coefficient against its profile's defining property."""
    if np.any(a < 0):
        raise ValueError(f"{profile} coefficient takes negative values")
    dist = g.norm1()
    if profile == "zero" and np.any(a != 0):
        raise ValueError("zero profile is not identically zero")
    if profile == "constant" and np.any(a != a[0]):
        raise ValueError("constant profile is not constant")
    if profile == "coercive":
        # a finite table cannot show a limit; check growth along the shells
        shell_min = [a[dist == k].min() for k in range(int(dist.max()) + 1)]
        if not np.all(np.diff(shell_min) > 0):
            raise ValueError("coercive profile does not grow with |x| on this box")
    if profile == "periodic":
        T = args["T"]
        for i in range(g.dim):
            step = np.zeros(g.dim, dtype=np.int64)
            step[i] = T
            for k in range(g.n_vertices):
                j = g._index.get(tuple(int(c) for c in g.coords[k] + step))
                if j is not None and a[j] != a[k]:
                    raise ValueError(f"periodic profile breaks a(x + T e_{i + 1}) = a(x)")
    if profile == "bounded_potential" and np.any(a > float(args["a_inf"])):
        raise ValueError("bounded potential exceeds its limit a_inf")


# ---------------------------------------------------------------------------
# config

@dataclass
class ExperimentConfig:
    mode: str
    lattice: dict | None = None
    graph_file: str | None = None
    p: float = 1.5
    q: float = 2.5
    r: float | None = None
    profile: str = "zero"
    profile_args: dict = field(default_factory=dict)
    f: dict = field(default_factory=lambda: {"type": "zero"})
    t: float | None = None
    t_list: list | None = None
    solver: dict = field(default_factory=dict)
    workers: int = 1
    auto_refine: bool = False
    refine_tol: float = 1e-2
    output: str = "out"

    def solver_config(self, **overrides) -> SolverConfig:
        kw = dict(self.solver)
        kw.update(r=self.r, t=self.t)
        kw.update(overrides)
        return SolverConfig(**kw)


_SOLVER_KEYS = {f.name for f in fields(SolverConfig)} - {"r", "t"}
_PROFILE_KEYS = {
    "zero": set(), "constant": {"c"}, "coercive": {"c", "s"}, "periodic": {"T", "table"},
    "bounded_potential": {"a_inf", "c"}, "custom": {"file", "default"},
}


def _num(d, key, path, kind=float, required=True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}", "missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if kind is int and v != int(v):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    return kind(v)


def _section(raw, key, path="config"):
    v = raw.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{path}.{key}", "expected a mapping")
    return v


def _unknown(d, allowed, path):
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")


def parse_config(raw: dict, base: Path | None = None) -> ExperimentConfig:
    """Validate a config mapping (as loaded from YAML) into an :class:`ExperimentConfig`.

    Raises :class:`ConfigError` naming the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a mapping at top level")
    _unknown(raw, {"lattice", "graph", "exponents", "coefficient", "mode", "solver", "output"},
             "config")
    base = base or Path(".")

    lat = _section(raw, "lattice")
    graph = _section(raw, "graph")
    lattice = graph_file = None
    auto_refine, refine_tol = False, 1e-2
    if lat and graph:
        raise ConfigError("config.graph", "give either lattice or graph, not both")
    if graph:
        _unknown(graph, {"file"}, "config.graph")
        if not isinstance(graph.get("file"), str):
            raise ConfigError("config.graph.file", "expected a path")
        graph_file = str(base / graph["file"])
    else:
        _unknown(lat, {"N", "R", "auto_refine", "refine_tol"}, "config.lattice")
        N = _num(lat, "N", "config.lattice", int)
        R = _num(lat, "R", "config.lattice", int)
        if N < 2:
            raise ConfigError("config.lattice.N", f"dimension must be >= 2, got {N}")
        if R < 0:
            raise ConfigError("config.lattice.R", f"radius must be >= 0, got {R}")
        lattice = {"N": N, "R": R}
        auto_refine = bool(lat.get("auto_refine", False))
        refine_tol = _num(lat, "refine_tol", "config.lattice", required=False, default=1e-2)

    ex = _section(raw, "exponents")
    _unknown(ex, {"p", "q", "r"}, "config.exponents")
    p = _num(ex, "p", "config.exponents")
    q = _num(ex, "q", "config.exponents")
    r = _num(ex, "r", "config.exponents", required=False)
    if not 1 < p < q:
        raise ConfigError("config.exponents", f"need 1 < p < q, got p={p}, q={q}")
    if lattice and not p < lattice["N"]:
        raise ConfigError("config.exponents.p", f"need p < N = {lattice['N']}, got {p}")

    co = dict(_section(raw, "coefficient"))
    profile = co.pop("profile", "zero")
    if profile not in PROFILES:
        raise ConfigError("config.coefficient.profile", f"unknown profile {profile!r}")
    _unknown(co, _PROFILE_KEYS[profile], "config.coefficient")
    cpath = "config.coefficient"
    if profile == "constant":
        co["c"] = _num(co, "c", cpath)
    elif profile == "coercive":
        co["c"] = _num(co, "c", cpath, required=False, default=1.0)
        co["s"] = _num(co, "s", cpath, required=False, default=1.0)
        if co["c"] <= 0 or co["s"] <= 0:
            raise ConfigError(cpath, "coercive profile needs c > 0 and s > 0")
    elif profile == "periodic":
        co["T"] = _num(co, "T", cpath, int)
        if co["T"] < 1:
            raise ConfigError(f"{cpath}.T", "period must be >= 1")
        table = co.get("table")
        flat = np.asarray(table, dtype=float).ravel() if table is not None else None
        N = lattice["N"] if lattice else None
        if flat is None or (N is not None and flat.size != co["T"] ** N):
            raise ConfigError(f"{cpath}.table", "need T^N values in row-major order")
        co["table"] = [float(v) for v in flat]
    elif profile == "bounded_potential":
        co["a_inf"] = _num(co, "a_inf", cpath)
        co["c"] = _num(co, "c", cpath)
        if not 0 <= co["c"] <= co["a_inf"]:
            raise ConfigError(cpath, "bounded potential needs 0 <= c <= a_inf")
    elif profile == "custom":
        if not isinstance(co.get("file"), str):
            raise ConfigError(f"{cpath}.file", "expected a path")
        co["file"] = str(base / co["file"])
    if profile in ("constant", "periodic") and np.any(np.asarray(co.get("table", [co.get("c", 0)])) < 0):
        raise ConfigError(cpath, "coefficient must be non-negative")

    mode = _section(raw, "mode")
    kind = mode.get("kind")
    cfg = ExperimentConfig(mode=kind, lattice=lattice, graph_file=graph_file, p=p, q=q, r=r,
                           profile=profile, profile_args=co, auto_refine=auto_refine,
                           refine_tol=refine_tol)
    if kind == "monotone":
        _unknown(mode, {"kind", "f"}, "config.mode")
        f = mode.get("f", {"type": "zero"})
        if not isinstance(f, dict) or f.get("type") not in ("zero", "delta", "file"):
            raise ConfigError("config.mode.f.type", "expected zero, delta or file")
        f = dict(f)
        if f["type"] == "delta":
            f["value"] = _num(f, "value", "config.mode.f", required=False, default=1.0)
            f["at"] = [int(c) for c in f.get("at", [0] * (lattice["N"] if lattice else 0))]
        if f["type"] == "file":
            f["file"] = str(base / f["file"])
        cfg.f = f
    elif kind in ("ground_state", "sweep"):
        _unknown(mode, {"kind", "t", "t_list"}, "config.mode")
        if r is None:
            raise ConfigError("config.exponents.r", f"mode {kind} needs r")
        if r <= p:
            raise ConfigError("config.exponents.r", f"need r > p, got r={r}")
        if kind == "ground_state":
            cfg.t = _num(mode, "t", "config.mode")
            if cfg.t <= 0:
                raise ConfigError("config.mode.t", "t must be positive")
        else:
            ts = mode.get("t_list")
            if not isinstance(ts, list) or len(ts) < 3:
                raise ConfigError("config.mode.t_list", "need a list of at least 3 values")
            ts = sorted(float(v) for v in ts)
            if ts[0] <= 0:
                raise ConfigError("config.mode.t_list", "values must be positive")
            if ts[-1] / ts[0] < 100:
                raise ConfigError("config.mode.t_list", "sweep must span at least 2 decades")
            cfg.t_list = ts
    else:
        raise ConfigError("config.mode.kind", f"expected monotone, ground_state or sweep, got {kind!r}")

    solver = dict(_section(raw, "solver"))
    workers = solver.pop("workers", 1)
    _unknown(solver, _SOLVER_KEYS, "config.solver")
    try:
        SolverConfig(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError("config.solver", str(exc)) from None
    cfg.solver = solver
    cfg.workers = int(workers)
    out = raw.get("output", "out")
    if not isinstance(out, str):
        raise ConfigError("config.output", "expected a path")
    cfg.output = str(base / out)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> dict:
    """Inverse of :func:`parse_config` for normalized configs."""
    out = {}
    if cfg.graph_file:
        out["graph"] = {"file": cfg.graph_file}
    else:
        out["lattice"] = dict(cfg.lattice, auto_refine=cfg.auto_refine, refine_tol=cfg.refine_tol)
    ex = {"p": cfg.p, "q": cfg.q}
    if cfg.r is not None:
        ex["r"] = cfg.r
    out["exponents"] = ex
    out["coefficient"] = {"profile": cfg.profile, **cfg.profile_args}
    mode = {"kind": cfg.mode}
    if cfg.mode == "monotone":
        mode["f"] = cfg.f
    elif cfg.mode == "ground_state":
        mode["t"] = cfg.t
    else:
        mode["t_list"] = list(cfg.t_list)
    out["mode"] = mode
    out["solver"] = dict(cfg.solver, workers=cfg.workers)
    out["output"] = cfg.output
    return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None
    return parse_config(raw, base=path.parent)


# ---------------------------------------------------------------------------
# building blocks

def make_graph(cfg: ExperimentConfig, R: int | None = None) -> Graph:
    if cfg.graph_file:
        return load_graph(cfg.graph_file)
    return build_lattice(LatticeSpec(cfg.lattice["N"], R if R is not None else cfg.lattice["R"]))


def make_params(cfg: ExperimentConfig, g: Graph) -> DoublePhaseParams:
    a = build_coefficient(cfg.profile, g, **cfg.profile_args)
    verify_profile(cfg.profile, g, a, **cfg.profile_args)
    return DoublePhaseParams(cfg.p, cfg.q, a, cfg.profile, dict(cfg.profile_args))


def make_rhs(cfg: ExperimentConfig, g: Graph) -> np.ndarray:
    f = cfg.f
    if f["type"] == "zero":
        return np.zeros(g.n_interior)
    if f["type"] == "delta":
        return g.delta(f["at"] if g.dim else None, f["value"]) if g.dim else _delta_index(g, f)
    return _read_custom(g, f["file"], default=0.0)[: g.n_interior]


def _delta_index(g, f):
    u = np.zeros(g.n_interior)
    u[int(f.get("index", 0))] = f["value"]
    return u


def write_solution(path, g: Graph, u, header: dict) -> None:
    """Header lines ``# key value`` followed by ``coords... value`` per interior vertex."""
    lines = [f"# {k} {v}" for k, v in header.items()]
    for k in range(g.n_interior):
        cs = [str(int(c)) for c in g.coords[k]] if g.dim else [str(k)]
        lines.append(" ".join(cs + [repr(float(u[k]))]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path):
    """Return ``(header, coords, values)`` from a file written by :func:`write_solution`."""
    header, coords, vals = {}, [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition(" ")
            header[k] = v
        elif line.strip():
            *cs, v = line.split()
            coords.append([int(c) for c in cs])
            vals.append(float(v))
    return header, np.array(coords, dtype=np.int64), np.array(vals)


def halo_energy_share(g: Graph, u, params: DoublePhaseParams) -> float:
    """Share of the edge modular of ``grad u`` carried by edges touching the halo.

    A large share means the zero boundary condition is shaping the solution.
    """
    du = np.abs(gradient(g, u))
    dens = g.weight * (du**params.p + params.a[g.tail] * du**params.q)
    halo = (g.tail >= g.n_interior) | (g.head >= g.n_interior)
    total = float(dens.sum())
    return float(dens[halo].sum()) / total if total > 0 else 0.0


def _header(cfg, g, t, seed):
    return {
        "N": g.dim, "R": g.lattice.R if g.lattice else "", "p": cfg.p, "q": cfg.q,
        "r": cfg.r if cfg.r is not None else "", "t": t if t is not None else "",
        "profile": cfg.profile, "seed": seed,
    }


def run_ground_state(cfg: ExperimentConfig, t: float, R: int | None = None):
    """One constrained solve at level ``t``; returns ``(g, params, u, lam, report)``."""
    g = make_graph(cfg, R)
    params = make_params(cfg, g)
    scfg = cfg.solver_config(t=t)
    u, lam, rep = minimize_constrained(g, params, scfg, regime=cfg.profile)
    share = halo_energy_share(g, u, params)
    if cfg.auto_refine and R is None and g.lattice is not None and share > cfg.refine_tol:
        log.info("halo carries %.3g of the energy at R=%d, doubling R", share, g.lattice.R)
        return run_ground_state(cfg, t, R=2 * g.lattice.R)
    rep.halo_share = share
    return g, params, u, lam, rep


def _sweep_point(args):
    cfg, t = args
    g, params, u, lam, rep = run_ground_state(cfg, t)
    return t, g, params, u, lam, rep


def sweep_lambda(cfg: ExperimentConfig):
    """Run the constrained problem for every ``t`` in the sweep, ordered by ``t``.

    Returns ``(rows, summary, solutions)``.  ``summary`` carries the per-row
    multiplier sandwich check and log-log slopes of ``lambda(t)`` at both ends.
    """
    jobs = [(cfg, t) for t in cfg.t_list]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    results.sort(key=lambda res: res[0])
    rows, sols, sandwich, halo = [], [], [], []
    r, p, q = cfg.r, cfg.p, cfg.q
    for t, g, params, u, lam, rep in results:
        slack = rep.residual_inf
        lo, hi = p * rep.energy / (r * t), q * rep.energy / (r * t)
        sandwich.append(bool(lo - slack <= lam <= hi + slack))
        rows.append({
            "t": t, "I": rep.energy, "lambda": lam, "residual": rep.residual_inf,
            "iters": rep.iters, "seed": rep.seed, "converged": rep.converged,
        })
        halo.append(rep.halo_share)
        sols.append((t, g, u, rep))
    ts = np.array([row["t"] for row in rows])
    lams = np.array([row["lambda"] for row in rows])
    logt, logl = np.log(ts), np.log(lams)
    summary = {
        "slope_fit": float(np.polyfit(logt, logl, 1)[0]),
        "slope_small_t": float((logl[1] - logl[0]) / (logt[1] - logt[0])),
        "slope_large_t": float((logl[-1] - logl[-2]) / (logt[-1] - logt[-2])),
        "homogeneous_slope": p / r - 1,
        "q_slope": q / r - 1,
        "lambda_strictly_decreasing": bool(np.all(np.diff(lams) < 0)),
        "sandwich_ok": sandwich,
        "halo_share": halo,
        "all_converged": all(row["converged"] for row in rows),
    }
    return rows, summary, sols


def write_csv(path, rows) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(float(row[k])) if isinstance(row[k], float) else row[k])
                    for k in SWEEP_COLUMNS})
    Path(path).write_text(buf.getvalue())


def run(cfg: ExperimentConfig) -> int:
    """Execute a parsed config and write its artifacts; returns the exit code."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = {"config": serialize_config(cfg)}
    if cfg.mode == "monotone":
        g = make_graph(cfg)
        params = make_params(cfg, g)
        f = make_rhs(cfg, g)
        u, rep = solve_monotone(g, f, params, cfg.solver_config())
        write_solution(out / "solution.txt", g, u, _header(cfg, g, None, cfg.solver_config().seed))
        report["result"] = rep.to_dict()
        ok = rep.converged
    elif cfg.mode == "ground_state":
        g, params, u, lam, rep = run_ground_state(cfg, cfg.t)
        write_solution(out / "solution.txt", g, u, _header(cfg, g, cfg.t, rep.seed))
        report["result"] = rep.to_dict()
        report["result"]["delta_candidate_energy"] = energy_I(
            g, delta_candidate(g, cfg.r, cfg.t), params)
        ok = rep.converged
    else:
        rows, summary, sols = sweep_lambda(cfg)
        write_csv(out / "sweep.csv", rows)
        for t, g, u, rep in sols:
            write_solution(out / f"solution_t{t:.6g}.txt", g, u, _header(cfg, g, t, rep.seed))
        report["rows"] = rows
        report["summary"] = summary
        ok = summary["all_converged"]
    report["wall_s"] = time.perf_counter() - t0
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_jsonable) + "\n")
    return 0 if ok else 1


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# tiny instances shared by ``dpg oracle`` and the tests

@dataclass
class OracleInstance:
    name: str
    graph: Graph
    params: DoublePhaseParams
    f: np.ndarray | None = None
    constraint: tuple | None = None
    half_width: float = 4.0


def path_graph(n: int) -> Graph:
    """Path of ``n`` interior vertices with a halo vertex at each end."""
    from .graph import from_edge_list

    edges = [(i, i + 1, 1.0) for i in range(n - 1)] + [(0, n, 1.0), (n - 1, n + 1, 1.0)]
    coords = [[i] for i in range(n)] + [[-1], [n]]
    return from_edge_list(n, 2, edges, coords=coords)


def oracle_instances() -> list:
    """Every instance with at most three interior vertices used for oracle checks."""
    out = []
    box0 = build_lattice(LatticeSpec(2, 0))
    for abar, c in [(0.0, 1.0), (1.0, 3.0), (0.5, -2.0)]:
        params = DoublePhaseParams(1.5, 2.5, np.full(box0.n_vertices, abar), "constant")
        out.append(OracleInstance(f"box0_a{abar}_c{c}", box0, params, f=box0.delta(value=c)))
    p3 = path_graph(3)
    out.append(OracleInstance("path3_laplacian", p3, DoublePhaseParams(2.0, 3.0, np.zeros(5), "zero"),
                              f=np.array([0.0, 1.0, 0.0])))
    a5 = np.array([0.0, 1.0, 2.0, 0.5, 1.5])
    out.append(OracleInstance("path3_double_phase", p3, DoublePhaseParams(1.5, 2.5, a5, "custom"),
                              f=np.array([0.3, -0.5, 1.0])))
    p2 = path_graph(2)
    out.append(OracleInstance("path2_double_phase", p2,
                              DoublePhaseParams(1.8, 4.0, np.array([1.0, 0.0, 2.0, 1.0]), "custom"),
                              f=np.array([1.0, 0.5])))
    out.append(OracleInstance("path3_zero_rhs", p3, DoublePhaseParams(1.5, 2.5, a5, "custom"),
                              f=np.zeros(3)))
    out.append(OracleInstance("path3_constrained", p3, DoublePhaseParams(1.5, 2.5, a5, "custom"),
                              constraint=(7.0, 1.0 / 7.0), half_width=1.0))
    return out
