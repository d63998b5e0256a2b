"""Truncated weighted graphs and the discrete calculus on them.

A :class:`Graph` holds ``n_interior`` interior vertices (indices ``0..n_interior-1``)
followed by ``n_halo`` halo vertices.  Functions on vertices are plain 1-D arrays
over the interior; halo values are pinned to zero.  Functions on edges are 1-D
arrays over the directed edge list, which always contains both orientations.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CapacityError",
    "Graph",
    "LatticeSpec",
    "build_lattice",
    "divergence",
    "dump_graph",
    "extend",
    "from_edge_list",
    "gradient",
    "integrate_edges",
    "integrate_vertices",
    "load_graph",
    "shift",
]

#: Default cap on ``N * (2R+1)**N`` for lattice construction.
MAX_LATTICE_ENTRIES = 20_000_000


class CapacityError(ValueError):
    """Raised when a requested graph exceeds the configured size budget."""


@dataclass(frozen=True)
class LatticeSpec:
    """Box ``{x in Z^N : |x_i| <= R}`` with a zero halo one layer outside."""

    N: int
    R: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"lattice dimension must be >= 1, got {self.N}")
        if self.R < 0:
            raise ValueError(f"box radius must be >= 0, got {self.R}")

    @property
    def side(self) -> int:
        return 2 * self.R + 1

    @property
    def n_interior(self) -> int:
        return self.side**self.N


@dataclass(frozen=True, eq=False)
class Graph:
    """Finite weighted graph with a Dirichlet halo.

    Attributes
    ----------
    n_interior, n_halo : int
        Interior vertices come first, halo vertices after them.
    tail, head : ndarray of int
        Directed edges ``(tail[e], head[e])``; every edge has its reverse.
    weight : ndarray of float
        Symmetric positive edge weights ``w_xy``.
    reverse : ndarray of int
        ``reverse[e]`` is the index of the edge ``(head[e], tail[e])``.
    mu : ndarray of float
        Vertex measure on the interior.
    coords : ndarray of int, shape (n_interior + n_halo, N)
        Integer coordinates (lattice graphs); ``N`` may be 0 for general graphs.
    """

    n_interior: int
    n_halo: int
    tail: np.ndarray
    head: np.ndarray
    weight: np.ndarray
    reverse: np.ndarray
    mu: np.ndarray
    coords: np.ndarray
    lattice: LatticeSpec | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("tail", "head", "weight", "reverse", "mu", "coords"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.n_interior + self.n_halo

    @property
    def n_edges(self) -> int:
        return self.tail.size

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def index_of(self, coord) -> int:
        """Vertex index for an integer coordinate tuple (interior or halo)."""
        try:
            return self._index[tuple(int(c) for c in coord)]
        except KeyError:
            raise KeyError(f"coordinate {tuple(coord)} is not in the graph") from None

    def delta(self, coord=None, value: float = 1.0) -> np.ndarray:
        """Interior vertex function ``value * delta_coord`` (origin by default)."""
        if coord is None:
            coord = (0,) * self.dim
        i = self.index_of(coord)
        if i >= self.n_interior:
            raise KeyError(f"coordinate {tuple(coord)} is a halo vertex")
        u = np.zeros(self.n_interior)
        u[i] = value
        return u

    def degree(self) -> np.ndarray:
        return np.bincount(self.tail, minlength=self.n_vertices)

    def norm1(self) -> np.ndarray:
        """Graph distance to the origin, ``|x| = sum |x_i|``, for every vertex."""
        return np.abs(self.coords).sum(axis=1)


def _validate(n_interior, n_halo, tail, head, weight, mu):
    nv = n_interior + n_halo
    if mu.shape != (n_interior,):
        raise ValueError("vertex measure must have one entry per interior vertex")
    if np.any(mu <= 0):
        raise ValueError("vertex measure must be positive")
    if np.any(weight <= 0):
        raise ValueError("edge weights must be positive")
    if tail.size and (tail.min() < 0 or max(tail.max(), head.max()) >= nv):
        raise ValueError("edge endpoint out of range")
    if np.any(tail == head):
        raise ValueError("self-loops are not allowed")
    halo_only = (tail >= n_interior) & (head >= n_interior)
    if np.any(halo_only):
        raise ValueError("halo-halo edges are not allowed")


def _reverse_index(tail, head, weight):
    lookup = {(int(t), int(h)): e for e, (t, h) in enumerate(zip(tail, head))}
    reverse = np.empty(tail.size, dtype=np.int64)
    for e, (t, h) in enumerate(zip(tail, head)):
        r = lookup.get((int(h), int(t)))
        if r is None:
            raise ValueError(f"edge ({t}, {h}) has no reverse orientation")
        if weight[r] != weight[e]:
            raise ValueError(f"edge ({t}, {h}) has asymmetric weight")
        reverse[e] = r
    return reverse


def _sorted_edges(pairs, weights):
    # Stable sort by tail keeps each vertex's neighbour order fixed.
    order = sorted(range(len(pairs)), key=lambda k: pairs[k][0])
    tail = np.array([pairs[k][0] for k in order], dtype=np.int64)
    head = np.array([pairs[k][1] for k in order], dtype=np.int64)
    weight = np.array([weights[k] for k in order], dtype=float)
    return tail, head, weight


def from_edge_list(n_interior, n_halo, edges, mu=None, coords=None) -> Graph:
    """Build a graph from undirected edges ``(i, j, w)``; both orientations are added."""
    pairs, weights = [], []
    for i, j, w in edges:
        pairs += [(int(i), int(j)), (int(j), int(i))]
        weights += [float(w), float(w)]
    tail, head, weight = _sorted_edges(pairs, weights)
    mu = np.ones(n_interior) if mu is None else np.asarray(mu, dtype=float)
    nv = n_interior + n_halo
    coords = np.asarray([] if coords is None else coords, dtype=np.int64)
    coords = coords.reshape(nv, -1) if coords.size else np.zeros((nv, 0), dtype=np.int64)
    _validate(n_interior, n_halo, tail, head, weight, mu)
    index = {}
    if coords.shape[1]:
        index = {tuple(int(c) for c in row): k for k, row in enumerate(coords)}
    return Graph(
        n_interior, n_halo, tail, head, weight,
        _reverse_index(tail, head, weight), mu, coords, None, index,
    )


def build_lattice(spec: LatticeSpec, max_entries: int = MAX_LATTICE_ENTRIES) -> Graph:
    """Box of ``Z^N`` with unit measure and weights plus its one-layer halo.

    Interior vertices are numbered row-major (last coordinate fastest).  Every
    interior vertex lists its ``2N`` neighbours in the order
    ``-e_1, +e_1, -e_2, +e_2, ...``; halo vertices follow the same rule for
    their single interior neighbour.
    """
    N, R = spec.N, spec.R
    if N * spec.n_interior > max_entries:
        raise CapacityError(
            f"lattice N={N}, R={R} has {N * spec.n_interior} coordinate entries, "
            f"budget is {max_entries}"
        )
    rng = range(-R, R + 1)
    interior = np.array(list(itertools.product(rng, repeat=N)), dtype=np.int64).reshape(-1, N)
    index = {tuple(int(c) for c in row): k for k, row in enumerate(interior)}
    halo_coords = []
    steps = []
    for i in range(N):
        for s in (-1, 1):
            e = np.zeros(N, dtype=np.int64)
            e[i] = s
            steps.append(e)

    tails, heads = [], []
    halo_edges = []
    for k, x in enumerate(interior):
        for e in steps:
            y = tuple(int(c) for c in x + e)
            j = index.get(y)
            if j is None:
                # a halo point of a cube has exactly one interior neighbour
                j = len(index)
                index[y] = j
                halo_coords.append(y)
            tails.append(k)
            heads.append(j)
            if j >= interior.shape[0]:
                halo_edges.append((j, k))

    n_int = interior.shape[0]
    n_halo = len(halo_coords)
    # halo -> interior orientations, appended in halo index order
    halo_edges.sort(key=lambda he: he[0])
    tails += [h for h, _ in halo_edges]
    heads += [k for _, k in halo_edges]
    tail = np.array(tails, dtype=np.int64)
    head = np.array(heads, dtype=np.int64)
    weight = np.ones(tail.size)
    coords = np.vstack([interior, np.array(halo_coords, dtype=np.int64).reshape(-1, N)])
    return Graph(
        n_int, n_halo, tail, head, weight, _reverse_index(tail, head, weight),
        np.ones(n_int), coords, spec, index,
    )


def extend(g: Graph, u) -> np.ndarray:
    """Zero-extend an interior vertex function to interior + halo."""
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n_interior,):
        raise ValueError(f"vertex function has shape {u.shape}, expected ({g.n_interior},)")
    return np.concatenate([u, np.zeros(g.n_halo)])


def _check_edge(g: Graph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n_edges,):
        raise ValueError(f"edge function has shape {f.shape}, expected ({g.n_edges},)")
    return f


def gradient(g: Graph, u) -> np.ndarray:
    """``(grad u)(x, y) = u(y) - u(x)`` on every directed edge."""
    ue = extend(g, u)
    return ue[g.head] - ue[g.tail]


def divergence(g: Graph, f) -> np.ndarray:
    """``(div f)(x) = 1/(2 mu(x)) sum_y w_xy (f(x,y) - f(y,x))`` on the interior."""
    f = _check_edge(g, f)
    terms = g.weight * (f - f[g.reverse])
    # bincount accumulates in edge order, so results are schedule independent
    s = np.bincount(g.tail, weights=terms, minlength=g.n_vertices)[: g.n_interior]
    return s / (2.0 * g.mu)


def integrate_vertices(g: Graph, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n_interior,):
        raise ValueError(f"vertex function has shape {u.shape}, expected ({g.n_interior},)")
    return float(np.dot(g.mu, u))


def integrate_edges(g: Graph, f) -> float:
    """Half the weighted sum over directed edges."""
    f = _check_edge(g, f)
    return 0.5 * float(np.dot(g.weight, f))


def shift(g: Graph, u, offset) -> np.ndarray:
    """Translate an interior function: ``result(x + offset) = u(x)``.

    Raises ``ValueError`` if any support point would leave the interior.
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros(g.n_interior)
    offset = np.asarray(offset, dtype=np.int64)
    for k in np.flatnonzero(u):
        target = tuple(int(c) for c in g.coords[k] + offset)
        j = g._index.get(target)
        if j is None or j >= g.n_interior:
            raise ValueError(f"shift moves support point {tuple(g.coords[k])} out of the box")
        out[j] = u[k]
    return out


def dump_graph(g: Graph, path) -> None:
    """Write the line-oriented debug format.

    ``v <index> <coords...> <mu>`` per interior vertex, ``h <index> <coords...>``
    per halo vertex and ``e <i> <j> <w>`` per undirected edge.
    """
    lines = []
    for k in range(g.n_interior):
        cs = [str(int(c)) for c in g.coords[k]]
        lines.append(" ".join(["v", str(k), *cs, repr(float(g.mu[k]))]))
    for k in range(g.n_interior, g.n_vertices):
        cs = [str(int(c)) for c in g.coords[k]]
        lines.append(" ".join(["h", str(k), *cs]))
    for e in range(g.n_edges):
        i, j = int(g.tail[e]), int(g.head[e])
        if i < j:
            lines.append(f"e {i} {j} {float(g.weight[e])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> Graph:
    """Read a graph written by :func:`dump_graph` (or by hand in that format)."""
    verts, halos, edges = {}, {}, []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "v":
                verts[int(tok[1])] = ([int(c) for c in tok[2:-1]], float(tok[-1]))
            elif tok[0] == "h":
                halos[int(tok[1])] = [int(c) for c in tok[2:]]
            elif tok[0] == "e":
                edges.append((int(tok[1]), int(tok[2]), float(tok[3])))
            else:
                raise ValueError(f"unknown record type {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed line {raw!r}: {exc}") from None
    n_int, n_halo = len(verts), len(halos)
    if sorted(verts) != list(range(n_int)) or sorted(halos) != list(range(n_int, n_int + n_halo)):
        raise ValueError(f"{path}: interior indices must be 0..n-1 and halo indices follow them")
    mu = [verts[k][1] for k in range(n_int)]
    coords = [verts[k][0] for k in range(n_int)] + [halos[k] for k in range(n_int, n_int + n_halo)]
    dims = {len(c) for c in coords}
    if len(dims) > 1:
        raise ValueError(f"{path}: inconsistent coordinate dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    coords = np.array(coords, dtype=np.int64).reshape(n_int + n_halo, dim)
    return from_edge_list(n_int, n_halo, edges, mu=mu, coords=coords)
