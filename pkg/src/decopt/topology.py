"""Graphs, incidence/Laplacian matrices and mixing matrices.

Everything here is immutable after construction and safe to share between
concurrent runs.  Communication counters are owned by the run context and
passed explicitly to the message-exchange primitives (`mix`, and the
Laplacian / neighbor-sum applications on `Topology`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SPECTRAL_TOL = 1e-10

GRAPH_KINDS = ("complete", "cycle", "path", "line", "star", "hypercube",
               "random_regular", "custom")

# "circle" is the name some benchmark write-ups use for the ring topology
_KIND_ALIASES = {"line": "path", "circle": "cycle", "ring": "cycle"}


class GraphError(ValueError):
    """Invalid or infeasible graph construction."""


class MixingError(ValueError):
    """Mixing matrix violates the required structural/spectral conditions."""


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph on nodes 0..n-1.

    Edges are stored as a lexicographically sorted tuple of (i, j) pairs with
    i < j; this fixed ordering also fixes the row order of the incidence
    matrix, so dual variables are reproducible across runs.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    kind: str = "custom"

    def __post_init__(self):
        if self.n < 2:
            raise GraphError(f"need at least 2 nodes, got {self.n}")
        seen = set()
        for (i, j) in self.edges:
            if not (0 <= i < j < self.n):
                raise GraphError(f"bad edge ({i}, {j}) for n={self.n}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        if not self._connected():
            raise GraphError("graph is not connected")

    def _connected(self) -> bool:
        adj = [[] for _ in range(self.n)]
        for (i, j) in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for k in adj[stack.pop()]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
        return len(seen) == self.n

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for (i, j) in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=int)
        for (i, j) in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def incidence(self) -> np.ndarray:
        """|E| x n incidence matrix: +1 at (e, i), -1 at (e, j) for edge i < j."""
        a = np.zeros((len(self.edges), self.n), dtype=int)
        for e, (i, j) in enumerate(self.edges):
            a[e, i] = 1
            a[e, j] = -1
        return a

    def laplacian(self) -> np.ndarray:
        # equals incidence().T @ incidence() entrywise, in exact integers
        return np.diag(self.degrees) - self.adjacency()

    def to_edge_list_text(self) -> str:
        """One '"i j"' pair per line, 0-indexed."""
        return "\n".join(f"{i} {j}" for (i, j) in self.edges) + "\n"


def build_graph(kind: str, n: int, degree: int | None = None,
                seed=None, max_retries: int = 20000) -> Graph:
    """Construct a connected graph of the requested family.

    random_regular uses the pairing (configuration) model, rejecting
    self-loops, multi-edges and disconnected outcomes, up to `max_retries`.
    """
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in GRAPH_KINDS or kind == "custom":
        raise GraphError(f"unknown graph kind {kind!r}")
    if n < 2:
        raise GraphError(f"need at least 2 nodes, got {n}")

    if kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        if n < 3:
            raise GraphError("cycle needs n >= 3")
        edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, n)]
    elif kind == "hypercube":
        k = n.bit_length() - 1
        if 2 ** k != n:
            raise GraphError(f"hypercube needs a power-of-two node count, got {n}")
        edges = [(i, i ^ (1 << b)) for i in range(n) for b in range(k)
                 if i < i ^ (1 << b)]
    elif kind == "random_regular":
        if degree is None:
            raise GraphError("random_regular needs a degree")
        if degree >= n or degree < 1 or (n * degree) % 2 != 0:
            raise GraphError(f"infeasible regular graph: n={n}, degree={degree}")
        edges = _pairing_model(n, degree, np.random.default_rng(seed), max_retries)
    return Graph(n=n, edges=tuple(edges), kind=kind)


def _pairing_model(n, degree, rng, max_retries):
    for _ in range(max_retries):
        stubs = np.repeat(np.arange(n), degree)
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        edges = set()
        ok = True
        for i, j in pairs:
            i, j = int(min(i, j)), int(max(i, j))
            if i == j or (i, j) in edges:
                ok = False
                break
            edges.add((i, j))
        if not ok:
            continue
        try:
            Graph(n=n, edges=tuple(edges), kind="random_regular")
        except GraphError:
            continue
        return sorted(edges)
    raise GraphError(f"no connected {degree}-regular graph on {n} nodes "
                     f"within {max_retries} attempts")


@lru_cache(maxsize=128)
def laplacian_spectrum(g: Graph) -> tuple[float, ...]:
    return tuple(np.linalg.eigvalsh(g.laplacian().astype(float)))


def laplacian_ratio(g: Graph) -> float:
    """Ratio of the smallest non-zero to the largest Laplacian eigenvalue, in (0, 1]."""
    eigs = np.asarray(laplacian_spectrum(g))
    nonzero = eigs[eigs > 1e-9]
    return float(nonzero[0] / nonzero[-1])


@dataclass(frozen=True)
class MixingValidation:
    """Outcome of the structural (sparsity) and spectral mixing-matrix checks."""

    p1_unique_consensus: bool      # null(I - W) = span(1)
    p2_spectrum_in_unit: bool      # -I <= W <= I
    p3_sparsity: bool              # W_ij = 0 iff (i,j) not an edge, > 0 on edges
    symmetric: bool
    doubly_stochastic: bool
    lambda_min: float
    lambda_second: float
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return (self.p1_unique_consensus and self.p2_spectrum_in_unit
                and self.p3_sparsity and self.symmetric and self.doubly_stochastic)


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic matrix matching the graph sparsity.

    One multiplication by W is one synchronous neighbor message exchange.
    """

    entries: np.ndarray
    eigenvalues: np.ndarray        # ascending
    graph: Graph
    validation: MixingValidation

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.eigenvalues.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def psd_contraction_ok(self) -> bool:
        """True when W >= W^2 >= 2W - I, i.e. all eigenvalues lie in [0, 1]."""
        return bool(self.eigenvalues[0] >= -SPECTRAL_TOL)


def _validate_mixing(w: np.ndarray, g: Graph, tol: float) -> MixingValidation:
    symmetric = bool(np.max(np.abs(w - w.T)) <= tol)
    row = np.abs(w.sum(axis=1) - 1.0).max()
    col = np.abs(w.sum(axis=0) - 1.0).max()
    stochastic = bool(max(row, col) <= 1e-12)

    adj = g.adjacency().astype(bool)
    off = ~np.eye(g.n, dtype=bool)
    p3 = bool(np.all(w[off & ~adj] == 0.0) and np.all(w[adj] > 0.0))

    eigs = np.linalg.eigvalsh((w + w.T) / 2.0)
    p2 = bool(eigs[0] >= -1.0 - tol and eigs[-1] <= 1.0 + tol)
    ones_mult = int(np.sum(eigs >= 1.0 - tol))
    p1 = bool(ones_mult == 1 and eigs[-2] < 1.0 - tol)

    warns = []
    if eigs[0] <= -1.0 + tol:
        warns.append("lambda_min(W) = -1 (regular bipartite boundary case)")
    if eigs[0] <= -1.0 / 3.0 + tol:
        warns.append("lambda_min(W) <= -1/3: D2 precondition not met")
    return MixingValidation(
        p1_unique_consensus=p1, p2_spectrum_in_unit=p2, p3_sparsity=p3,
        symmetric=symmetric, doubly_stochastic=stochastic,
        lambda_min=float(eigs[0]), lambda_second=float(eigs[-2]),
        warnings=tuple(warns))


def max_degree_mixing(g: Graph) -> MixingMatrix:
    """Doubly stochastic weights: 1/d_max on edges, 1 - d_i/d_max on the diagonal.

    Violations of the mixing conditions are reported on the attached
    validation (and warned about), never silently accepted.
    """
    deg = g.degrees
    d_max = int(deg.max())
    w = g.adjacency().astype(float) / d_max
    np.fill_diagonal(w, 1.0 - deg / d_max)
    val = _validate_mixing(w, g, SPECTRAL_TOL)
    if not val.ok:
        warnings.warn(f"max-degree weights violate mixing conditions: {val}")
    eigs = np.linalg.eigvalsh(w)
    return MixingMatrix(entries=w, eigenvalues=eigs, graph=g, validation=val)


def explicit_mixing(g: Graph, entries, tol: float = SPECTRAL_TOL) -> MixingMatrix:
    """Wrap user-supplied weights, enforcing sparsity and the spectral conditions."""
    w = np.array(entries, dtype=float)
    if w.shape != (g.n, g.n):
        raise MixingError(f"entries must be {g.n}x{g.n}, got {w.shape}")
    val = _validate_mixing(w, g, tol)
    if not val.symmetric:
        raise MixingError("entries are not symmetric")
    if not val.p3_sparsity:
        raise MixingError("entries do not match the graph sparsity pattern")
    if not val.doubly_stochastic:
        raise MixingError("rows/columns do not sum to 1")
    if not val.p2_spectrum_in_unit:
        raise MixingError(f"spectrum outside [-1, 1]: lambda_min={val.lambda_min}")
    if not val.p1_unique_consensus:
        raise MixingError("eigenvalue 1 is not simple: consensus subspace too large")
    eigs = np.linalg.eigvalsh((w + w.T) / 2.0)
    return MixingMatrix(entries=w, eigenvalues=eigs, graph=g, validation=val)


def mix(w: MixingMatrix, x: np.ndarray, counters=None) -> np.ndarray:
    """One network-wide message exchange: returns W @ x, charging one comm round."""
    x = np.asarray(x)
    if x.shape[0] != w.n:
        raise ValueError(f"stack has {x.shape[0]} rows, mixing matrix is {w.n}x{w.n}")
    if counters is not None:
        counters.comm_rounds += 1
    return w.entries @ x


class Topology:
    """Immutable bundle of one run's graph, mixing matrix and cached matrices.

    The Laplacian / neighbor-sum applications are message exchanges and charge
    one communication round each, exactly like `mix`.
    """

    def __init__(self, graph: Graph, mixing: MixingMatrix):
        if mixing.graph is not graph and mixing.graph != graph:
            raise ValueError("mixing matrix was built for a different graph")
        self.graph = graph
        self.w = mixing
        self.n = graph.n
        self.degrees = graph.degrees
        self.incidence = graph.incidence().astype(float)
        self.laplacian = graph.laplacian().astype(float)
        self.adjacency = graph.adjacency().astype(float)
        eigs = np.asarray(laplacian_spectrum(graph))
        self.lap_lambda_max = float(eigs[-1])
        self.xi = laplacian_ratio(graph)
        self.n_edges = len(graph.edges)

    def mix(self, x, counters=None):
        return mix(self.w, x, counters)

    def lap_apply(self, x, counters=None):
        """L @ x via one neighbor exchange."""
        if counters is not None:
            counters.comm_rounds += 1
        return self.laplacian @ x

    def neighbor_sum(self, x, counters=None):
        """Adjacency @ x (sum of neighbor values) via one exchange."""
        if counters is not None:
            counters.comm_rounds += 1
        return self.adjacency @ x
