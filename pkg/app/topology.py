"""
Agent communication graphs, Metropolis-Hastings mixing matrices and gossip rounds.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.linalg

from app import config
from app.errors import ComputationError, ValidationError

logger = logging.getLogger(__name__)

GRAPH_KINDS = ("complete", "line", "grid", "erdos_renyi")


@dataclass(frozen=True)
class Graph:
    """Undirected connected agent graph; agents are numbered 1..n."""
    n: int
    edges: FrozenSet[Tuple[int, int]]
    kind: str
    params: Dict[str, float] = field(default_factory=dict, compare=False)

    def neighbors(self, i: int) -> List[int]:
        """Neighbors of agent i (1-based), in increasing order."""
        out = [b if a == i else a for a, b in self.edges if i in (a, b)]
        return sorted(out)

    def degrees(self) -> np.ndarray:
        """Degree of every agent, indexed 0..n-1."""
        deg = np.zeros(self.n, dtype=int)
        for a, b in self.edges:
            deg[a - 1] += 1
            deg[b - 1] += 1
        return deg

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(1, self.n + 1))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Symmetric doubly stochastic gossip matrix W."""
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SpectralProfile:
    """Second-largest eigenvalue magnitude of W and the consensus integer k0."""
    lambda2: float
    k0: int


def _from_networkx(g: nx.Graph, kind: str, params: Dict[str, float]) -> Graph:
    edges = set()
    for a, b in g.edges():
        if a == b:
            continue
        edges.add((min(a, b) + 1, max(a, b) + 1))
    return Graph(n=g.number_of_nodes(), edges=frozenset(edges), kind=kind, params=params)


def grid_shape(n: int) -> Tuple[int, int]:
    """Factor n as rows x cols with rows the largest divisor not above sqrt(n)."""
    rows = math.isqrt(n)
    while rows > 1 and n % rows != 0:
        rows -= 1
    if rows <= 1 and n > 1:
        raise ValidationError(f"Grid graph needs a factorizable agent count, got n={n} (only 1x{n} remains)")
    return rows, n // rows


def build_graph(kind: str, n: int, params: Optional[Dict[str, float]] = None, seed: int = 0) -> Graph:
    """Construct a connected agent graph of the requested kind."""
    params = dict(params or {})
    if n < 1:
        raise ValidationError(f"Agent count must be positive, got {n}")
    if kind not in GRAPH_KINDS:
        raise ValidationError(f"Unknown graph kind: {kind}")

    if n == 1:
        return Graph(n=1, edges=frozenset(), kind=kind, params=params)

    if kind == "complete":
        return _from_networkx(nx.complete_graph(n), kind, params)
    if kind == "line":
        return _from_networkx(nx.path_graph(n), kind, params)
    if kind == "grid":
        rows, cols = grid_shape(n)
        g = nx.grid_2d_graph(rows, cols)
        g = nx.relabel_nodes(g, {(r, c): r * cols + c for r, c in g.nodes()})
        params.update(rows=rows, cols=cols)
        return _from_networkx(g, kind, params)

    p = float(params.get("p", 0.2))
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"Erdos-Renyi probability must lie in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    for attempt in range(1, config.MAX_GRAPH_RETRIES + 1):
        g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**32)))
        if nx.is_connected(g):
            if attempt > 100:
                logger.warning("Erdos-Renyi(n=%d, p=%g) needed %d draws to be connected", n, p, attempt)
            params["attempts"] = attempt
            return _from_networkx(g, kind, params)
    raise ValidationError(
        f"No connected Erdos-Renyi graph with n={n}, p={p} after {config.MAX_GRAPH_RETRIES} draws"
    )


def metropolis_weights(g: Graph) -> MixingMatrix:
    """Metropolis-Hastings weights W_ij = 1/(1+max(d_i, d_j)) on edges."""
    deg = g.degrees()
    w = np.zeros((g.n, g.n))
    for a, b in g.edges:
        i, j = a - 1, b - 1
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(g.n):
        w[i, i] = 1.0 - w[i].sum()
    return MixingMatrix(entries=w)


def check_mixing_matrix(w: MixingMatrix, g: Graph, tol: float = config.STOCHASTIC_TOL) -> List[str]:
    """List every violated mixing-matrix invariant; empty when W is valid for g."""
    problems = []
    m = w.entries
    if not np.allclose(m, m.T, atol=tol, rtol=0.0):
        problems.append("not symmetric")
    if (m < -tol).any() or (m > 1 + tol).any():
        problems.append("entries outside [0, 1]")
    if np.abs(m.sum(axis=1) - 1.0).max() > tol:
        problems.append("row sums differ from 1")
    if np.abs(m.sum(axis=0) - 1.0).max() > tol:
        problems.append("column sums differ from 1")
    adjacency = nx.to_numpy_array(g.to_networkx(), nodelist=range(1, g.n + 1)) > 0
    off_support = ~adjacency & ~np.eye(g.n, dtype=bool)
    if np.abs(m[off_support]).max(initial=0.0) > 0.0:
        problems.append("nonzero weight on a non-edge")
    return problems


def smallest_k0(lambda2: float) -> int:
    """Smallest positive integer k with lambda2 <= (k/(k+1))^2."""
    if lambda2 <= 0.0:
        return 1
    root = math.sqrt(lambda2)
    k = max(1, int(root / (1.0 - root)) - 2)
    while k > 1 and lambda2 <= ((k - 1) / k) ** 2:
        k -= 1
    while lambda2 > (k / (k + 1)) ** 2:
        k += 1
    return k


def spectral_profile(w: MixingMatrix) -> SpectralProfile:
    """Compute lambda2 (second-largest eigenvalue magnitude) and k0."""
    if w.n == 1:
        return SpectralProfile(lambda2=0.0, k0=1)
    try:
        eigenvalues = scipy.linalg.eigvalsh(w.entries)
    except (np.linalg.LinAlgError, ValueError) as e:
        cond = np.linalg.cond(w.entries)
        raise ComputationError(f"Eigen-solver failed on mixing matrix (condition number {cond:.3e}): {e}")

    # drop the consensus eigenvalue (closest to 1), keep magnitudes of the rest
    order = np.argsort(-eigenvalues, kind="stable")
    rest = np.abs(eigenvalues[order[1:]])
    lambda2 = float(rest.max())
    if lambda2 < config.EIGEN_TIE_TOL:
        lambda2 = 0.0
    if lambda2 >= 1.0 - config.EIGEN_TIE_TOL:
        raise ComputationError(f"lambda2={lambda2:.12f} is not below 1; is the graph connected?")
    return SpectralProfile(lambda2=lambda2, k0=smallest_k0(lambda2))


def gossip_round(xs: Sequence[np.ndarray], w: MixingMatrix) -> List[np.ndarray]:
    """One round of neighbor averaging: y_i = sum_j W_ij x_j."""
    if len(xs) != w.n:
        raise ValidationError(f"Expected {w.n} agent vectors, got {len(xs)}")
    dims = {np.shape(x) for x in xs}
    if len(dims) != 1:
        raise ValidationError(f"Agent vectors have mismatched dimensions: {sorted(dims)}")
    stacked = np.stack([np.asarray(x, dtype=float) for x in xs])
    mixed = w.entries @ stacked.reshape(w.n, -1)
    return [row.reshape(stacked.shape[1:]) for row in mixed]


def consensus_deviation(xs: Sequence[np.ndarray]) -> float:
    """sqrt(sum_i ||x_i - x_avg||^2)."""
    stacked = np.stack([np.asarray(x, dtype=float).ravel() for x in xs])
    return float(np.linalg.norm(stacked - stacked.mean(axis=0)))


def export_weights_csv(w: MixingMatrix, path: str) -> None:
    """Write W row-major with 17 significant digits."""
    np.savetxt(path, w.entries, delimiter=",", fmt="%.17g")
