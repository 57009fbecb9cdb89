"""Binary-network construction and the standard metrics panel.

Clustering, path length, assortativity and communities are computed on the
undirected projection of the directed binary network; degree sequences,
PageRank and the degree-preserving randomization stay directed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import shortest_path

from .model import FlowMatrix, NodeInfo


@dataclass
class BinaryNetwork:
    nodes: list[NodeInfo]
    adjacency: np.ndarray  # directed, entries in {0, 1}, zero diagonal

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        self.adjacency = a.astype(int)
        np.fill_diagonal(self.adjacency, 0)
        self._undirected = None

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def undirected(self) -> np.ndarray:
        if self._undirected is None:
            self._undirected = ((self.adjacency + self.adjacency.T) > 0).astype(int)
        return self._undirected

    def in_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    def out_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass
class MetricsReport:
    avg_shortest_path: float
    clustering_transitivity: float
    degree_assortativity: float | None
    modularity: float
    communities: dict[str, int]
    pagerank: np.ndarray
    in_degree: np.ndarray
    out_degree: np.ndarray
    density: float
    notes: dict = field(default_factory=dict)


# --- truncation --------------------------------------------------------------


def _positive_weights(weights: np.ndarray) -> np.ndarray:
    pos = weights[weights > 0]
    if pos.size == 0:
        raise ValueError("all weights are zero")
    return pos


def truncate_percentile(flow: FlowMatrix, percentile: float = 80.0) -> BinaryNetwork:
    """Keep links strictly above the nearest-rank percentile of positive weights."""
    if not 0.0 < percentile < 100.0:
        raise ValueError("percentile must be in (0, 100)")
    pos = np.sort(_positive_weights(flow.weights))
    rank = math.ceil(percentile / 100.0 * pos.size)  # nearest-rank, 1-based
    threshold = pos[rank - 1]
    return BinaryNetwork(flow.nodes, (flow.weights > threshold).astype(int))


def truncate_relative(flow: FlowMatrix, fraction: float) -> BinaryNetwork:
    """Keep links with weight >= fraction * max weight."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    top = _positive_weights(flow.weights).max()
    keep = flow.weights >= fraction * top
    return BinaryNetwork(flow.nodes, keep.astype(int))


def truncate_to_density(flow: FlowMatrix, target: float, max_iter: int = 200) -> tuple[BinaryNetwork, float]:
    """Bisect the relative threshold until the directed density hits the target.

    Returns (network, fraction); the achieved density is within one link of
    the closest attainable value.
    """
    lo, hi = 1e-12, 1.0 - 1e-12
    best = None
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)  # weights span orders of magnitude
        net = truncate_relative(flow, mid)
        d = density(net)
        if best is None or abs(d - target) < abs(density(best[0]) - target):
            best = (net, mid)
        if d > target:
            lo = mid
        else:
            hi = mid
    return best


def density(net: BinaryNetwork) -> float:
    """Directed density, self-loops excluded."""
    n = net.n
    if n < 2:
        raise ValueError("density needs at least 2 nodes")
    return net.n_edges / (n * (n - 1))


# --- metrics -----------------------------------------------------------------


def avg_shortest_path(net: BinaryNetwork) -> float:
    """Mean geodesic length on the undirected projection, over reachable pairs.

    Pairs in different components are excluded from the average.
    """
    u = net.undirected()
    dist = shortest_path(u, method="D", directed=False, unweighted=True)
    off = ~np.eye(net.n, dtype=bool)
    finite = np.isfinite(dist) & off
    if not finite.any():
        return float("nan")
    return float(dist[finite].mean())


def clustering_transitivity(net: BinaryNetwork) -> float:
    """Global transitivity 3 * triangles / connected triples, 0 when no triples."""
    u = net.undirected()
    closed = np.trace(u @ u @ u)  # 6 * triangles
    deg = u.sum(axis=1)
    triples = (deg * (deg - 1)).sum()  # 2 * connected triples
    if triples == 0:
        return 0.0
    return float(closed / triples)


def degree_assortativity(net: BinaryNetwork) -> float | None:
    """Pearson correlation of endpoint degrees over the undirected edge list.

    Returns None when an endpoint degree sequence has zero variance.
    """
    u = net.undirected()
    deg = u.sum(axis=1)
    ii, jj = np.nonzero(np.triu(u, k=1))
    if ii.size == 0:
        return None
    x = np.concatenate([deg[ii], deg[jj]]).astype(float)
    y = np.concatenate([deg[jj], deg[ii]]).astype(float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def _to_undirected_graph(net: BinaryNetwork) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(net.n))
    ii, jj = np.nonzero(np.triu(net.undirected(), k=1))
    g.add_edges_from(zip(ii.tolist(), jj.tolist()))
    return g


def detect_communities(net: BinaryNetwork, seed: int = 0) -> tuple[dict[str, int], float]:
    """Greedy modularity maximization on the undirected projection.

    Runs Louvain (fixed seed) and CNM greedy agglomeration, returns the better
    partition as a node-id -> community map together with its modularity.
    """
    g = _to_undirected_graph(net)
    labels = [node.id for node in net.nodes]
    if g.number_of_edges() == 0:
        return {lab: i for i, lab in enumerate(labels)}, 0.0
    candidates = [nx.community.louvain_communities(g, seed=seed)]
    candidates.append(list(nx.community.greedy_modularity_communities(g)))
    candidates.append([set(g.nodes)])
    best = max(candidates, key=lambda part: nx.community.modularity(g, part))
    q = nx.community.modularity(g, best)
    assignment = {}
    for comm_idx, members in enumerate(best):
        for node in members:
            assignment[labels[node]] = comm_idx
    return assignment, float(q)


def pagerank(net: BinaryNetwork, damping: float = 0.85, tol: float = 1e-12) -> np.ndarray:
    """Power iteration with uniform teleport and uniform dangling redistribution."""
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must be in (0, 1)")
    a = net.adjacency.astype(float)
    n = net.n
    out = a.sum(axis=1)
    dangling = out == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(dangling[:, None], 0.0, a / np.where(out == 0, 1.0, out)[:, None])
    x = np.full(n, 1.0 / n)
    for _ in range(100000):
        x_new = damping * (m.T @ x + x[dangling].sum() / n) + (1.0 - damping) / n
        if np.abs(x_new - x).sum() < tol:
            x = x_new
            break
        x = x_new
    return x / x.sum()


def degree_ccdf(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Complementary CDF table: for each distinct value v, P(X >= v)."""
    values = np.asarray(values)
    distinct = np.unique(values)
    ccdf = np.array([(values >= v).mean() for v in distinct])
    return distinct, ccdf


# --- degree-preserving randomization -----------------------------------------


@dataclass
class RandomizationResult:
    n_samples: int
    seed: int
    swaps_per_edge: int
    samples: dict[str, np.ndarray]  # metric name -> per-sample values
    means: dict[str, float]
    stds: dict[str, float]

    def z_score(self, metric: str, observed: float) -> float:
        sd = self.stds[metric]
        if sd == 0 or not np.isfinite(observed):
            return float("nan")
        return (observed - self.means[metric]) / sd


def _swap_edges(adjacency: np.ndarray, attempts: int, rng: np.random.Generator) -> np.ndarray:
    edges = list(zip(*np.nonzero(adjacency)))
    existing = set(edges)
    n_edges = len(edges)
    if n_edges < 2:
        return adjacency.copy()
    pick = rng.integers(0, n_edges, size=(attempts, 2))
    for k1, k2 in pick:
        if k1 == k2:
            continue
        u, v = edges[k1]
        x, y = edges[k2]
        if u == y or x == v:  # would create a self-loop
            continue
        if (u, y) in existing or (x, v) in existing:
            continue
        existing.discard((u, v))
        existing.discard((x, y))
        existing.add((u, y))
        existing.add((x, v))
        edges[k1] = (u, y)
        edges[k2] = (x, v)
    out = np.zeros_like(adjacency)
    for i, j in existing:
        out[i, j] = 1
    return out


def degree_preserved_randomize(
    net: BinaryNetwork,
    n_samples: int = 1000,
    swaps_per_edge: int = 10,
    seed: int = 0,
) -> RandomizationResult:
    """Null-model ensemble via directed double-edge swaps.

    Each sample runs `swaps_per_edge * n_edges` swap attempts, rejecting
    self-loops and duplicate edges, so every sample has exactly the original
    in- and out-degree sequences. Sample k uses the RNG stream (seed, k), so
    results are reproducible and order-independent.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if net.n_edges < 2:
        raise ValueError("network has fewer than 2 directed edges")
    attempts = swaps_per_edge * net.n_edges
    metric_values = {"avg_shortest_path": [], "clustering": [], "assortativity": []}
    for k in range(n_samples):
        rng = np.random.default_rng([seed, k])
        sample = BinaryNetwork(net.nodes, _swap_edges(net.adjacency, attempts, rng))
        metric_values["avg_shortest_path"].append(avg_shortest_path(sample))
        metric_values["clustering"].append(clustering_transitivity(sample))
        assort = degree_assortativity(sample)
        metric_values["assortativity"].append(float("nan") if assort is None else assort)
    samples = {k: np.array(v) for k, v in metric_values.items()}
    means = {
        k: float(np.nanmean(v)) if np.isfinite(v).any() else float("nan")
        for k, v in samples.items()
    }
    stds = {
        k: float(np.nanstd(v)) if n_samples > 1 and np.isfinite(v).any() else 0.0
        for k, v in samples.items()
    }
    return RandomizationResult(n_samples, seed, swaps_per_edge, samples, means, stds)


def metrics_report(net: BinaryNetwork, seed: int = 0) -> MetricsReport:
    communities, modularity = detect_communities(net, seed=seed)
    return MetricsReport(
        avg_shortest_path=avg_shortest_path(net),
        clustering_transitivity=clustering_transitivity(net),
        degree_assortativity=degree_assortativity(net),
        modularity=modularity,
        communities=communities,
        pagerank=pagerank(net),
        in_degree=net.in_degrees(),
        out_degree=net.out_degrees(),
        density=density(net),
        notes={"shortest_path_pairs": "disconnected pairs excluded"},
    )
