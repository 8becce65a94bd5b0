"""Topology metrics of threshold networks."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .netbuild import ThresholdNetwork


@dataclass
class MetricsReport:
    degree_density: float
    avg_clustering: float
    avg_path_length: float | None
    n_nodes: int
    n_edges: int
    n_components: int
    reachable_pair_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def degree_centrality(net: ThresholdNetwork, node) -> int:
    return int(net.adjacency[net.index(node)].sum())


def degree_density(net: ThresholdNetwork) -> float:
    n = net.n_nodes
    if n < 2:
        raise DataError("degree density needs at least 2 nodes")
    return 2 * net.n_edges / (n * (n - 1))


def _bfs(nbrs: list[list[int]], source: int) -> list[int]:
    dist = [-1] * len(nbrs)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def shortest_path_lengths(net: ThresholdNetwork) -> np.ndarray:
    """All-pairs hop distances; -1 marks unreachable pairs."""
    nbrs = net.neighbours()
    return np.array([_bfs(nbrs, s) for s in range(net.n_nodes)], dtype=np.int64).reshape(
        net.n_nodes, net.n_nodes
    )


def average_path_length(net: ThresholdNetwork) -> tuple[float | None, float]:
    """Mean hop distance over unordered node pairs joined by some path.

    Returns ``(l_bar, reachable_pair_fraction)``; ``l_bar`` is None when
    no pair is connected.
    """
    n = net.n_nodes
    if n < 2:
        raise DataError("average path length needs at least 2 nodes")
    dist = shortest_path_lengths(net)
    upper = dist[np.triu_indices(n, k=1)]
    reach = upper[upper > 0]
    total_pairs = n * (n - 1) // 2
    if reach.size == 0:
        return None, 0.0
    return int(reach.sum()) / int(reach.size), int(reach.size) / total_pairs


def _clustering_all(net: ThresholdNetwork) -> list[float]:
    adj = net.adjacency
    out = []
    for row in adj:
        nb = np.flatnonzero(row)
        v = nb.size
        if v < 2:
            out.append(0.0)
            continue
        u = int(adj[np.ix_(nb, nb)].sum()) // 2
        out.append(2 * u / (v * (v - 1)))
    return out


def clustering_coefficient(net: ThresholdNetwork, node) -> float:
    i = net.index(node)
    return _clustering_all(net)[i]


def average_clustering(net: ThresholdNetwork) -> float:
    n = net.n_nodes
    if n == 0:
        return 0.0
    return sum(_clustering_all(net)) / n


def n_components(net: ThresholdNetwork) -> int:
    nbrs = net.neighbours()
    seen = [False] * net.n_nodes
    count = 0
    for s in range(net.n_nodes):
        if seen[s]:
            continue
        count += 1
        for i, d in enumerate(_bfs(nbrs, s)):
            if d >= 0:
                seen[i] = True
    return count


def metrics_report(net: ThresholdNetwork) -> MetricsReport:
    lbar, frac = average_path_length(net)
    return MetricsReport(
        degree_density=degree_density(net),
        avg_clustering=average_clustering(net),
        avg_path_length=lbar,
        n_nodes=net.n_nodes,
        n_edges=net.n_edges,
        n_components=n_components(net),
        reachable_pair_fraction=frac,
    )


def _fmt(v, full: bool):
    if isinstance(v, float):
        if math.isnan(v):
            return None
        return v if full else float(format(v, ".6g"))
    return v


def report_to_json(report: MetricsReport, full_precision: bool = False) -> str:
    d = {k: _fmt(v, full_precision) for k, v in report.to_dict().items()}
    return json.dumps(d, indent=2, sort_keys=True) + "\n"
