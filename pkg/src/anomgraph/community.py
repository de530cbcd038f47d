"""Image similarity graph, Leiden community detection under a constant
resolution objective, community densities, and IQR outlier flagging.

The partition objective is Q = sum over ordered intra-community pairs of
(w_ij - gamma); community density is the ordered-pair weight sum divided by
n(n-1).  Quantiles use linear interpolation throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .burnout import SuspiciousLinkSet
from .errors import NoEdges, SingletonCommunity


@dataclass
class SimilarityGraph:
    """Weighted undirected graph over images; weights count suspicious links."""

    n_nodes: int
    edges: dict[tuple[int, int], float]
    image_ids: tuple[str, ...] | None = None

    def adjacency(self) -> list[dict[int, float]]:
        adj: list[dict[int, float]] = [dict() for _ in range(self.n_nodes)]
        for (i, j), w in self.edges.items():
            adj[i][j] = adj[i].get(j, 0.0) + w
            adj[j][i] = adj[j].get(i, 0.0) + w
        return adj

    def weight_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        for (i, j), w in self.edges.items():
            a[i, j] = a[j, i] = w
        return a


@dataclass
class CommunityPartition:
    assignment: np.ndarray                   # node -> community id
    communities: list[tuple[int, ...]]       # members per community id
    gamma: float
    densities: list[float | None] = field(default_factory=list)  # None for singletons
    outlier_flags: list[bool] = field(default_factory=list)

    def flagged(self) -> list[tuple[int, ...]]:
        return [c for c, f in zip(self.communities, self.outlier_flags) if f]


def build_graph(link_set: SuspiciousLinkSet, n: int,
                image_ids=None) -> SimilarityGraph:
    """Pool admitted links (both directions) into undirected edge counts.

    Each admitted (patch, image) pair contributes one link per feature layer.
    """
    sel = link_set.selected()
    edges: dict[tuple[int, int], float] = {}
    mult = float(sel.n_layers)
    for a, b in zip(sel.source_image, sel.target_image):
        i, j = (int(a), int(b)) if a < b else (int(b), int(a))
        if i == j:
            continue
        edges[(i, j)] = edges.get((i, j), 0.0) + mult
    return SimilarityGraph(n, edges, tuple(image_ids) if image_ids else None)


def cpm_objective(graph: SimilarityGraph, assignment: np.ndarray, gamma: float) -> float:
    """Sum over ordered intra-community pairs (i != j) of (w_ij - gamma)."""
    assignment = np.asarray(assignment)
    q = 0.0
    for (i, j), w in graph.edges.items():
        if assignment[i] == assignment[j]:
            q += 2.0 * w
    _, counts = np.unique(assignment, return_counts=True)
    q -= gamma * float(np.sum(counts * (counts - 1)))
    return q


def community_density(graph: SimilarityGraph, members) -> float:
    """Ordered-pair weight sum over n(n-1); undefined for singletons."""
    members = set(int(v) for v in members)
    nc = len(members)
    if nc < 2:
        raise SingletonCommunity("density undefined for single-node communities")
    w_in = sum(w for (i, j), w in graph.edges.items()
               if i in members and j in members)
    return 2.0 * w_in / (nc * (nc - 1))


def select_gamma(graph: SimilarityGraph, quantile: float = 0.25) -> float:
    """Resolution = linear-interpolation quantile of present edge weights."""
    if not graph.edges:
        raise NoEdges("graph has no edges")
    weights = np.array(sorted(graph.edges.values()), dtype=np.float64)
    return float(np.percentile(weights, 100.0 * quantile))


def detect_outlier_communities(densities, k_iqr: float) -> list[bool]:
    """Tukey's fences: flag densities strictly above Q3 + k_iqr * IQR."""
    arr = np.asarray(list(densities), dtype=np.float64)
    q1, q3 = np.percentile(arr, [25.0, 75.0])
    fence = q3 + k_iqr * (q3 - q1)
    return [bool(rho > fence) for rho in arr]


# Leiden under the constant-resolution objective ---------------------------

def _local_move(adj, node_weight, partition, gamma, rng) -> bool:
    """Fast local moves with a revisit queue; strict-improvement moves only."""
    n = len(adj)
    comm_size = {}
    for c, w in zip(partition, node_weight):
        comm_size[c] = comm_size.get(c, 0.0) + w
    order = rng.permutation(n)
    in_queue = np.ones(n, dtype=bool)
    queue = list(order)
    improved = False
    while queue:
        v = queue.pop(0)
        in_queue[v] = False
        cv = partition[v]
        wv = node_weight[v]
        # link weight from v to each neighboring community
        to_comm: dict[int, float] = {}
        for u, w in adj[v].items():
            to_comm[partition[u]] = to_comm.get(partition[u], 0.0) + w
        base = to_comm.get(cv, 0.0) - gamma * wv * (comm_size[cv] - wv)
        best_c, best_gain = cv, 0.0
        empty_id = None
        if comm_size[cv] > wv:
            empty_id = max(comm_size) + 1 if comm_size else 0
            candidates = sorted(to_comm) + [empty_id]
        else:
            candidates = sorted(to_comm)
        for c in candidates:
            if c == cv:
                continue
            size_c = comm_size.get(c, 0.0)
            gain = to_comm.get(c, 0.0) - gamma * wv * size_c - base
            if gain > best_gain + 1e-12:
                best_gain, best_c = gain, c
        if best_c != cv:
            improved = True
            comm_size[cv] -= wv
            if comm_size[cv] == 0:
                del comm_size[cv]
            comm_size[best_c] = comm_size.get(best_c, 0.0) + wv
            partition[v] = best_c
            for u in adj[v]:
                if partition[u] != best_c and not in_queue[u]:
                    in_queue[u] = True
                    queue.append(u)
    return improved


def _refine(adj, node_weight, partition, gamma, rng) -> list[int]:
    """Split each community into well-connected sub-communities.

    Singleton sub-communities merge into a sub-community of their own
    community, chosen with probability proportional to the (non-negative)
    objective gain.
    """
    n = len(adj)
    refined = list(range(n))
    sub_size = {v: node_weight[v] for v in range(n)}
    for v in rng.permutation(n):
        if sub_size[refined[v]] != node_weight[v] or refined[v] != v:
            continue  # only singleton sub-communities move
        cv = partition[v]
        to_sub: dict[int, float] = {}
        for u, w in adj[v].items():
            if partition[u] == cv:
                to_sub[refined[u]] = to_sub.get(refined[u], 0.0) + w
        cands, gains = [], []
        wv = node_weight[v]
        for s, w in sorted(to_sub.items()):
            if s == refined[v]:
                continue
            gain = w - gamma * wv * sub_size[s]
            if gain > 1e-12:
                cands.append(s)
                gains.append(gain)
        if not cands:
            continue
        gains_arr = np.array(gains)
        target = cands[int(rng.choice(len(cands), p=gains_arr / gains_arr.sum()))]
        sub_size[target] += sub_size.pop(refined[v])
        refined[v] = target
    return refined


def _connected_components(adj, members) -> list[list[int]]:
    members = set(members)
    seen = set()
    comps = []
    for start in sorted(members):
        if start in seen:
            continue
        stack = [start]
        comp = []
        seen.add(start)
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in adj[v]:
                if u in members and u not in seen:
                    seen.add(u)
                    stack.append(u)
        comps.append(sorted(comp))
    return comps


def leiden_cpm(graph: SimilarityGraph, gamma: float, seed: int = 0,
               n_restarts: int = 8) -> CommunityPartition:
    """Best partition over several seeded move/refine/aggregate restarts.

    Deterministic for a fixed (graph, gamma, seed); every returned community
    is connected.
    """
    rng = np.random.default_rng(seed)
    best: CommunityPartition | None = None
    best_q = -np.inf
    for _ in range(max(1, n_restarts)):
        part = _leiden_once(graph, gamma, rng)
        q = cpm_objective(graph, part.assignment, gamma)
        if q > best_q + 1e-12:
            best_q, best = q, part
    return best


def _leiden_once(graph: SimilarityGraph, gamma: float,
                 rng: np.random.Generator) -> CommunityPartition:
    n0 = graph.n_nodes
    adj = [dict(d) for d in graph.adjacency()]
    node_weight = [1.0] * n0
    node_members: list[list[int]] = [[v] for v in range(n0)]
    partition = list(range(len(adj)))
    while True:
        _local_move(adj, node_weight, partition, gamma, rng)
        n_comms = len(set(partition))
        if n_comms == len(adj):
            break
        refined = _refine(adj, node_weight, partition, gamma, rng)
        sub_ids = sorted(set(refined))
        if len(sub_ids) == len(adj):
            break
        remap = {s: k for k, s in enumerate(sub_ids)}
        new_n = len(sub_ids)
        new_adj: list[dict[int, float]] = [dict() for _ in range(new_n)]
        new_weight = [0.0] * new_n
        new_members: list[list[int]] = [[] for _ in range(new_n)]
        constraint = [0] * new_n
        for v in range(len(adj)):
            k = remap[refined[v]]
            new_weight[k] += node_weight[v]
            new_members[k].extend(node_members[v])
            constraint[k] = partition[v]
            # each undirected (v, u) edge lands in new_adj[k][ku] exactly once
            # from the v side; the u side fills the symmetric entry
            for u, w in adj[v].items():
                ku = remap[refined[u]]
                if ku != k:
                    new_adj[k][ku] = new_adj[k].get(ku, 0.0) + w
        adj, node_weight, node_members = new_adj, new_weight, new_members
        partition = constraint
    # expand to original nodes
    assignment = np.empty(n0, dtype=np.int64)
    groups: dict[int, list[int]] = {}
    for v, c in enumerate(partition):
        groups.setdefault(c, []).extend(node_members[v])
    # split any disconnected community into its components (never lowers Q)
    base_adj = graph.adjacency()
    communities: list[tuple[int, ...]] = []
    for c in sorted(groups):
        for comp in _connected_components(base_adj, groups[c]):
            communities.append(tuple(comp))
    communities.sort(key=lambda c: c[0])
    for cid, members in enumerate(communities):
        for v in members:
            assignment[v] = cid
    return CommunityPartition(assignment, communities, gamma)


def analyze_partition(graph: SimilarityGraph, part: CommunityPartition,
                      k_iqr: float) -> CommunityPartition:
    """Fill densities and outlier flags (singletons excluded from the stats)."""
    densities: list[float | None] = []
    for members in part.communities:
        densities.append(community_density(graph, members) if len(members) > 1 else None)
    eligible = [d for d in densities if d is not None]
    flags = [False] * len(part.communities)
    if eligible:
        eligible_flags = detect_outlier_communities(eligible, k_iqr)
        it = iter(eligible_flags)
        for idx, d in enumerate(densities):
            if d is not None:
                flags[idx] = next(it)
    part.densities = densities
    part.outlier_flags = flags
    return part
