"""Network topology: clusters, groups, neighborhoods, and generation.

Agents are partitioned into clusters (sets sharing a common minimizer) and,
more finely, into groups (connected same-cluster agents that already
cooperate). Indices are canonical: agents of a group are consecutive, groups
of a cluster are consecutive, so per-group operators are contiguous blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConnectivityUnreachable, InvalidSizes

_TOPOLOGY_TAG = 0x746F706F
_MINIMIZER_TAG = 0x6D696E73


@dataclass(frozen=True)
class TopologySpec:
    """Parameters for random topology generation.

    Attributes
    ----------
    cluster_sizes : list[int]
        Number of agents per cluster.
    group_sizes_per_cluster : list[list[int]]
        Group sizes inside each cluster; ``sum(group_sizes_per_cluster[q])``
        must equal ``cluster_sizes[q]``.
    intra_cluster_edge_prob, cross_cluster_edge_prob : float
        Bernoulli edge probabilities for same-cluster / different-cluster
        agent pairs.
    rng_seed : int
        Seed for edge sampling and (when not given) minimizer draws.
    dim : int
        Parameter dimension M.
    minimizers : ndarray or None
        Optional (Q, M) array of cluster minimizers; drawn N(0, I) when None.
    max_retries : int
        Bound on connectivity rejection sampling.
    """

    cluster_sizes: tuple
    group_sizes_per_cluster: tuple
    intra_cluster_edge_prob: float
    cross_cluster_edge_prob: float
    rng_seed: int
    dim: int = 2
    minimizers: np.ndarray | None = None
    max_retries: int = 2000


@dataclass(frozen=True)
class NetworkModel:
    """Immutable topology with cluster/group structure and minimizers.

    ``adjacency`` is a symmetric boolean matrix with mandatory self-loops,
    ``cluster_of``/``group_of`` map each agent to 0-based cluster and group
    indices, ``minimizers`` holds one row per cluster.
    """

    n_agents: int
    adjacency: np.ndarray
    cluster_of: np.ndarray
    group_of: np.ndarray
    minimizers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "adjacency", np.asarray(self.adjacency, dtype=bool))
        object.__setattr__(self, "cluster_of", np.asarray(self.cluster_of, dtype=np.int64))
        object.__setattr__(self, "group_of", np.asarray(self.group_of, dtype=np.int64))
        object.__setattr__(self, "minimizers", np.asarray(self.minimizers, dtype=np.float64))
        validate_model(self)

    # Structure accessors -- all derived, cheap enough to recompute.

    @property
    def dim(self) -> int:
        return self.minimizers.shape[1]

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_of.max()) + 1

    @property
    def n_groups(self) -> int:
        return int(self.group_of.max()) + 1

    def cluster_members(self, q: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == q)

    def group_members(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.group_of == m)

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.n_groups)

    def cluster_of_group(self, m: int) -> int:
        return int(self.cluster_of[self.group_members(m)[0]])

    def minimizer_of_agent(self, k: int) -> np.ndarray:
        return self.minimizers[self.cluster_of[k]]

    def agent_minimizers(self) -> np.ndarray:
        """(N, M) array: each agent's own minimizer."""
        return self.minimizers[self.cluster_of]


@dataclass(frozen=True)
class NeighborhoodSets:
    """Per-agent neighborhoods split by cluster and group membership.

    ``full[k]`` is N_k (self included), ``in_cluster[k]`` the same-cluster
    part, ``cross[k]`` the rest, and ``in_group[k]`` the same-group part
    (the static cooperation sets of the first recursion). All sorted tuples.
    """

    full: tuple
    in_cluster: tuple
    cross: tuple
    in_group: tuple


def validate_model(model: NetworkModel) -> None:
    """Raise ConfigError unless every structural invariant holds."""
    n = model.n_agents
    adj = model.adjacency
    if adj.shape != (n, n):
        raise ConfigError(f"adjacency must be {n}x{n}, got {adj.shape}")
    if not np.array_equal(adj, adj.T):
        raise ConfigError("adjacency must be symmetric")
    if not adj.diagonal().all():
        raise ConfigError("adjacency must contain all self-loops")
    if model.cluster_of.shape != (n,) or model.group_of.shape != (n,):
        raise ConfigError("cluster_of / group_of must have one entry per agent")

    q_n = int(model.cluster_of.max()) + 1
    g_n = int(model.group_of.max()) + 1
    if model.minimizers.ndim != 2 or model.minimizers.shape[0] != q_n:
        raise ConfigError("minimizers must have one row per cluster")
    if sorted(set(model.cluster_of.tolist())) != list(range(q_n)):
        raise ConfigError("cluster indices must be 0..Q-1 without gaps")
    if sorted(set(model.group_of.tolist())) != list(range(g_n)):
        raise ConfigError("group indices must be 0..G-1 without gaps")

    # Consecutive indexing: agent blocks per group, group blocks per cluster.
    if np.any(np.diff(model.group_of) < 0) or np.any(np.diff(model.group_of) > 1):
        raise ConfigError("agents of a group must be consecutive, groups ordered")
    if np.any(np.diff(model.cluster_of) < 0) or np.any(np.diff(model.cluster_of) > 1):
        raise ConfigError("agents of a cluster must be consecutive, clusters ordered")

    # Every group inside exactly one cluster.
    for m in range(g_n):
        members = np.flatnonzero(model.group_of == m)
        owners = set(model.cluster_of[members].tolist())
        if len(owners) != 1:
            raise ConfigError(f"group {m} spans clusters {sorted(owners)}")

    # Cluster and group subgraphs connected.
    for q in range(q_n):
        members = np.flatnonzero(model.cluster_of == q)
        if not _subgraph_connected(adj, members):
            raise ConfigError(f"cluster {q} induces a disconnected subgraph")
    for m in range(g_n):
        members = np.flatnonzero(model.group_of == m)
        if not _subgraph_connected(adj, members):
            raise ConfigError(f"group {m} induces a disconnected subgraph")


def _subgraph_connected(adj: np.ndarray, members: np.ndarray) -> bool:
    """BFS connectivity of the subgraph induced by ``members``."""
    if members.size == 0:
        return False
    inside = np.zeros(adj.shape[0], dtype=bool)
    inside[members] = True
    seen = {int(members[0])}
    frontier = [int(members[0])]
    while frontier:
        k = frontier.pop()
        for l in np.flatnonzero(adj[k] & inside):
            if int(l) not in seen:
                seen.add(int(l))
                frontier.append(int(l))
    return len(seen) == members.size


def generate_topology(spec: TopologySpec) -> NetworkModel:
    """Sample a NetworkModel with connected cluster and group subgraphs.

    Same-cluster pairs get an edge with probability
    ``intra_cluster_edge_prob``, cross-cluster pairs with
    ``cross_cluster_edge_prob``. The whole edge set is resampled until every
    cluster- and group-induced subgraph is connected, up to
    ``spec.max_retries`` attempts.

    Agent labels are canonical by construction (consecutive per group and
    cluster); Bernoulli edge sampling is label-exchangeable, so this is
    equivalent to sampling on arbitrary labels and relabeling afterwards.

    Raises
    ------
    InvalidSizes
        If group sizes do not sum to their cluster size.
    ConnectivityUnreachable
        If no attempt produced connected subgraphs.
    """
    cluster_sizes = [int(s) for s in spec.cluster_sizes]
    group_sizes = [[int(s) for s in row] for row in spec.group_sizes_per_cluster]
    if len(cluster_sizes) != len(group_sizes):
        raise InvalidSizes("one group-size list required per cluster")
    if any(s <= 0 for s in cluster_sizes):
        raise InvalidSizes("cluster sizes must be positive")
    if any(s <= 0 for row in group_sizes for s in row):
        raise InvalidSizes("group sizes must be positive")
    for q, (c_size, row) in enumerate(zip(cluster_sizes, group_sizes)):
        if sum(row) != c_size:
            raise InvalidSizes(
                f"cluster {q}: group sizes {row} sum to {sum(row)}, expected {c_size}"
            )
    p_in = float(spec.intra_cluster_edge_prob)
    p_out = float(spec.cross_cluster_edge_prob)
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ConfigError("edge probabilities must lie in [0, 1]")

    n = sum(cluster_sizes)
    cluster_of = np.repeat(np.arange(len(cluster_sizes)), cluster_sizes)
    flat_group_sizes = [s for row in group_sizes for s in row]
    group_of = np.repeat(np.arange(len(flat_group_sizes)), flat_group_sizes)

    minimizers = spec.minimizers
    if minimizers is None:
        mrng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([int(spec.rng_seed), _MINIMIZER_TAG]))
        )
        minimizers = mrng.standard_normal((len(cluster_sizes), int(spec.dim)))
    else:
        minimizers = np.asarray(minimizers, dtype=np.float64)
        if minimizers.shape != (len(cluster_sizes), int(spec.dim)):
            raise ConfigError(
                f"minimizers must be ({len(cluster_sizes)}, {spec.dim}), "
                f"got {minimizers.shape}"
            )

    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(spec.rng_seed), _TOPOLOGY_TAG]))
    )
    same = cluster_of[:, None] == cluster_of[None, :]
    prob = np.where(same, p_in, p_out)
    iu = np.triu_indices(n, k=1)

    for _ in range(spec.max_retries):
        upper = rng.random(iu[0].size) < prob[iu]
        adj = np.zeros((n, n), dtype=bool)
        adj[iu] = upper
        adj |= adj.T
        np.fill_diagonal(adj, True)

        ok = all(
            _subgraph_connected(adj, np.flatnonzero(cluster_of == q))
            for q in range(len(cluster_sizes))
        ) and all(
            _subgraph_connected(adj, np.flatnonzero(group_of == m))
            for m in range(len(flat_group_sizes))
        )
        if ok:
            return NetworkModel(
                n_agents=n,
                adjacency=adj,
                cluster_of=cluster_of,
                group_of=group_of,
                minimizers=minimizers,
            )

    raise ConnectivityUnreachable(
        f"no connected topology after {spec.max_retries} attempts "
        f"(intra_p={p_in}, cross_p={p_out})"
    )


def neighborhoods(model: NetworkModel) -> NeighborhoodSets:
    """Split each agent's neighborhood by cluster and group membership."""
    full, in_cluster, cross, in_group = [], [], [], []
    for k in range(model.n_agents):
        nbrs = np.flatnonzero(model.adjacency[k])
        same_c = nbrs[model.cluster_of[nbrs] == model.cluster_of[k]]
        same_g = nbrs[model.group_of[nbrs] == model.group_of[k]]
        full.append(tuple(int(x) for x in nbrs))
        in_cluster.append(tuple(int(x) for x in same_c))
        cross.append(tuple(int(x) for x in nbrs[model.cluster_of[nbrs] != model.cluster_of[k]]))
        in_group.append(tuple(int(x) for x in same_g))
    return NeighborhoodSets(
        full=tuple(full),
        in_cluster=tuple(in_cluster),
        cross=tuple(cross),
        in_group=tuple(in_group),
    )


def group_mask(model: NetworkModel) -> np.ndarray:
    """Boolean (N, N) matrix: adjacent and same group (self-loops included)."""
    same = model.group_of[:, None] == model.group_of[None, :]
    return model.adjacency & same


def connected_components(model: NetworkModel, active_edges) -> list:
    """Partition agents into maximal components under a subset of edges.

    Parameters
    ----------
    model : NetworkModel
    active_edges : iterable of (k, l) pairs or boolean (N, N) mask
        Must be a subset of the adjacency relation.

    Returns
    -------
    list of sorted lists of agent indices, ordered by smallest member.
    """
    n = model.n_agents
    mask = np.zeros((n, n), dtype=bool)
    if isinstance(active_edges, np.ndarray) and active_edges.ndim == 2:
        mask = active_edges.astype(bool)
    else:
        for k, l in active_edges:
            mask[int(k), int(l)] = True
            mask[int(l), int(k)] = True
    np.fill_diagonal(mask, True)
    if np.any(mask & ~model.adjacency):
        raise ConfigError("active_edges must be a subset of the adjacency")

    unseen = set(range(n))
    components = []
    while unseen:
        root = min(unseen)
        comp = {root}
        frontier = [root]
        while frontier:
            k = frontier.pop()
            for l in np.flatnonzero(mask[k]):
                if int(l) in unseen and int(l) not in comp:
                    comp.add(int(l))
                    frontier.append(int(l))
        unseen -= comp
        components.append(sorted(comp))
    return components


# --- serialization ---------------------------------------------------------

def model_to_dict(model: NetworkModel) -> dict:
    """JSON-ready dict; 0-based indices, self-loops implied."""
    iu = np.triu_indices(model.n_agents, k=1)
    present = model.adjacency[iu]
    edges = [[int(i), int(j)] for i, j in zip(iu[0][present], iu[1][present])]
    return {
        "n_agents": int(model.n_agents),
        "edges": edges,
        "cluster_of": [int(q) for q in model.cluster_of],
        "group_of": [int(m) for m in model.group_of],
        "minimizers": [[float(x) for x in row] for row in model.minimizers],
    }


def model_from_dict(data: dict) -> NetworkModel:
    """Inverse of :func:`model_to_dict`; validates all invariants."""
    try:
        n = int(data["n_agents"])
        edges = data["edges"]
        cluster_of = np.asarray(data["cluster_of"], dtype=np.int64)
        group_of = np.asarray(data["group_of"], dtype=np.int64)
        minimizers = np.asarray(data["minimizers"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed topology document: {exc}") from exc
    adj = np.zeros((n, n), dtype=bool)
    for pair in edges:
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ConfigError(f"edge {pair} out of range for {n} agents")
        adj[i, j] = adj[j, i] = True
    np.fill_diagonal(adj, True)
    return NetworkModel(
        n_agents=n,
        adjacency=adj,
        cluster_of=cluster_of,
        group_of=group_of,
        minimizers=minimizers,
    )


def save_model(model: NetworkModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> NetworkModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return model_from_dict(data)
