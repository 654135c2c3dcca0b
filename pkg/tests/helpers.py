"""Shared builders for the test suite."""

import numpy as np

from diffnet.models import LmsAgentSpec, lms_cost_model
from diffnet.network import NetworkModel, TopologySpec, generate_topology

# The 20-agent reference network used by the cross-module acceptance runs:
# two clusters of ten agents, split into 4 + 3 groups, all strict subsets.
DESK_SPEC = dict(
    cluster_sizes=(10, 10),
    group_sizes_per_cluster=((3, 3, 2, 2), (4, 3, 3)),
    intra_cluster_edge_prob=0.7,
    cross_cluster_edge_prob=0.2,
    rng_seed=20,
    minimizers=np.array([[1.0, 1.2], [-1.0, -0.8]]),
)

DESK_CONFIG = {
    "topology": {
        "cluster_sizes": [10, 10],
        "group_sizes_per_cluster": [[3, 3, 2, 2], [4, 3, 3]],
        "intra_cluster_edge_prob": 0.7,
        "cross_cluster_edge_prob": 0.2,
        "rng_seed": 20,
        "minimizers": [[1.0, 1.2], [-1.0, -0.8]],
    },
    "agents": {"sigma_u_sq": 1.0, "sigma_v_sq": 0.1},
    "mu": 0.01,
    "theta": {"mode": "relative", "beta": 0.5},
    "n_iters": 1000,
    "n_trials": 10,
    "seed": 404,
}


def make_desk_model() -> NetworkModel:
    return generate_topology(TopologySpec(**DESK_SPEC))


def make_small_model(seed: int = 7) -> NetworkModel:
    """12 agents, 2 clusters, 3 groups; quick enough for per-test runs."""
    spec = TopologySpec(
        cluster_sizes=(6, 6),
        group_sizes_per_cluster=((3, 3), (6,)),
        intra_cluster_edge_prob=0.8,
        cross_cluster_edge_prob=0.3,
        rng_seed=seed,
        minimizers=np.array([[1.0, 1.0], [-1.0, -1.0]]),
    )
    return generate_topology(spec)


def make_path_model() -> NetworkModel:
    """Hand-built 3-agent path 0-1-2, one cluster, one group."""
    adj = np.array(
        [[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=bool
    )
    return NetworkModel(
        n_agents=3,
        adjacency=adj,
        cluster_of=np.zeros(3, dtype=np.int64),
        group_of=np.zeros(3, dtype=np.int64),
        minimizers=np.array([[0.5, -0.5]]),
    )


def uniform_costs(model, sigma_u_sq=1.0, sigma_v_sq=0.1):
    return [
        lms_cost_model(LmsAgentSpec(sigma_u_sq, sigma_v_sq, model.dim))
        for _ in range(model.n_agents)
    ]
