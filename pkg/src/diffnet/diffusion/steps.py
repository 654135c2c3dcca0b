"""Reference implementations of the three per-iteration operations.

These compose into the same algorithm the chunked kernels run: (1) the
static group recursion, (2) the dynamic-neighborhood recursion using the
sets decided at the previous iteration, (3) the clustering test on the
step-(1) iterates. The arithmetic matches the kernels exactly, so a
trajectory assembled from these steps is bit-identical to an engine run
with either backend. They are the readable specification; the engine is
the fast path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..combination import metropolis_from_mask
from ..errors import ConfigError, DivergenceDetected
from ..models import _per_agent_mu
from ..network import group_mask as _group_mask

__all__ = [
    "SimulationState",
    "DecisionRecord",
    "init_state",
    "atc_group_step",
    "atc_dynamic_step",
    "clustering_test",
    "adjacent_pairs",
    "as_theta_matrix",
    "run_reference",
]


@dataclass
class SimulationState:
    """Mutable per-trial state: both iterate families plus the accepted sets.

    ``dyn`` holds the current cooperation relation of the dynamic recursion
    (symmetric boolean matrix, true diagonal); it always contains the
    in-group relation and never exceeds the adjacency.
    """

    w: np.ndarray
    w_prime: np.ndarray
    dyn: np.ndarray
    iteration: int
    rng_streams: tuple

    def dyn_neighbors(self, k: int) -> tuple:
        return tuple(int(l) for l in np.flatnonzero(self.dyn[k]))


@dataclass(frozen=True)
class DecisionRecord:
    """One clustering-test outcome for an adjacent agent pair."""

    iteration: int
    agent_k: int
    agent_l: int
    delta_sq: float
    theta: float
    decision: str
    same_cluster: bool


def agent_streams(seed: int, trial: int, n_agents: int) -> tuple:
    """One independent generator per agent, keyed by (seed, trial, agent)."""
    return tuple(
        np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial, k])))
        for k in range(n_agents)
    )


def init_state(model, seed: int, trial: int = 0) -> SimulationState:
    """Zero iterates, in-group cooperation sets, fresh per-agent streams."""
    n, m = model.n_agents, model.dim
    return SimulationState(
        w=np.zeros((n, m)),
        w_prime=np.zeros((n, m)),
        dyn=_group_mask(model),
        iteration=0,
        rng_streams=agent_streams(seed, trial, n),
    )


def adjacent_pairs(model):
    """Canonical list of tested pairs: adjacent (k, l) with k < l."""
    pi, pj = [], []
    for k in range(model.n_agents):
        for l in range(k + 1, model.n_agents):
            if model.adjacency[k, l]:
                pi.append(k)
                pj.append(l)
    return np.asarray(pi, dtype=np.int64), np.asarray(pj, dtype=np.int64)


def as_theta_matrix(theta, model) -> np.ndarray:
    """Uniform scalar or full symmetric matrix of positive thresholds."""
    n = model.n_agents
    arr = np.asarray(theta, dtype=np.float64)
    if arr.ndim == 0:
        if float(arr) <= 0.0:
            raise ConfigError(f"theta must be positive, got {float(arr)}")
        return np.full((n, n), float(arr))
    if arr.shape != (n, n):
        raise ConfigError(f"theta matrix must be {n}x{n}, got {arr.shape}")
    if not np.array_equal(arr, arr.T):
        raise ConfigError("theta matrix must be symmetric")
    if np.any(arr <= 0.0):
        raise ConfigError("theta entries must be positive")
    return arr


def _combine(weights: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Column-stochastic combination, accumulated in ascending source order."""
    out = np.zeros_like(psi)
    for l in range(psi.shape[0]):
        out = out + weights[l][:, None] * psi[l][None, :]
    return out


def _adapt(state_w, model, costs, mu, streams):
    wo = model.agent_minimizers()
    psi = np.empty_like(state_w)
    for k in range(model.n_agents):
        u_std = streams[k].standard_normal(model.dim)
        v_std = streams[k].standard_normal()
        g = costs[k].gradient_from_noise(state_w[k], wo[k], u_std, v_std)
        psi[k] = state_w[k] - mu[k] * g
    return psi


def atc_group_step(state: SimulationState, model, costs, a_static, mu) -> SimulationState:
    """Static-group recursion: adapt every agent, then combine within groups.

    Two-phase synchronous semantics: all adaptation draws happen on the old
    iterates before any combination. Consumes one regressor block and one
    noise value per agent from the state's streams.
    """
    mu = _per_agent_mu(mu, model.n_agents)
    psi = _adapt(state.w, model, costs, mu, state.rng_streams)
    new_w = _combine(np.asarray(a_static, dtype=np.float64), psi)
    if not np.all(np.isfinite(new_w)):
        raise DivergenceDetected(
            f"recursion 1 produced non-finite iterates at iteration {state.iteration}",
            iteration=state.iteration,
        )
    return replace(state, w=new_w)


def atc_dynamic_step(state: SimulationState, model, costs, mu) -> SimulationState:
    """Dynamic recursion: fresh gradient sample, Metropolis weights on the
    sets accepted at the previous iteration."""
    mu = _per_agent_mu(mu, model.n_agents)
    psi = _adapt(state.w_prime, model, costs, mu, state.rng_streams)
    weights = metropolis_from_mask(state.dyn)
    new_wp = _combine(weights, psi)
    if not np.all(np.isfinite(new_wp)):
        raise DivergenceDetected(
            f"recursion 2 produced non-finite iterates at iteration {state.iteration}",
            iteration=state.iteration,
        )
    return replace(state, w_prime=new_wp)


def clustering_test(w, model, theta, iteration: int = 0):
    """Hypothesis test on every adjacent pair; returns records and new sets.

    A pair is accepted (H0, same cluster) when the squared distance of the
    iterates is strictly below the threshold. The updated cooperation
    relation is the union of accepted pairs with the in-group relation, so
    group members are never dropped; it is symmetric because both endpoints
    share one statistic and one threshold.
    """
    theta_mat = as_theta_matrix(theta, model)
    pair_i, pair_j = adjacent_pairs(model)
    mask = _group_mask(model)
    records = []
    for k, l in zip(pair_i, pair_j):
        acc = 0.0
        for j in range(model.dim):
            dj = w[k, j] - w[l, j]
            acc = acc + dj * dj
        h1 = bool(acc >= theta_mat[k, l])
        if not h1:
            mask[k, l] = True
            mask[l, k] = True
        records.append(
            DecisionRecord(
                iteration=iteration,
                agent_k=int(k),
                agent_l=int(l),
                delta_sq=float(acc),
                theta=float(theta_mat[k, l]),
                decision="H1" if h1 else "H0",
                same_cluster=bool(model.cluster_of[k] == model.cluster_of[l]),
            )
        )
    return records, mask


def run_reference(model, costs, a_static, mu, theta, n_iters, seed, trial=0):
    """Compose the three steps for ``n_iters`` iterations (test oracle).

    Returns (w_hist, wp_hist, records, final_state) with one state snapshot
    per iteration. Slow but transparent; the engine must match it exactly.
    """
    state = init_state(model, seed, trial)
    w_hist = np.empty((n_iters, model.n_agents, model.dim))
    wp_hist = np.empty_like(w_hist)
    all_records = []
    for i in range(n_iters):
        state = atc_group_step(state, model, costs, a_static, mu)
        state = atc_dynamic_step(state, model, costs, mu)
        records, mask = clustering_test(state.w, model, theta, iteration=i)
        state = replace(state, dyn=mask, iteration=i + 1)
        w_hist[i] = state.w
        wp_hist[i] = state.w_prime
        all_records.extend(records)
    return w_hist, wp_hist, all_records, state
