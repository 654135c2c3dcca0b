"""Chunked simulation engine.

Runs one trial of the full algorithm through a kernel backend. Noise for
all agents is pre-drawn per chunk from per-agent streams (the draw order
per agent and iteration matches the step functions exactly), the kernel
advances the state, and every aggregate (MSD curves, decision counts,
logs, covariance observations) is computed here from the recorded states
in backend-independent code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceDetected
from ..models import _per_agent_mu
from ..network import group_mask as _group_mask
from ._backend import default_kernel, load_kernel
from .steps import DecisionRecord, adjacent_pairs, agent_streams, as_theta_matrix

__all__ = ["RunConfig", "Trajectory", "DecisionLog", "run_algorithm"]

DEFAULT_CHUNK = 512


@dataclass(frozen=True)
class RunConfig:
    """Parameters of a single trial.

    ``theta`` is a uniform scalar or full symmetric matrix of thresholds;
    ``backend`` overrides the default kernel choice; ``log_decisions``
    keeps the full per-pair decision log (memory grows with
    n_iters x n_pairs).
    """

    mu: object
    theta: object
    n_iters: int
    seed: int
    trial: int = 0
    backend: str | None = None
    log_decisions: bool = False
    chunk_size: int = DEFAULT_CHUNK


class DecisionLog:
    """Column-oriented decision log over all iterations and tested pairs."""

    def __init__(self, iteration, agent_k, agent_l, delta_sq, theta, h1, same_cluster):
        self.iteration = iteration
        self.agent_k = agent_k
        self.agent_l = agent_l
        self.delta_sq = delta_sq
        self.theta = theta
        self.h1 = h1
        self.same_cluster = same_cluster

    def __len__(self):
        return self.iteration.shape[0]

    def __getitem__(self, i) -> DecisionRecord:
        return DecisionRecord(
            iteration=int(self.iteration[i]),
            agent_k=int(self.agent_k[i]),
            agent_l=int(self.agent_l[i]),
            delta_sq=float(self.delta_sq[i]),
            theta=float(self.theta[i]),
            decision="H1" if self.h1[i] else "H0",
            same_cluster=bool(self.same_cluster[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass
class Trajectory:
    """Single-trial output: curves indexed by iteration (first row = initial
    state at iteration -1), decision counts, final state, cooperation edges."""

    iters: np.ndarray
    msd1_total: np.ndarray
    msd2_total: np.ndarray
    msd1_cluster: np.ndarray
    msd2_cluster: np.ndarray
    n_false_alarm: np.ndarray
    n_miss: np.ndarray
    final_w: np.ndarray
    final_w_prime: np.ndarray
    final_active_edges: list
    decision_log: DecisionLog | None = field(default=None, repr=False)


def _sigma_arrays(costs):
    su = np.array([c.sigma_u for c in costs], dtype=np.float64)
    sv = np.array([c.sigma_v for c in costs], dtype=np.float64)
    return su, sv


def run_algorithm(model, costs, config: RunConfig, a_static=None, observer=None,
                  pair_observer=None) -> Trajectory:
    """Run one trial: per iteration, the static-group update, the dynamic
    update on the previous sets, and the clustering test.

    Parameters
    ----------
    model, costs : network and per-agent cost models.
    config : RunConfig
    a_static : (N, N) array, optional
        Static in-group combination matrix; Metropolis weights over the
        in-group neighbor sets when omitted.
    observer : callable, optional
        ``observer(t0, w1_chunk, w2_chunk)`` invoked per chunk with the
        recorded iterates of iterations ``t0 .. t0+len-1`` (views into a
        reused buffer: copy anything kept).
    pair_observer : callable, optional
        ``pair_observer(t0, dsq_chunk, h1_chunk)`` invoked per chunk with
        the pair statistics and decisions (same buffer caveat).

    Raises
    ------
    DivergenceDetected
        On the first non-finite iterate, with iteration and trial attached.
    """
    n, m = model.n_agents, model.dim
    if len(costs) != n:
        raise ConfigError(f"expected {n} cost models, got {len(costs)}")
    if config.n_iters < 0:
        raise ConfigError("n_iters must be nonnegative")
    mu = _per_agent_mu(config.mu, n)
    theta_mat = as_theta_matrix(config.theta, model)
    kernel = load_kernel(config.backend)[0] if config.backend else default_kernel()

    gmask_bool = _group_mask(model)
    if a_static is None:
        from ..combination import metropolis_from_mask
        a_static = metropolis_from_mask(gmask_bool)
    else:
        a_static = np.ascontiguousarray(a_static, dtype=np.float64)
        if np.any((a_static != 0) & ~gmask_bool):
            raise ConfigError("static combination matrix has support outside groups")

    su, sv = _sigma_arrays(costs)
    wo = np.ascontiguousarray(model.agent_minimizers())
    pair_i, pair_j = adjacent_pairs(model)
    n_pairs = pair_i.shape[0]
    theta_pairs = np.ascontiguousarray(theta_mat[pair_i, pair_j])
    same_pair = (model.cluster_of[pair_i] == model.cluster_of[pair_j])
    cross_pair = ~same_pair

    w = np.zeros((n, m))
    wp = np.zeros((n, m))
    dyn = np.ascontiguousarray(gmask_bool, dtype=np.uint8)
    gmask = np.ascontiguousarray(gmask_bool, dtype=np.uint8)
    streams = agent_streams(config.seed, config.trial, n)

    n_iters = int(config.n_iters)
    n_rows = n_iters + 1
    q = model.n_clusters
    cluster_members = [model.cluster_members(c) for c in range(q)]

    msd1_total = np.empty(n_rows)
    msd2_total = np.empty(n_rows)
    msd1_cluster = np.empty((n_rows, q))
    msd2_cluster = np.empty((n_rows, q))
    n_fa = np.zeros(n_rows, dtype=np.int64)
    n_miss = np.zeros(n_rows, dtype=np.int64)

    init_sq = (wo * wo).sum(axis=1)
    msd1_total[0] = msd2_total[0] = init_sq.sum()
    for c in range(q):
        msd1_cluster[0, c] = msd2_cluster[0, c] = init_sq[cluster_members[c]].sum()

    chunk = max(1, int(config.chunk_size))
    u1 = np.empty((chunk, n, m))
    v1 = np.empty((chunk, n))
    u2 = np.empty((chunk, n, m))
    v2 = np.empty((chunk, n))
    out_w1 = np.empty((chunk, n, m))
    out_w2 = np.empty((chunk, n, m))
    out_dsq = np.empty((chunk, n_pairs))
    out_h1 = np.empty((chunk, n_pairs), dtype=np.uint8)

    log_dsq = [] if config.log_decisions else None
    log_h1 = [] if config.log_decisions else None

    t0 = 0
    while t0 < n_iters:
        t_len = min(chunk, n_iters - t0)
        for k in range(n):
            block = streams[k].standard_normal((t_len, 2 * m + 2))
            u1[:t_len, k, :] = block[:, :m]
            v1[:t_len, k] = block[:, m]
            u2[:t_len, k, :] = block[:, m + 1:2 * m + 1]
            v2[:t_len, k] = block[:, 2 * m + 1]

        kernel.run_chunk(
            w, wp, dyn, wo, mu, su, sv, a_static, gmask, theta_pairs,
            pair_i, pair_j,
            u1[:t_len], v1[:t_len], u2[:t_len], v2[:t_len],
            out_w1[:t_len], out_w2[:t_len], out_dsq[:t_len], out_h1[:t_len],
        )

        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(wp))):
            bad1 = ~np.isfinite(out_w1[:t_len]).reshape(t_len, -1).all(axis=1)
            bad2 = ~np.isfinite(out_w2[:t_len]).reshape(t_len, -1).all(axis=1)
            first = int(np.flatnonzero(bad1 | bad2)[0])
            raise DivergenceDetected(
                f"non-finite iterate at iteration {t0 + first} "
                f"(trial {config.trial}, mu_max={mu.max():g})",
                iteration=t0 + first,
                trial=config.trial,
            )

        err1 = out_w1[:t_len] - wo[None, :, :]
        err2 = out_w2[:t_len] - wo[None, :, :]
        sq1 = (err1 * err1).sum(axis=2)
        sq2 = (err2 * err2).sum(axis=2)
        rows = slice(t0 + 1, t0 + 1 + t_len)
        msd1_total[rows] = sq1.sum(axis=1)
        msd2_total[rows] = sq2.sum(axis=1)
        for c in range(q):
            msd1_cluster[rows, c] = sq1[:, cluster_members[c]].sum(axis=1)
            msd2_cluster[rows, c] = sq2[:, cluster_members[c]].sum(axis=1)
        if n_pairs:
            h1c = out_h1[:t_len].astype(bool)
            n_fa[rows] = (h1c & same_pair[None, :]).sum(axis=1)
            n_miss[rows] = (~h1c & cross_pair[None, :]).sum(axis=1)
        if config.log_decisions:
            log_dsq.append(out_dsq[:t_len].copy())
            log_h1.append(out_h1[:t_len].copy())
        if observer is not None:
            observer(t0, out_w1[:t_len], out_w2[:t_len])
        if pair_observer is not None:
            pair_observer(t0, out_dsq[:t_len], out_h1[:t_len])
        t0 += t_len

    edges = [
        (int(k), int(l))
        for k in range(n)
        for l in range(k + 1, n)
        if dyn[k, l]
    ]

    log = None
    if config.log_decisions:
        if n_iters and n_pairs:
            dsq_all = np.concatenate(log_dsq, axis=0)
            h1_all = np.concatenate(log_h1, axis=0)
        else:
            dsq_all = np.empty((n_iters, n_pairs))
            h1_all = np.empty((n_iters, n_pairs), dtype=np.uint8)
        log = DecisionLog(
            iteration=np.repeat(np.arange(n_iters, dtype=np.int64), n_pairs),
            agent_k=np.tile(pair_i, n_iters),
            agent_l=np.tile(pair_j, n_iters),
            delta_sq=dsq_all.reshape(-1),
            theta=np.tile(theta_pairs, n_iters),
            h1=h1_all.reshape(-1),
            same_cluster=np.tile(same_pair, n_iters),
        )

    return Trajectory(
        iters=np.arange(-1, n_iters, dtype=np.int64),
        msd1_total=msd1_total,
        msd2_total=msd2_total,
        msd1_cluster=msd1_cluster,
        msd2_cluster=msd2_cluster,
        n_false_alarm=n_fa,
        n_miss=n_miss,
        final_w=w.copy(),
        final_w_prime=wp.copy(),
        final_active_edges=edges,
        decision_log=log,
    )
