"""Experiment configuration and the Monte Carlo harness.

A single JSON document describes the network, the agent population, the
algorithm parameters, and the trial budget. Trials are independent with
per-(seed, trial, agent) random streams, so they can run in a process
pool; results are folded in trial-index order, which makes parallel and
serial execution produce identical aggregates.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .combination import metropolis_from_mask
from .diffusion import RunConfig, adjacent_pairs, run_algorithm
from .errors import ConfigError, DivergenceDetected
from .models import LmsAgentSpec, lms_cost_model
from .network import (
    NetworkModel,
    TopologySpec,
    connected_components,
    generate_topology,
    group_mask,
    load_model,
    model_from_dict,
    model_to_dict,
)

__all__ = [
    "ExperimentConfig",
    "MonteCarloResult",
    "load_config",
    "build_model",
    "build_costs",
    "resolve_theta",
    "steady_start",
    "monte_carlo",
    "summarize",
]

_AGENT_TAG = 0x61676E74

DEFAULT_OUTPUTS = ("msd_curves", "decisions", "final_topology", "summary")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the JSON schema)."""

    topology: dict | None
    topology_file: str | None
    agents: dict
    mu: object
    theta_mode: str
    theta_value: float
    n_iters: int
    n_trials: int
    seed: int
    output_dir: str
    outputs: tuple = DEFAULT_OUTPUTS
    chunk_size: int = 512
    backend: str | None = None
    collect_covariance: bool = False
    sweep: dict = field(default_factory=dict)

    def run_config(self, theta: float, trial: int, **overrides) -> RunConfig:
        kw = {
            "mu": self.mu,
            "theta": theta,
            "n_iters": self.n_iters,
            "seed": self.seed,
            "trial": trial,
            "backend": self.backend,
            "chunk_size": self.chunk_size,
        }
        kw.update(overrides)
        return RunConfig(**kw)


def load_config(source) -> ExperimentConfig:
    """Build an ExperimentConfig from a dict, a JSON string, or a file path."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if os.path.exists(text):
            with open(text, "r", encoding="utf-8") as fh:
                text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return _config_from_dict(data)


def _config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = {
        "topology", "topology_file", "agents", "mu", "theta", "n_iters",
        "n_trials", "seed", "output_dir", "outputs", "chunk_size", "backend",
        "collect_covariance", "sweep",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    topology = data.get("topology")
    topology_file = data.get("topology_file")
    if (topology is None) == (topology_file is None):
        raise ConfigError("exactly one of 'topology' or 'topology_file' is required")

    theta = data.get("theta")
    if not isinstance(theta, dict) or "mode" not in theta:
        raise ConfigError("'theta' must be an object with a 'mode' field")
    mode = theta["mode"]
    if mode == "relative":
        value = float(theta.get("beta", 0.5))
        if not (0.0 < value < 1.0):
            raise ConfigError(f"relative theta needs beta in (0,1), got {value}")
    elif mode == "absolute":
        if "value" not in theta:
            raise ConfigError("absolute theta needs a 'value' field")
        value = float(theta["value"])
        if value <= 0.0:
            raise ConfigError(f"theta value must be positive, got {value}")
    else:
        raise ConfigError(f"theta mode must be 'relative' or 'absolute', got {mode!r}")

    n_iters = int(data.get("n_iters", 0))
    n_trials = int(data.get("n_trials", 0))
    if n_iters < 1:
        raise ConfigError(f"n_iters must be >= 1, got {n_iters}")
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")

    mu = data.get("mu")
    if mu is None:
        raise ConfigError("'mu' is required")
    mu_arr = np.asarray(mu, dtype=np.float64)
    if np.any(mu_arr <= 0.0):
        raise ConfigError("mu must be strictly positive")

    agents = dict(data.get("agents", {}))
    if not isinstance(agents, dict):
        raise ConfigError("'agents' must be an object with sigma_u_sq / sigma_v_sq")
    # Default ranges for "positive and randomly generated" variances.
    agents.setdefault("sigma_u_sq", [0.5, 1.5])
    agents.setdefault("sigma_v_sq", [0.05, 0.2])

    outputs = tuple(data.get("outputs", DEFAULT_OUTPUTS))
    bad = set(outputs) - set(DEFAULT_OUTPUTS)
    if bad:
        raise ConfigError(f"unknown outputs: {sorted(bad)}")

    return ExperimentConfig(
        topology=topology,
        topology_file=topology_file,
        agents=agents,
        mu=mu if np.ndim(mu) else float(mu),
        theta_mode=mode,
        theta_value=value,
        n_iters=n_iters,
        n_trials=n_trials,
        seed=int(data.get("seed", 0)),
        output_dir=str(data.get("output_dir", "out")),
        outputs=outputs,
        chunk_size=int(data.get("chunk_size", 512)),
        backend=data.get("backend"),
        collect_covariance=bool(data.get("collect_covariance", False)),
        sweep=dict(data.get("sweep", {})),
    )


def build_model(cfg: ExperimentConfig) -> NetworkModel:
    """Materialize the topology from the inline spec or a topology file."""
    if cfg.topology_file is not None:
        return load_model(cfg.topology_file)
    t = dict(cfg.topology)
    known = {
        "cluster_sizes", "group_sizes_per_cluster", "intra_cluster_edge_prob",
        "cross_cluster_edge_prob", "rng_seed", "dim", "minimizers", "max_retries",
    }
    unknown = set(t) - known
    if unknown:
        raise ConfigError(f"unknown topology keys: {sorted(unknown)}")
    minimizers = t.get("minimizers")
    spec = TopologySpec(
        cluster_sizes=tuple(t["cluster_sizes"]),
        group_sizes_per_cluster=tuple(tuple(row) for row in t["group_sizes_per_cluster"]),
        intra_cluster_edge_prob=float(t["intra_cluster_edge_prob"]),
        cross_cluster_edge_prob=float(t["cross_cluster_edge_prob"]),
        rng_seed=int(t.get("rng_seed", cfg.seed)),
        dim=int(t.get("dim", 2)),
        minimizers=None if minimizers is None else np.asarray(minimizers, dtype=np.float64),
        max_retries=int(t.get("max_retries", 2000)),
    )
    return generate_topology(spec)


def _agent_values(spec_value, n: int, rng) -> np.ndarray:
    """Scalar -> constant vector; [lo, hi] -> one uniform draw per agent."""
    if np.ndim(spec_value) == 0:
        return np.full(n, float(spec_value))
    pair = list(spec_value)
    if len(pair) != 2 or pair[0] > pair[1]:
        raise ConfigError(f"range spec must be [lo, hi], got {spec_value}")
    return rng.uniform(float(pair[0]), float(pair[1]), n)


def build_costs(cfg: ExperimentConfig, model: NetworkModel):
    """Per-agent LMS models; range specs are sampled from a config-keyed stream."""
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([cfg.seed, _AGENT_TAG]))
    )
    su2 = _agent_values(cfg.agents["sigma_u_sq"], model.n_agents, rng)
    sv2 = _agent_values(cfg.agents["sigma_v_sq"], model.n_agents, rng)
    costs = [
        lms_cost_model(LmsAgentSpec(su2[k], sv2[k], model.dim))
        for k in range(model.n_agents)
    ]
    return costs, su2, sv2


def resolve_theta(cfg: ExperimentConfig, model: NetworkModel) -> float:
    """Absolute threshold, or beta times the smallest squared minimizer gap."""
    if cfg.theta_mode == "absolute":
        return cfg.theta_value
    q = model.n_clusters
    if q < 2:
        raise ConfigError("relative theta needs at least two clusters")
    gaps = [
        float(np.sum((model.minimizers[a] - model.minimizers[b]) ** 2))
        for a in range(q) for b in range(a + 1, q)
    ]
    return cfg.theta_value * min(gaps)


def steady_start(n_iters: int) -> int:
    """First iteration of the steady-state window (final 10%)."""
    return n_iters - max(1, n_iters // 10)


# --- Monte Carlo -----------------------------------------------------------

@dataclass
class MonteCarloResult:
    """Aggregates over completed trials, identical for serial and parallel runs."""

    n_trials: int
    completed: list
    diverged: list
    iters: np.ndarray
    msd1_total: np.ndarray
    msd2_total: np.ndarray
    msd1_cluster: np.ndarray
    msd2_cluster: np.ndarray
    fa_mean: np.ndarray
    miss_mean: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_same_cluster: np.ndarray
    pair_h1_steady: np.ndarray
    pair_tests_steady: np.ndarray
    success_flags: list
    trial0_edges: list
    trial0_components: list
    cov_sum: np.ndarray | None
    cov_count: int
    theta: float
    steady_start: int


def _trial_payload(cfg: ExperimentConfig, model, su2, sv2, theta, trial,
                   collect_cov, cov_stride):
    return {
        "model": model_to_dict(model),
        "su2": [float(x) for x in su2],
        "sv2": [float(x) for x in sv2],
        "mu": cfg.mu if np.ndim(cfg.mu) == 0 else [float(x) for x in cfg.mu],
        "theta": theta,
        "n_iters": cfg.n_iters,
        "seed": cfg.seed,
        "trial": trial,
        "backend": cfg.backend,
        "chunk_size": cfg.chunk_size,
        "collect_cov": collect_cov,
        "cov_stride": cov_stride,
        "keep_edges": trial == 0,
    }


def _run_trial(payload: dict) -> dict:
    """Worker entry point: rebuilds the model and costs from primitives."""
    model = model_from_dict(payload["model"])
    costs = [
        lms_cost_model(LmsAgentSpec(su, sv, model.dim))
        for su, sv in zip(payload["su2"], payload["sv2"])
    ]
    a_static = metropolis_from_mask(group_mask(model))
    cfg = RunConfig(
        mu=payload["mu"],
        theta=payload["theta"],
        n_iters=payload["n_iters"],
        seed=payload["seed"],
        trial=payload["trial"],
        backend=payload["backend"],
        chunk_size=payload["chunk_size"],
    )
    n_iters = payload["n_iters"]
    ss = steady_start(n_iters)
    wo_flat = model.agent_minimizers().reshape(-1)
    nm = wo_flat.shape[0]

    pair_i, pair_j = adjacent_pairs(model)
    h1_steady = np.zeros(pair_i.shape[0], dtype=np.int64)
    tests_steady = np.zeros(pair_i.shape[0], dtype=np.int64)

    cov_sum = np.zeros((nm, nm)) if payload["collect_cov"] else None
    cov_count = 0
    stride = payload["cov_stride"]

    def observer(t0, w1_chunk, _w2_chunk):
        nonlocal cov_sum, cov_count
        if cov_sum is None:
            return
        for local_t in range(w1_chunk.shape[0]):
            t = t0 + local_t
            if t >= ss and (t - ss) % stride == 0:
                e = w1_chunk[local_t].reshape(-1) - wo_flat
                cov_sum += np.outer(e, e)
                cov_count += 1

    def pair_observer(t0, _dsq_chunk, h1_chunk):
        lo = max(ss - t0, 0)
        if lo < h1_chunk.shape[0]:
            h1_steady[:] += h1_chunk[lo:].sum(axis=0, dtype=np.int64)
            tests_steady[:] += h1_chunk.shape[0] - lo

    try:
        traj = run_algorithm(
            model, costs, cfg, a_static=a_static,
            observer=observer if cov_sum is not None else None,
            pair_observer=pair_observer,
        )
    except DivergenceDetected as exc:
        return {"trial": payload["trial"], "diverged_at": exc.iteration}

    comps = connected_components(model, traj.final_active_edges)
    clusters = [
        sorted(int(k) for k in model.cluster_members(q))
        for q in range(model.n_clusters)
    ]
    success = sorted(comps) == sorted(clusters)

    out = {
        "trial": payload["trial"],
        "diverged_at": None,
        "msd1_total": traj.msd1_total,
        "msd2_total": traj.msd2_total,
        "msd1_cluster": traj.msd1_cluster,
        "msd2_cluster": traj.msd2_cluster,
        "fa": traj.n_false_alarm,
        "miss": traj.n_miss,
        "h1_steady": h1_steady,
        "tests_steady": tests_steady,
        "success": success,
        "cov_sum": cov_sum,
        "cov_count": cov_count,
    }
    if payload["keep_edges"]:
        out["edges"] = traj.final_active_edges
        out["components"] = comps
    return out


def _worker_count(n_trials: int) -> int:
    env = os.environ.get("DIFFNET_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError(f"DIFFNET_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigError("DIFFNET_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_trials))


def monte_carlo(cfg: ExperimentConfig, model=None, costs_arrays=None) -> MonteCarloResult:
    """Run all trials and fold their results in trial-index order.

    Worker processes rebuild the model and costs from primitive payloads,
    so no live objects cross process boundaries; with one worker the same
    function runs in-process. Divergent trials are recorded and excluded
    from the averages.
    """
    if model is None:
        model = build_model(cfg)
    if costs_arrays is None:
        _, su2, sv2 = build_costs(cfg, model)
    else:
        su2, sv2 = costs_arrays
    theta = resolve_theta(cfg, model)
    ss = steady_start(cfg.n_iters)
    cov_stride = max(1, (cfg.n_iters - ss) // 20)

    payloads = [
        _trial_payload(cfg, model, su2, sv2, theta, t, cfg.collect_covariance, cov_stride)
        for t in range(cfg.n_trials)
    ]
    workers = _worker_count(cfg.n_trials)
    if workers == 1:
        results = (_run_trial(p) for p in payloads)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        futures = [pool.submit(_run_trial, p) for p in payloads]
        results = (f.result() for f in futures)

    n_rows = cfg.n_iters + 1
    q = model.n_clusters
    pair_i, pair_j = adjacent_pairs(model)
    n_pairs = pair_i.shape[0]

    acc = {
        "msd1_total": np.zeros(n_rows),
        "msd2_total": np.zeros(n_rows),
        "msd1_cluster": np.zeros((n_rows, q)),
        "msd2_cluster": np.zeros((n_rows, q)),
        "fa": np.zeros(n_rows),
        "miss": np.zeros(n_rows),
    }
    h1_steady = np.zeros(n_pairs, dtype=np.int64)
    tests_steady = np.zeros(n_pairs, dtype=np.int64)
    cov_sum = np.zeros((model.n_agents * model.dim,) * 2) if cfg.collect_covariance else None
    cov_count = 0
    completed, diverged, success_flags = [], [], []
    trial0_edges, trial0_components = [], []

    for res in results:
        if res["diverged_at"] is not None:
            diverged.append((res["trial"], res["diverged_at"]))
            success_flags.append(False)
            continue
        completed.append(res["trial"])
        success_flags.append(bool(res["success"]))
        for key in ("msd1_total", "msd2_total", "msd1_cluster", "msd2_cluster"):
            acc[key] += res[key]
        acc["fa"] += res["fa"]
        acc["miss"] += res["miss"]
        h1_steady += res["h1_steady"]
        tests_steady += res["tests_steady"]
        if cov_sum is not None and res["cov_sum"] is not None:
            cov_sum += res["cov_sum"]
            cov_count += res["cov_count"]
        if res["trial"] == 0:
            trial0_edges = res.get("edges", [])
            trial0_components = res.get("components", [])
    if workers > 1:
        pool.shutdown()

    n_done = max(len(completed), 1)
    return MonteCarloResult(
        n_trials=cfg.n_trials,
        completed=completed,
        diverged=diverged,
        iters=np.arange(-1, cfg.n_iters, dtype=np.int64),
        msd1_total=acc["msd1_total"] / n_done,
        msd2_total=acc["msd2_total"] / n_done,
        msd1_cluster=acc["msd1_cluster"] / n_done,
        msd2_cluster=acc["msd2_cluster"] / n_done,
        fa_mean=acc["fa"] / n_done,
        miss_mean=acc["miss"] / n_done,
        pair_i=pair_i,
        pair_j=pair_j,
        pair_same_cluster=(model.cluster_of[pair_i] == model.cluster_of[pair_j]),
        pair_h1_steady=h1_steady,
        pair_tests_steady=tests_steady,
        success_flags=success_flags,
        trial0_edges=trial0_edges,
        trial0_components=trial0_components,
        cov_sum=cov_sum,
        cov_count=cov_count,
        theta=theta,
        steady_start=ss,
    )


def _steady_mean(curve: np.ndarray, ss: int) -> float:
    """Mean over the curve rows belonging to iterations >= ss."""
    return float(curve[ss + 1:].mean())


def summarize(mc: MonteCarloResult, model: NetworkModel, cfg: ExperimentConfig) -> dict:
    """Steady-state statistics, clustering success, and empirical error rates."""
    n = model.n_agents
    q = model.n_clusters
    ss = mc.steady_start
    cluster_sizes = [int(model.cluster_members(c).size) for c in range(q)]

    def db(x):
        return 10.0 * np.log10(x) if x > 0 else None

    same = mc.pair_same_cluster
    tests_same = int(mc.pair_tests_steady[same].sum())
    tests_cross = int(mc.pair_tests_steady[~same].sum())
    fa = int(mc.pair_h1_steady[same].sum())
    miss = int((mc.pair_tests_steady[~same] - mc.pair_h1_steady[~same]).sum())

    summary = {
        "n_trials": mc.n_trials,
        "n_completed": len(mc.completed),
        "diverged_trials": [{"trial": t, "iteration": i} for t, i in mc.diverged],
        "theta": mc.theta,
        "steady_start_iteration": ss,
        "steady_state": {
            "msd_rec1_total": _steady_mean(mc.msd1_total, ss),
            "msd_rec2_total": _steady_mean(mc.msd2_total, ss),
            "msd_rec1_per_agent_mean": _steady_mean(mc.msd1_total, ss) / n,
            "msd_rec2_per_agent_mean": _steady_mean(mc.msd2_total, ss) / n,
            "msd_rec1_total_db": db(_steady_mean(mc.msd1_total, ss)),
            "msd_rec2_total_db": db(_steady_mean(mc.msd2_total, ss)),
            "msd_rec1_cluster": [
                _steady_mean(mc.msd1_cluster[:, c], ss) for c in range(q)
            ],
            "msd_rec2_cluster": [
                _steady_mean(mc.msd2_cluster[:, c], ss) for c in range(q)
            ],
            "msd_rec1_cluster_per_agent_mean": [
                _steady_mean(mc.msd1_cluster[:, c], ss) / cluster_sizes[c]
                for c in range(q)
            ],
            "msd_rec2_cluster_per_agent_mean": [
                _steady_mean(mc.msd2_cluster[:, c], ss) / cluster_sizes[c]
                for c in range(q)
            ],
        },
        "clustering": {
            "success_rate": float(np.mean(mc.success_flags)) if mc.success_flags else 0.0,
            "per_trial_success": [bool(s) for s in mc.success_flags],
        },
        "error_rates": {
            "type1_rate": fa / tests_same if tests_same else None,
            "type2_rate": miss / tests_cross if tests_cross else None,
            "n_same_cluster_tests": tests_same,
            "n_cross_cluster_tests": tests_cross,
        },
    }
    return summary
