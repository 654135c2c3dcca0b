"""Time the compiled diffusion kernel against the pure-Python fallback.

Runs the same Monte Carlo trial through both backends, checks that the
results agree bit for bit, and reports per-iteration cost and speedup.
The workload is the 20-agent two-cluster network used throughout the
test suite, large enough that per-call overhead is negligible.

Usage:
    python benchmarks/compare_backends.py [--iters 5000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from diffnet.diffusion import load_kernel, run_algorithm, RunConfig
from diffnet.errors import DiffnetError
from diffnet.experiment import build_costs, build_model, load_config, resolve_theta

CONFIG = {
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
    "n_iters": 5000,
    "n_trials": 1,
    "seed": 7,
}


def time_backend(backend, model, costs, cfg, repeats):
    """Best wall time over a few repeats, plus the final trajectory."""
    best = float("inf")
    traj = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        traj = run_algorithm(model, costs, cfg)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iters", type=int, default=5000,
                        help="iterations per run (default 5000)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="repeats per backend, best time wins (default 3)")
    args = parser.parse_args()

    exp = load_config(dict(CONFIG, n_iters=args.iters))
    model = build_model(exp)
    costs, _, _ = build_costs(exp, model)
    theta = resolve_theta(exp, model)

    backends = []
    for name in ("python", "c"):
        try:
            load_kernel(name)
        except DiffnetError as exc:
            print(f"{name} backend unavailable: {exc}")
            continue
        backends.append(name)

    n_ops = args.iters * model.n_agents
    results = {}
    for name in backends:
        cfg = RunConfig(mu=exp.mu, theta=theta, n_iters=args.iters,
                        seed=exp.seed, backend=name)
        elapsed, traj = time_backend(name, model, costs, cfg, args.repeats)
        results[name] = (elapsed, traj)
        print(f"{name:>8}: {elapsed:8.3f} s  "
              f"({1e6 * elapsed / n_ops:6.3f} us per agent-iteration)")

    if len(results) == 2:
        py_t, py_traj = results["python"]
        c_t, c_traj = results["c"]
        same = (np.array_equal(py_traj.final_w, c_traj.final_w)
                and np.array_equal(py_traj.final_w_prime, c_traj.final_w_prime)
                and np.array_equal(py_traj.msd1_total, c_traj.msd1_total))
        print(f"speedup: {py_t / c_t:.1f}x, outputs bit-identical: {same}")
        if not same:
            raise SystemExit("backend mismatch: outputs differ")


if __name__ == "__main__":
    main()
