"""Command line entry points.

Subcommands: simulate, analyze, errprob, pdf, and topology
(generate/validate). Every command is a deterministic function of its
config and seed. Exit codes: 0 success, 2 config error, 3 numerical
failure.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from dataclasses import replace

import click
import numpy as np

from . import analysis
from .combination import metropolis_from_mask
from .errors import ConfigError, NumericalError
from .experiment import (
    build_costs,
    build_model,
    load_config,
    monte_carlo,
    resolve_theta,
    summarize,
)
from .network import (
    TopologySpec,
    generate_topology,
    group_mask,
    load_model,
    save_model,
)
from .reporting import theory_report_to_dict, write_csv, write_json

__all__ = ["main"]


def _handled(fn):
    """Map library exceptions to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _load_raw(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data


def _apply_overrides(data: dict, mu, theta, beta, n_iters, n_trials, seed,
                     output_dir, backend) -> dict:
    """CLI flags override the matching top-level config fields."""
    scalars = {
        "mu": mu, "n_iters": n_iters, "n_trials": n_trials, "seed": seed,
        "output_dir": output_dir, "backend": backend,
    }
    for key, val in scalars.items():
        if val is not None:
            data[key] = val
    if theta is not None and beta is not None:
        raise ConfigError("--theta and --beta are mutually exclusive")
    if theta is not None:
        data["theta"] = {"mode": "absolute", "value": theta}
    if beta is not None:
        data["theta"] = {"mode": "relative", "beta": beta}
    return data


def _config_options(fn):
    fn = click.option("--mu", type=float, default=None,
                      help="Override the step size.")(fn)
    fn = click.option("--theta", type=float, default=None,
                      help="Override theta with an absolute threshold.")(fn)
    fn = click.option("--beta", type=float, default=None,
                      help="Override theta with a relative factor in (0,1).")(fn)
    fn = click.option("--n-iters", type=int, default=None,
                      help="Override the iteration count.")(fn)
    fn = click.option("--n-trials", type=int, default=None,
                      help="Override the trial count.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the master seed.")(fn)
    fn = click.option("--output-dir", "-o", type=str, default=None,
                      help="Override the output directory.")(fn)
    fn = click.option("--backend", type=str, default=None,
                      help="Force the kernel backend (c or python).")(fn)
    return fn


@click.group()
def main():
    """Distributed clustering and learning simulator."""


# --- simulate --------------------------------------------------------------

@main.command()
@click.argument("config_path", metavar="CONFIG")
@_config_options
@_handled
def simulate(config_path, mu, theta, beta, n_iters, n_trials, seed,
             output_dir, backend):
    """Run the Monte Carlo campaign described by CONFIG."""
    raw = _apply_overrides(_load_raw(config_path), mu, theta, beta, n_iters,
                           n_trials, seed, output_dir, backend)
    cfg = load_config(raw)
    model = build_model(cfg)
    costs, su2, sv2 = build_costs(cfg, model)
    theta_val = resolve_theta(cfg, model)
    mc = monte_carlo(cfg, model=model, costs_arrays=(su2, sv2))
    out = cfg.output_dir

    if "msd_curves" in cfg.outputs:
        _write_msd_curves(os.path.join(out, "msd_curves.csv"), mc, model)
        click.echo(os.path.join(out, "msd_curves.csv"))
    if "decisions" in cfg.outputs:
        _write_decisions(os.path.join(out, "decisions.csv"), cfg, model,
                         costs, theta_val, mc)
        click.echo(os.path.join(out, "decisions.csv"))
    if "final_topology" in cfg.outputs:
        doc = {
            "n_agents": model.n_agents,
            "theta": mc.theta,
            "steady_start_iteration": mc.steady_start,
            "ground_truth_clusters": [
                [int(k) for k in model.cluster_members(q)]
                for q in range(model.n_clusters)
            ],
            "trial0": {
                "active_edges": [[int(i), int(j)] for i, j in mc.trial0_edges],
                "components": [[int(k) for k in c] for c in mc.trial0_components],
                "n_components": len(mc.trial0_components),
            },
            "per_trial_success": [bool(s) for s in mc.success_flags],
            "success_rate": float(np.mean(mc.success_flags)) if mc.success_flags else 0.0,
        }
        write_json(os.path.join(out, "final_topology.json"), doc)
        click.echo(os.path.join(out, "final_topology.json"))
    if "summary" in cfg.outputs:
        summary = summarize(mc, model, cfg)
        summary["config_echo"] = {
            "mu": cfg.mu,
            "theta_mode": cfg.theta_mode,
            "theta_value": cfg.theta_value,
            "n_iters": cfg.n_iters,
            "n_trials": cfg.n_trials,
            "seed": cfg.seed,
        }
        write_json(os.path.join(out, "summary.json"), summary)
        click.echo(os.path.join(out, "summary.json"))


def _write_msd_curves(path, mc, model):
    q = model.n_clusters
    n = model.n_agents
    header = ["iteration", "msd_rec1_total", "msd_rec2_total",
              "msd_rec1_per_agent", "msd_rec2_per_agent"]
    header += [f"msd_rec1_cluster_{c}" for c in range(q)]
    header += [f"msd_rec2_cluster_{c}" for c in range(q)]
    header += ["false_alarms_mean", "misses_mean"]

    def rows():
        for r in range(mc.iters.shape[0]):
            row = [int(mc.iters[r]), mc.msd1_total[r], mc.msd2_total[r],
                   mc.msd1_total[r] / n, mc.msd2_total[r] / n]
            row += [mc.msd1_cluster[r, c] for c in range(q)]
            row += [mc.msd2_cluster[r, c] for c in range(q)]
            row += [mc.fa_mean[r], mc.miss_mean[r]]
            yield row

    write_csv(path, header, rows())


def _write_decisions(path, cfg, model, costs, theta_val, mc):
    """Steady-state decision log from a rerun of trial 0."""
    from .diffusion import run_algorithm

    header = ["iteration", "agent_k", "agent_l", "delta_sq", "theta",
              "decision", "same_cluster"]
    if 0 not in mc.completed:
        write_csv(path, header, [])
        return
    a_static = metropolis_from_mask(group_mask(model))
    run_cfg = cfg.run_config(theta_val, 0, log_decisions=True)
    traj = run_algorithm(model, costs, run_cfg, a_static=a_static)
    log = traj.decision_log
    keep = log.iteration >= mc.steady_start

    def rows():
        idx = np.flatnonzero(keep)
        for i in idx:
            yield [int(log.iteration[i]), int(log.agent_k[i]),
                   int(log.agent_l[i]), float(log.delta_sq[i]),
                   float(log.theta[i]),
                   "H1" if log.h1[i] else "H0",
                   bool(log.same_cluster[i])]

    write_csv(path, header, rows())


# --- analyze ---------------------------------------------------------------

@main.command()
@click.argument("config_path", metavar="CONFIG")
@_config_options
@_handled
def analyze(config_path, mu, theta, beta, n_iters, n_trials, seed,
            output_dir, backend):
    """Write the steady-state theory report for CONFIG's network."""
    raw = _apply_overrides(_load_raw(config_path), mu, theta, beta, n_iters,
                           n_trials, seed, output_dir, backend)
    cfg = load_config(raw)
    model = build_model(cfg)
    costs, _, _ = build_costs(cfg, model)
    a_static = metropolis_from_mask(group_mask(model))
    report = analysis.predict(model, costs, a_static, cfg.mu)
    path = os.path.join(cfg.output_dir, "theory_report.json")
    write_json(path, theory_report_to_dict(report))
    click.echo(path)


# --- errprob ---------------------------------------------------------------

def _parse_float_list(text: str, name: str) -> list:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name} must be comma-separated floats: {text!r}") from exc
    if not values:
        raise ConfigError(f"{name} is empty")
    return values


@main.command()
@click.argument("config_path", metavar="CONFIG")
@click.option("--mu-list", type=str, default=None,
              help="Comma-separated step sizes to sweep.")
@click.option("--theta-list", type=str, default=None,
              help="Comma-separated absolute thresholds to sweep.")
@_config_options
@_handled
def errprob(config_path, mu_list, theta_list, mu, theta, beta, n_iters,
            n_trials, seed, output_dir, backend):
    """Compare closed-form error bounds against empirical decision rates."""
    raw = _apply_overrides(_load_raw(config_path), mu, theta, beta, n_iters,
                           n_trials, seed, output_dir, backend)
    cfg = load_config(raw)
    model = build_model(cfg)
    costs, su2, sv2 = build_costs(cfg, model)

    sweep = cfg.sweep
    if mu_list is not None:
        mus = _parse_float_list(mu_list, "--mu-list")
    elif "mu_list" in sweep:
        mus = [float(x) for x in sweep["mu_list"]]
    elif np.ndim(cfg.mu) == 0:
        mus = [float(cfg.mu)]
    else:
        raise ConfigError("errprob needs a mu sweep (--mu-list or sweep.mu_list)")
    if theta_list is not None:
        thetas = _parse_float_list(theta_list, "--theta-list")
    elif "theta_list" in sweep:
        thetas = [float(x) for x in sweep["theta_list"]]
    else:
        thetas = [resolve_theta(cfg, model)]
    if any(m <= 0 for m in mus) or any(t <= 0 for t in thetas):
        raise ConfigError("sweep values must be strictly positive")

    a_static = metropolis_from_mask(group_mask(model))
    bound_rows = analysis.error_bound_table(model, costs, a_static, mus, thetas)

    out = cfg.output_dir
    header = ["mu", "theta", "group_m", "group_n", "same_cluster",
              "d_star_norm_sq", "delta_sq_mean", "delta_sq_var",
              "type1_bound", "type2_bound", "note"]

    def fmt(v):
        return "" if v is None else v

    write_csv(
        os.path.join(out, "bounds.csv"), header,
        ([r["mu"], r["theta"], r["pair"][0], r["pair"][1], r["same_cluster"],
          r["d_star_norm_sq"], r["mean"], r["var"], fmt(r["type1"]),
          fmt(r["type2"]), r["note"]] for r in bound_rows),
    )
    click.echo(os.path.join(out, "bounds.csv"))

    emp_header = ["mu", "theta", "group_m", "group_n", "same_cluster",
                  "n_tests", "n_h1", "false_alarm_rate", "misdetect_rate"]
    emp_rows = []
    for mu_val in mus:
        for theta_val in thetas:
            sub = replace(cfg, mu=mu_val, theta_mode="absolute",
                          theta_value=float(theta_val))
            mc = monte_carlo(sub, model=model, costs_arrays=(su2, sv2))
            emp_rows.extend(_empirical_rows(mc, model, mu_val, theta_val))
    write_csv(os.path.join(out, "empirical.csv"), emp_header, emp_rows)
    click.echo(os.path.join(out, "empirical.csv"))


def _empirical_rows(mc, model, mu_val, theta_val):
    """Aggregate steady-state decision counts by (group, group) pair."""
    agg = {}
    g_of = model.group_of
    for p in range(mc.pair_i.shape[0]):
        gm = int(g_of[mc.pair_i[p]])
        gn = int(g_of[mc.pair_j[p]])
        key = (min(gm, gn), max(gm, gn))
        tests, h1 = agg.get(key, (0, 0))
        agg[key] = (tests + int(mc.pair_tests_steady[p]),
                    h1 + int(mc.pair_h1_steady[p]))
    rows = []
    for (gm, gn), (tests, h1) in sorted(agg.items()):
        members_m = model.group_members(gm)
        members_n = model.group_members(gn)
        same = model.cluster_of[members_m[0]] == model.cluster_of[members_n[0]]
        fa_rate = h1 / tests if (same and tests) else None
        miss_rate = (tests - h1) / tests if (not same and tests) else None
        rows.append([mu_val, theta_val, gm, gn, bool(same), tests, h1,
                     "" if fa_rate is None else fa_rate,
                     "" if miss_rate is None else miss_rate])
    return rows


# --- pdf -------------------------------------------------------------------

@main.command()
@click.option("--m-dim", type=int, required=True,
              help="Dimension M of the statistic.")
@click.option("--d-star-norm-sq", type=float, required=True,
              help="Squared distance between the two minimizers.")
@click.option("--sigma-sq", type=float, default=1.0, show_default=True,
              help="Common variance of the per-coordinate fluctuation.")
@click.option("--mu-list", type=str, required=True,
              help="Comma-separated step sizes, one pair of curves each.")
@click.option("--output-dir", "-o", type=str, default="out", show_default=True)
@_handled
def pdf(m_dim, d_star_norm_sq, sigma_sq, mu_list, output_dir):
    """Tabulate densities of the squared difference statistic."""
    mus = _parse_float_list(mu_list, "--mu-list")
    if m_dim < 1:
        raise ConfigError(f"--m-dim must be >= 1, got {m_dim}")
    if d_star_norm_sq <= 0.0:
        raise ConfigError(
            f"--d-star-norm-sq must be positive, got {d_star_norm_sq}")
    if sigma_sq <= 0.0:
        raise ConfigError(f"--sigma-sq must be positive, got {sigma_sq}")
    if any(m <= 0 for m in mus):
        raise ConfigError("--mu-list values must be strictly positive")

    # Shared grid wide enough that every curve keeps >= 99.99% of its mass
    # inside it; 12 standard deviations is far beyond that for these tails.
    z_hi = 0.0
    for mu_val in mus:
        scale = mu_val * sigma_sq
        for lam_num in (0.0, d_star_norm_sq):
            mean = scale * m_dim + lam_num
            var = 2.0 * scale * scale * m_dim + 4.0 * scale * lam_num
            z_hi = max(z_hi, mean + 12.0 * np.sqrt(var))
    grid = np.linspace(0.0, z_hi, 8001)

    def rows():
        for mu_val in mus:
            for hyp, dsq in (("central", 0.0), ("noncentral", d_star_norm_sq)):
                dens = analysis.delta_sq_pdf_special_case(
                    grid, m_dim, dsq, sigma_sq, mu_val)
                for z, f in zip(grid, dens):
                    yield [mu_val, hyp, float(z), float(f)]

    path = os.path.join(output_dir, "pdf_curves.csv")
    write_csv(path, ["mu", "hypothesis", "z", "density"], rows())
    click.echo(path)


# --- topology --------------------------------------------------------------

@main.group()
def topology():
    """Generate or validate network topology files."""


@topology.command("generate")
@click.argument("config_path", metavar="CONFIG")
@click.option("--out", type=str, required=True,
              help="Path of the topology JSON to write.")
@click.option("--seed", type=int, default=None,
              help="Override the generation seed.")
@_handled
def topology_generate(config_path, out, seed):
    """Sample a topology from CONFIG (experiment config or bare spec)."""
    raw = _load_raw(config_path)
    t = raw.get("topology", raw)
    if not isinstance(t, dict) or "cluster_sizes" not in t:
        raise ConfigError("no topology spec found in config")
    minimizers = t.get("minimizers")
    spec = TopologySpec(
        cluster_sizes=tuple(t["cluster_sizes"]),
        group_sizes_per_cluster=tuple(
            tuple(row) for row in t["group_sizes_per_cluster"]),
        intra_cluster_edge_prob=float(t["intra_cluster_edge_prob"]),
        cross_cluster_edge_prob=float(t["cross_cluster_edge_prob"]),
        rng_seed=int(seed if seed is not None
                     else t.get("rng_seed", raw.get("seed", 0))),
        dim=int(t.get("dim", 2)),
        minimizers=None if minimizers is None
        else np.asarray(minimizers, dtype=np.float64),
        max_retries=int(t.get("max_retries", 2000)),
    )
    model = generate_topology(spec)
    save_model(model, out)
    click.echo(f"{out}: {model.n_agents} agents, {model.n_clusters} clusters, "
               f"{model.n_groups} groups")


@topology.command("validate")
@click.argument("topology_path", metavar="TOPOLOGY")
@_handled
def topology_validate(topology_path):
    """Check a topology file against the structural invariants."""
    if not os.path.exists(topology_path):
        raise ConfigError(f"topology file not found: {topology_path}")
    model = load_model(topology_path)
    n_edges = (int(model.adjacency.sum()) - model.n_agents) // 2
    click.echo(f"valid: {model.n_agents} agents, {model.n_clusters} clusters, "
               f"{model.n_groups} groups, {n_edges} edges")


if __name__ == "__main__":
    main()
