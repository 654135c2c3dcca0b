import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffnet.combination import metropolis_from_mask
from diffnet.diffusion import (
    RunConfig,
    as_theta_matrix,
    atc_dynamic_step,
    atc_group_step,
    clustering_test,
    default_backend_name,
    init_state,
    load_kernel,
    run_algorithm,
    run_reference,
)
from diffnet.errors import ConfigError, DivergenceDetected
from diffnet.models import LmsAgentSpec, lms_cost_model
from diffnet.network import NetworkModel, group_mask
from helpers import make_path_model, make_small_model, uniform_costs

try:
    load_kernel("c")
    C_AVAILABLE = True
except Exception:
    C_AVAILABLE = False

requires_c = pytest.mark.skipif(not C_AVAILABLE, reason="compiled kernel not built")


def one_group_pair_model(minimizer=(0.7, -0.2)):
    return NetworkModel(
        n_agents=2,
        adjacency=np.ones((2, 2), dtype=bool),
        cluster_of=np.zeros(2, dtype=np.int64),
        group_of=np.zeros(2, dtype=np.int64),
        minimizers=np.array([list(minimizer)]),
    )


def two_singleton_clusters(gap=(1.0, 1.0)):
    return NetworkModel(
        n_agents=2,
        adjacency=np.ones((2, 2), dtype=bool),
        cluster_of=np.array([0, 1]),
        group_of=np.array([0, 1]),
        minimizers=np.array([[0.0, 0.0], list(gap)]),
    )


def lone_agent_model(minimizer=(0.3, -0.7)):
    return NetworkModel(
        n_agents=1,
        adjacency=np.ones((1, 1), dtype=bool),
        cluster_of=np.zeros(1, dtype=np.int64),
        group_of=np.zeros(1, dtype=np.int64),
        minimizers=np.array([list(minimizer)]),
    )


def capture_history(model, costs, config, a_static=None):
    """Run the engine while recording every iterate of both recursions."""
    w_rows, wp_rows, t0s = [], [], []

    def observer(t0, w1, w2):
        t0s.append(t0)
        w_rows.append(w1.copy())
        wp_rows.append(w2.copy())

    traj = run_algorithm(model, costs, config, a_static=a_static,
                         observer=observer)
    return traj, np.concatenate(w_rows), np.concatenate(wp_rows), t0s


# --- backend selection and equality ----------------------------------------

def test_backend_names():
    assert default_backend_name() in ("c", "python")
    assert load_kernel("python")[1] == "python"
    with pytest.raises(ConfigError):
        load_kernel("fortran")


@requires_c
def test_backends_bit_identical(small_model):
    costs = uniform_costs(small_model)
    results = {}
    for backend in ("c", "python"):
        cfg = RunConfig(mu=0.05, theta=2.0, n_iters=300, seed=11,
                        backend=backend, log_decisions=True)
        traj, w_hist, wp_hist, _ = capture_history(small_model, costs, cfg)
        results[backend] = (traj, w_hist, wp_hist)
    tc, wc, wpc = results["c"]
    tp, wp_, wpp = results["python"]
    assert np.array_equal(wc, wp_)
    assert np.array_equal(wpc, wpp)
    assert np.array_equal(tc.msd1_total, tp.msd1_total)
    assert np.array_equal(tc.msd2_total, tp.msd2_total)
    assert np.array_equal(tc.msd1_cluster, tp.msd1_cluster)
    assert np.array_equal(tc.n_false_alarm, tp.n_false_alarm)
    assert np.array_equal(tc.n_miss, tp.n_miss)
    assert np.array_equal(tc.decision_log.delta_sq, tp.decision_log.delta_sq)
    assert np.array_equal(tc.decision_log.h1, tp.decision_log.h1)
    assert tc.final_active_edges == tp.final_active_edges


# --- engine vs transparent step composition --------------------------------

def test_engine_matches_reference(small_model):
    costs = uniform_costs(small_model)
    a_static = metropolis_from_mask(group_mask(small_model))
    n_iters, mu, theta, seed = 120, 0.05, 2.0, 3

    cfg = RunConfig(mu=mu, theta=theta, n_iters=n_iters, seed=seed,
                    log_decisions=True)
    traj, w_hist, wp_hist, _ = capture_history(small_model, costs, cfg,
                                               a_static=a_static)
    w_ref, wp_ref, records, final = run_reference(
        small_model, costs, a_static, mu, theta, n_iters, seed)

    assert np.array_equal(w_hist, w_ref)
    assert np.array_equal(wp_hist, wp_ref)

    # decision-by-decision agreement, dataclass equality includes the
    # statistic, threshold, decision string, and pair labels
    assert list(traj.decision_log) == records

    edges_ref = sorted(
        (k, l)
        for k in range(small_model.n_agents)
        for l in range(k + 1, small_model.n_agents)
        if final.dyn[k, l]
    )
    assert traj.final_active_edges == edges_ref
    assert np.array_equal(traj.final_w, w_ref[-1])
    assert np.array_equal(traj.final_w_prime, wp_ref[-1])

    # curves recomputed from the recorded history with the same reductions
    wo = small_model.agent_minimizers()
    e1 = w_hist - wo[None, :, :]
    sq1 = (e1 * e1).sum(axis=2)
    assert np.array_equal(traj.msd1_total[1:], sq1.sum(axis=1))


def test_chunk_size_invariance(small_model):
    costs = uniform_costs(small_model)
    base = None
    for chunk in (1, 7, 64, 512):
        cfg = RunConfig(mu=0.05, theta=2.0, n_iters=150, seed=5,
                        chunk_size=chunk, log_decisions=True)
        traj, w_hist, _, _ = capture_history(small_model, costs, cfg)
        key = (w_hist, traj.msd1_total, traj.decision_log.h1,
               traj.final_active_edges)
        if base is None:
            base = key
        else:
            assert np.array_equal(base[0], key[0])
            assert np.array_equal(base[1], key[1])
            assert np.array_equal(base[2], key[2])
            assert base[3] == key[3]


def test_observer_chunk_offsets(small_model):
    costs = uniform_costs(small_model)
    cfg = RunConfig(mu=0.05, theta=2.0, n_iters=150, seed=5, chunk_size=64)
    _, w_hist, _, t0s = capture_history(small_model, costs, cfg)
    assert t0s == [0, 64, 128]
    assert w_hist.shape == (150, small_model.n_agents, small_model.dim)


def test_determinism_and_trial_separation(small_model):
    costs = uniform_costs(small_model)
    cfg = RunConfig(mu=0.05, theta=2.0, n_iters=80, seed=9, trial=1)
    t1 = run_algorithm(small_model, costs, cfg)
    t2 = run_algorithm(small_model, costs, cfg)
    assert np.array_equal(t1.final_w, t2.final_w)
    assert np.array_equal(t1.msd1_total, t2.msd1_total)

    other = RunConfig(mu=0.05, theta=2.0, n_iters=80, seed=9, trial=2)
    t3 = run_algorithm(small_model, costs, other)
    assert not np.array_equal(t1.final_w, t3.final_w)


# --- trivial dynamics ------------------------------------------------------

def test_initial_row_is_error_at_zero(small_model):
    costs = uniform_costs(small_model)
    cfg = RunConfig(mu=0.05, theta=2.0, n_iters=0, seed=0)
    traj = run_algorithm(small_model, costs, cfg)
    wo = small_model.agent_minimizers()
    assert traj.msd1_total.shape == (1,)
    assert traj.msd1_total[0] == pytest.approx((wo * wo).sum())
    assert np.array_equal(traj.final_w, np.zeros_like(wo))


def test_noise_free_zero_minimizer_stays_put():
    model = one_group_pair_model(minimizer=(0.0, 0.0))
    costs = uniform_costs(model, 1.0, 0.0)
    cfg = RunConfig(mu=0.1, theta=1.0, n_iters=10, seed=2)
    traj = run_algorithm(model, costs, cfg)
    assert np.all(traj.msd1_total == 0.0)
    assert np.all(traj.msd2_total == 0.0)
    assert np.array_equal(traj.final_w, np.zeros((2, 2)))


def test_noise_free_fixed_point_at_minimizer():
    # both iterate families placed exactly at the minimizer stay there bit
    # for bit: the gradient cancels and combining equal vectors is exact
    model = one_group_pair_model()
    costs = uniform_costs(model, 1.0, 0.0)
    wo = model.agent_minimizers()
    state = init_state(model, seed=4)
    state.w[:] = wo
    state.w_prime[:] = wo
    a_static = metropolis_from_mask(group_mask(model))

    state = atc_group_step(state, model, costs, a_static, 0.1)
    assert np.array_equal(state.w, wo)
    state = atc_dynamic_step(state, model, costs, 0.1)
    assert np.array_equal(state.w_prime, wo)

    records, mask = clustering_test(state.w, model, 0.5)
    assert all(r.decision == "H0" for r in records)
    assert np.all(mask)


def test_lone_agent_runs_plain_sgd():
    # one agent, n_iters below one chunk: the engine must reproduce a plain
    # stochastic gradient recursion driven by the same stream, exactly
    model = lone_agent_model()
    costs = [lms_cost_model(LmsAgentSpec(1.0, 0.1, 2))]
    mu, n_iters, seed = 0.05, 200, 13
    cfg = RunConfig(mu=mu, theta=1.0, n_iters=n_iters, seed=seed)
    traj, w_hist, wp_hist, _ = capture_history(model, costs, cfg)

    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0, 0])))
    block = gen.standard_normal((n_iters, 6))
    wo = model.minimizers[0]
    su, sv = 1.0, np.sqrt(0.1)

    def sgd_update(wvec, u_std, v_std):
        u = su * u_std
        acc = 0.0
        for j in range(2):
            acc = acc + u[j] * wo[j]
        d = acc + sv * v_std
        acc = 0.0
        for j in range(2):
            acc = acc + u[j] * wvec[j]
        r = acc - d
        return wvec - mu * ((2.0 * r) * u)

    w = np.zeros(2)
    wp = np.zeros(2)
    for t in range(n_iters):
        w = sgd_update(w, block[t, 0:2], block[t, 2])
        wp = sgd_update(wp, block[t, 3:5], block[t, 5])
        assert np.array_equal(w_hist[t, 0], w)
        assert np.array_equal(wp_hist[t, 0], wp)


# --- clustering test semantics ---------------------------------------------

def test_clustering_test_worked_example():
    model = two_singleton_clusters()
    w = np.array([[0.0, 0.0], [3.0, 4.0]])

    records, mask = clustering_test(w, model, 1.0)
    assert len(records) == 1
    assert records[0].delta_sq == 25.0
    assert records[0].decision == "H1"
    assert not mask[0, 1] and not mask[1, 0]

    # the statistic exactly on the threshold still rejects: H0 needs a
    # strictly smaller distance
    records, mask = clustering_test(w, model, 25.0)
    assert records[0].decision == "H1"
    assert not mask[0, 1]

    records, mask = clustering_test(w, model, 25.5)
    assert records[0].decision == "H0"
    assert mask[0, 1] and mask[1, 0]


def test_group_members_never_dropped():
    model = one_group_pair_model()
    w = np.array([[10.0, 0.0], [0.0, 0.0]])  # huge distance, clear H1
    records, mask = clustering_test(w, model, 0.1)
    assert records[0].decision == "H1"
    assert np.all(mask)  # in-group relation survives regardless


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_accepted_sets_invariants(seed):
    model = make_small_model()
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=2.0, size=(model.n_agents, model.dim))
    _, mask = clustering_test(w, model, 2.0)
    gmask = group_mask(model)
    assert np.array_equal(mask, mask.T)
    assert np.all(mask.diagonal())
    assert np.all(mask[gmask])  # contains the in-group relation
    assert not np.any(mask & ~model.adjacency)  # never exceeds adjacency


def test_theta_matrix_validation(small_model):
    n = small_model.n_agents
    with pytest.raises(ConfigError):
        as_theta_matrix(0.0, small_model)
    with pytest.raises(ConfigError):
        as_theta_matrix(-1.0, small_model)
    with pytest.raises(ConfigError):
        as_theta_matrix(np.ones((n, n + 1)), small_model)
    bad = np.ones((n, n))
    bad[0, 1] = 2.0
    with pytest.raises(ConfigError):
        as_theta_matrix(bad, small_model)
    zero_entry = np.ones((n, n))
    zero_entry[2, 3] = zero_entry[3, 2] = 0.0
    with pytest.raises(ConfigError):
        as_theta_matrix(zero_entry, small_model)
    mat = as_theta_matrix(0.7, small_model)
    assert mat.shape == (n, n) and np.all(mat == 0.7)


# --- engine validation and failure reporting -------------------------------

def test_run_config_validation(small_model):
    costs = uniform_costs(small_model)
    with pytest.raises(ConfigError):
        run_algorithm(small_model, costs,
                      RunConfig(mu=0.05, theta=2.0, n_iters=-1, seed=0))
    with pytest.raises(ConfigError):
        run_algorithm(small_model, costs[:-1],
                      RunConfig(mu=0.05, theta=2.0, n_iters=10, seed=0))
    with pytest.raises(ConfigError):
        run_algorithm(small_model, costs,
                      RunConfig(mu=0.05, theta=2.0, n_iters=10, seed=0,
                                backend="no-such-kernel"))


def test_static_matrix_support_checked(small_model):
    costs = uniform_costs(small_model)
    bad = metropolis_from_mask(group_mask(small_model))
    k, l = 0, small_model.n_agents - 1
    assert small_model.group_of[k] != small_model.group_of[l]
    bad[k, l] = 0.1
    with pytest.raises(ConfigError):
        run_algorithm(small_model, costs,
                      RunConfig(mu=0.05, theta=2.0, n_iters=10, seed=0),
                      a_static=bad)


def test_divergence_reported_with_location():
    model = make_path_model()
    costs = uniform_costs(model)
    cfg = RunConfig(mu=50.0, theta=1.0, n_iters=5000, seed=1, trial=3)
    with pytest.raises(DivergenceDetected) as exc_info:
        run_algorithm(model, costs, cfg)
    err = exc_info.value
    assert err.trial == 3
    assert 0 <= err.iteration < 5000


# --- decision log ----------------------------------------------------------

def test_decision_log_contents(small_model):
    costs = uniform_costs(small_model)
    n_iters, theta = 60, 2.0
    cfg = RunConfig(mu=0.05, theta=theta, n_iters=n_iters, seed=21,
                    log_decisions=True)
    traj = run_algorithm(small_model, costs, cfg)
    log = traj.decision_log
    n_pairs = np.count_nonzero(
        np.triu(small_model.adjacency, k=1))
    assert len(log) == n_iters * n_pairs
    assert np.array_equal(log.h1, (log.delta_sq >= log.theta))
    assert np.all(log.theta == theta)
    assert np.array_equal(
        np.unique(log.iteration), np.arange(n_iters))

    # per-iteration counts in the trajectory agree with a recount
    same = log.same_cluster.astype(bool)
    h1 = log.h1.astype(bool)
    for it in (0, n_iters // 2, n_iters - 1):
        sel = log.iteration == it
        assert traj.n_false_alarm[it + 1] == np.count_nonzero(h1[sel] & same[sel])
        assert traj.n_miss[it + 1] == np.count_nonzero(~h1[sel] & ~same[sel])

    rec = log[0]
    assert rec.iteration == 0
    assert rec.decision in ("H0", "H1")
    assert rec.agent_k < rec.agent_l


def test_pair_observer_matches_log(small_model):
    costs = uniform_costs(small_model)
    cfg = RunConfig(mu=0.05, theta=2.0, n_iters=90, seed=8,
                    chunk_size=32, log_decisions=True)
    seen = []

    def pair_observer(t0, dsq, h1):
        seen.append((t0, dsq.copy(), h1.copy()))

    traj = run_algorithm(small_model, costs, cfg, pair_observer=pair_observer)
    dsq_all = np.concatenate([s[1] for s in seen])
    h1_all = np.concatenate([s[2] for s in seen])
    n_pairs = dsq_all.shape[1]
    assert np.array_equal(dsq_all.reshape(-1), traj.decision_log.delta_sq)
    assert np.array_equal(h1_all.reshape(-1), traj.decision_log.h1)
    assert [s[0] for s in seen] == [0, 32, 64]
    assert dsq_all.shape == (90, n_pairs)


# --- scaling with the step size --------------------------------------------

def test_steady_msd_scales_linearly_with_mu():
    model = make_path_model()
    costs = uniform_costs(model)

    def steady(mu, n_iters):
        vals = []
        for trial in range(5):
            cfg = RunConfig(mu=mu, theta=1.0, n_iters=n_iters, seed=31,
                            trial=trial)
            traj = run_algorithm(model, costs, cfg)
            # average the last decile, then across trials
            start = n_iters - n_iters // 10
            vals.append(traj.msd1_total[start + 1:].mean())
        return float(np.mean(vals))

    coarse = steady(0.02, 12000)
    fine = steady(0.01, 24000)
    ratio = coarse / fine
    assert 1.5 < ratio < 2.5
