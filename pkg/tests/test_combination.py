import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffnet.combination import (
    dump_combination_csv,
    metropolis_from_mask,
    metropolis_weights,
    perron_vector,
    validate_combination,
)
from diffnet.errors import AsymmetricNeighborhoods, NoConvergence
from diffnet.network import group_mask


# --- Metropolis rule -------------------------------------------------------

def test_metropolis_singleton():
    a = metropolis_weights([(0,)])
    assert a.tolist() == [[1.0]]


def test_metropolis_two_mutual_neighbors():
    a = metropolis_weights([(0, 1), (0, 1)])
    assert np.array_equal(a, np.full((2, 2), 0.5))


def test_metropolis_path_of_three():
    a = metropolis_weights([(0, 1), (0, 1, 2), (1, 2)])
    third = 1.0 / 3.0
    expect = np.array([
        [1.0 - third, third, 0.0],
        [third, third, third],
        [0.0, third, 1.0 - third],
    ])
    assert np.allclose(a, expect, atol=1e-15)
    assert np.allclose(a.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-12)


def test_metropolis_asymmetric_sets_rejected():
    with pytest.raises(AsymmetricNeighborhoods):
        metropolis_weights([(0, 1), (1,)])


def test_metropolis_symmetric_doubly_stochastic(small_model):
    a = metropolis_from_mask(group_mask(small_model))
    assert np.array_equal(a, a.T)
    assert np.max(np.abs(a.sum(axis=0) - 1.0)) <= 1e-12
    assert np.max(np.abs(a.sum(axis=1) - 1.0)) <= 1e-12
    assert np.all(np.diag(a) > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10**6))
def test_metropolis_random_masks(n, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < 0.5
    mask |= mask.T
    np.fill_diagonal(mask, True)
    a = metropolis_from_mask(mask)
    assert np.all(a >= 0.0)
    assert np.all(a <= 1.0)
    assert np.max(np.abs(a.sum(axis=0) - 1.0)) <= 1e-12
    assert np.array_equal(a == 0.0, ~mask)


# --- Perron vectors --------------------------------------------------------

def test_perron_trivial():
    assert perron_vector(np.array([[1.0]])).tolist() == [1.0]


def test_perron_doubly_stochastic_uniform(small_model):
    a = metropolis_from_mask(group_mask(small_model))
    members = small_model.group_members(0)
    block = a[np.ix_(members, members)]
    p = perron_vector(block)
    # doubly stochastic fixes the uniform vector exactly
    assert np.array_equal(p, np.full(len(members), 1.0 / len(members)))


def test_perron_two_state_chain():
    a = np.array([[0.8, 0.4], [0.2, 0.6]])
    p = perron_vector(a)
    assert np.allclose(p, [2.0 / 3.0, 1.0 / 3.0], atol=1e-10)
    assert abs(p.sum() - 1.0) <= 1e-12


def test_perron_matches_dense_eigensolve():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        a = rng.random((n, n)) + 0.05
        a /= a.sum(axis=0, keepdims=True)
        p = perron_vector(a)
        vals, vecs = np.linalg.eig(a)
        lead = np.argmin(np.abs(vals - 1.0))
        ref = np.real(vecs[:, lead])
        ref /= ref.sum()
        assert np.max(np.abs(p - ref)) <= 1e-10
        assert np.all(p > 0)


def test_perron_no_convergence():
    a = np.array([[0.8, 0.4], [0.2, 0.6]])
    with pytest.raises(NoConvergence):
        perron_vector(a, tol=1e-15, max_iters=1)


# --- diagnostics -----------------------------------------------------------

def test_validate_metropolis_passes(small_model):
    a = metropolis_from_mask(group_mask(small_model))
    report = validate_combination(a, small_model, static=True)
    assert report.passed
    assert report.warnings == ()
    assert all(report.primitive_groups)


def test_validate_flags_zero_diagonal(small_model):
    a = metropolis_from_mask(group_mask(small_model))
    # move agent 0's self weight onto a group neighbor: still stochastic,
    # but the primitivity precondition breaks
    nbr = next(
        l for l in np.flatnonzero(group_mask(small_model)[:, 0]) if l != 0
    )
    a = a.copy()
    a[nbr, 0] += a[0, 0]
    a[0, 0] = 0.0
    report = validate_combination(a, small_model)
    assert report.passed  # stochasticity intact, so only a warning
    assert not report.primitive_groups[small_model.group_of[0]]
    assert any("not primitive" in w for w in report.warnings)


def test_validate_flags_bad_column_sum(small_model):
    a = metropolis_from_mask(group_mask(small_model))
    a = a.copy()
    a[0, 0] -= 0.1
    report = validate_combination(a, small_model)
    assert not report.passed
    assert not report.left_stochastic_ok
    assert report.max_column_sum_error == pytest.approx(0.1)


def test_validate_flags_support_violation(small_model):
    a = metropolis_from_mask(group_mask(small_model))
    a = a.copy()
    out = np.argwhere(~small_model.adjacency)
    a[out[0][0], out[0][1]] = 0.5
    report = validate_combination(a, small_model)
    assert not report.passed
    assert (int(out[0][0]), int(out[0][1])) in report.support_violations


def test_validate_wrong_shape(small_model):
    report = validate_combination(np.eye(2), small_model)
    assert not report.passed
    assert not report.shape_ok


def test_dump_csv(tmp_path, small_model):
    a = metropolis_from_mask(group_mask(small_model))
    path = tmp_path / "a.csv"
    dump_combination_csv(a, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "l,k,weight"
    assert len(lines) == 1 + int((a != 0).sum())
    l, k, w = lines[1].split(",")
    assert a[int(l), int(k)] == float(w)
