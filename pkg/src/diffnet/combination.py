"""Combination weights and their Perron vectors.

Metropolis weights are the canonical doubly stochastic rule used by both
recursions: statically over the in-group neighbor sets, and dynamically over
the accepted neighbor sets of each iteration. The diagonal entry is the
remainder ``1 - sum`` with the sum taken sequentially in ascending neighbor
order; the simulation kernels reproduce the same order so setup code and
compiled code agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricNeighborhoods, ConfigError, NoConvergence


def metropolis_from_mask(mask: np.ndarray) -> np.ndarray:
    """Metropolis weights for the cooperation relation given as a mask.

    Parameters
    ----------
    mask : (N, N) bool array
        ``mask[l, k]`` true when l participates in k's combination; must be
        symmetric with a true diagonal (each agent cooperates with itself).

    Returns
    -------
    (N, N) float array, column stochastic (columns sum to one exactly up to
    the sequential-remainder construction) with ``A[l, k] = 1 / max(s_l, s_k)``
    off the diagonal, where ``s_k`` counts k's cooperating set including k.
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[0]
    if mask.shape != (n, n):
        raise ConfigError(f"mask must be square, got {mask.shape}")
    if not mask.diagonal().all():
        raise ConfigError("every agent must cooperate with itself")
    if not np.array_equal(mask, mask.T):
        raise AsymmetricNeighborhoods("cooperation mask must be symmetric")

    sizes = mask.sum(axis=0).astype(np.int64)
    a = np.zeros((n, n), dtype=np.float64)
    for k in range(n):
        acc = 0.0
        for l in range(n):
            if l != k and mask[l, k]:
                w = 1.0 / float(max(sizes[l], sizes[k]))
                a[l, k] = w
                acc = acc + w
        a[k, k] = 1.0 - acc
    return a


def metropolis_weights(neighbor_sets) -> np.ndarray:
    """Metropolis combination matrix from per-agent cooperating sets.

    ``neighbor_sets[k]`` lists the agents combining into k, k itself
    included. Sets must be mutual: l in set_k iff k in set_l, otherwise
    AsymmetricNeighborhoods is raised.
    """
    n = len(neighbor_sets)
    mask = np.zeros((n, n), dtype=bool)
    for k, nbrs in enumerate(neighbor_sets):
        for l in nbrs:
            l = int(l)
            if not (0 <= l < n):
                raise ConfigError(f"agent {l} out of range in set of {k}")
            mask[l, k] = True
    if not mask.diagonal().all():
        raise ConfigError("each neighbor set must contain the agent itself")
    if not np.array_equal(mask, mask.T):
        bad = np.argwhere(mask != mask.T)
        raise AsymmetricNeighborhoods(
            f"neighbor sets are not mutual, e.g. pair {tuple(bad[0])}"
        )
    return metropolis_from_mask(mask)


def perron_vector(a: np.ndarray, tol: float = 1e-12, max_iters: int = 100000) -> np.ndarray:
    """Stationary distribution of a left (column) stochastic matrix.

    Power iteration from the uniform vector: ``p <- A p`` with l1
    renormalization, stopping when ``||A p - p||_1 <= tol``.

    Raises
    ------
    NoConvergence
        If the residual still exceeds ``tol`` after ``max_iters`` updates.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ConfigError(f"matrix must be square, got {a.shape}")
    if np.any(a < 0):
        raise ConfigError("combination matrix must be entrywise nonnegative")
    col_sums = a.sum(axis=0)
    if np.max(np.abs(col_sums - 1.0)) > 1e-9:
        raise ConfigError("combination matrix must be column stochastic")

    p = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        nxt = a @ p
        s = nxt.sum()
        if s <= 0:
            raise NoConvergence("power iteration collapsed to zero")
        nxt = nxt / s
        if np.abs(a @ nxt - nxt).sum() <= tol:
            return nxt
        p = nxt
    raise NoConvergence(
        f"Perron iteration did not reach tol={tol} in {max_iters} steps"
    )


@dataclass(frozen=True)
class CombinationDiagnostics:
    """Outcome of validate_combination; never raised, only reported."""

    passed: bool
    shape_ok: bool
    nonnegative_ok: bool
    left_stochastic_ok: bool
    max_column_sum_error: float
    column_sums: tuple
    support_violations: tuple
    primitive_groups: tuple
    warnings: tuple


def validate_combination(a, model, static: bool = False) -> CombinationDiagnostics:
    """Diagnose a combination matrix against a topology.

    Checks nonnegativity, left-stochastic columns (tol 1e-12), support
    confined to the adjacency (or to the group blocks when ``static``),
    and a positive diagonal per group (primitivity precondition). Returns
    a report instead of raising so callers can surface all problems at
    once.
    """
    a = np.asarray(a, dtype=np.float64)
    n = model.n_agents
    if a.shape != (n, n):
        return CombinationDiagnostics(
            passed=False, shape_ok=False, nonnegative_ok=False,
            left_stochastic_ok=False, max_column_sum_error=float("nan"),
            column_sums=(), support_violations=(), primitive_groups=(),
            warnings=(f"expected shape {(n, n)}, got {a.shape}",),
        )

    nonneg = not np.any(a < 0)
    sums = a.sum(axis=0)
    err = float(np.max(np.abs(sums - 1.0)))
    stochastic = err <= 1e-12

    allowed = np.asarray(model.adjacency, dtype=bool)
    if static:
        same_group = model.group_of[:, None] == model.group_of[None, :]
        allowed = allowed & same_group
    bad = np.argwhere((a != 0.0) & ~allowed)
    violations = tuple((int(l), int(k)) for l, k in bad)

    diag = np.diag(a)
    primitive = tuple(
        bool(np.all(diag[model.group_members(m)] > 0.0))
        for m in range(model.n_groups)
    )

    warnings = []
    if not nonneg:
        warnings.append("negative combination weight present")
    if not stochastic:
        warnings.append(f"worst column-sum error {err:.3e} exceeds 1e-12")
    if violations:
        warnings.append(f"{len(violations)} weights outside the allowed support")
    for m, ok in enumerate(primitive):
        if not ok:
            warnings.append(f"group {m} has a zero diagonal entry (not primitive)")

    passed = nonneg and stochastic and not violations
    return CombinationDiagnostics(
        passed=passed,
        shape_ok=True,
        nonnegative_ok=nonneg,
        left_stochastic_ok=stochastic,
        max_column_sum_error=err,
        column_sums=tuple(float(s) for s in sums),
        support_violations=violations,
        primitive_groups=primitive,
        warnings=tuple(warnings),
    )


def dump_combination_csv(a, path) -> None:
    """Write the nonzero entries of a combination matrix, one per row."""
    a = np.asarray(a, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("l,k,weight\n")
        for k in range(a.shape[1]):
            for l in range(a.shape[0]):
                if a[l, k] != 0.0:
                    fh.write("%d,%d,%.17g\n" % (l, k, a[l, k]))
