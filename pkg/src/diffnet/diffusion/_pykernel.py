"""Pure-Python simulation kernel.

Reference implementation of the per-chunk inner loop. The compiled kernel
performs the same arithmetic in the same order (fixed left-to-right
accumulation, identical expression grouping, dense combination sums), so
both backends produce bit-identical trajectories from the same noise.
Vectorization here runs across agents; every accumulation loops over the
reduced axis in ascending order, which keeps each scalar's operation
sequence equal to the compiled version's plain loops.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def run_chunk(w, wp, dyn, wo, mu, su, sv, a_static, group_mask,
              theta_pairs, pair_i, pair_j, u1, v1, u2, v2,
              out_w1, out_w2, out_dsq, out_h1):
    """Advance both recursions over one chunk of iterations.

    ``w``, ``wp`` (N, M) and ``dyn`` (N, N) are updated in place and carry
    state across chunks; per-iteration results land in the ``out_*`` arrays
    (first-recursion iterates, second-recursion iterates, pair statistics,
    and pair decisions).
    """
    t_len = u1.shape[0]
    n, m = w.shape
    n_pairs = pair_i.shape[0]

    for t in range(t_len):
        # --- recursion 1: adapt (fresh sample), then combine over the
        # static in-group weights.
        u = su[:, None] * u1[t]
        acc = np.zeros(n)
        for j in range(m):
            acc = acc + u[:, j] * wo[:, j]
        d = acc + sv * v1[t]
        acc = np.zeros(n)
        for j in range(m):
            acc = acc + u[:, j] * w[:, j]
        r = acc - d
        tt = 2.0 * r
        psi = w - mu[:, None] * (tt[:, None] * u)

        w_new = np.zeros((n, m))
        for l in range(n):
            w_new = w_new + a_static[l][:, None] * psi[l][None, :]
        w[:] = w_new
        out_w1[t] = w

        # --- recursion 2: adapt with an independent sample, combine over
        # Metropolis weights recomputed from the current accepted sets.
        u = su[:, None] * u2[t]
        acc = np.zeros(n)
        for j in range(m):
            acc = acc + u[:, j] * wo[:, j]
        d = acc + sv * v2[t]
        acc = np.zeros(n)
        for j in range(m):
            acc = acc + u[:, j] * wp[:, j]
        r = acc - d
        tt = 2.0 * r
        psi = wp - mu[:, None] * (tt[:, None] * u)

        sizes = dyn.sum(axis=0, dtype=np.int64)
        smax = np.maximum(sizes[:, None], sizes[None, :]).astype(np.float64)
        b = np.where(dyn != 0, 1.0 / smax, 0.0)
        acc = np.zeros(n)
        for l in range(n):
            row = b[l].copy()
            row[l] = 0.0
            acc = acc + row
        idx = np.arange(n)
        b[idx, idx] = 1.0 - acc

        wp_new = np.zeros((n, m))
        for l in range(n):
            wp_new = wp_new + b[l][:, None] * psi[l][None, :]
        wp[:] = wp_new
        out_w2[t] = wp

        # --- clustering test on the recursion-1 iterates; the resulting
        # sets feed the next iteration's recursion 2.
        dyn[:] = group_mask
        if n_pairs:
            wi = w[pair_i]
            wj = w[pair_j]
            acc = np.zeros(n_pairs)
            for j in range(m):
                dj = wi[:, j] - wj[:, j]
                acc = acc + dj * dj
            out_dsq[t] = acc
            h1 = acc >= theta_pairs
            out_h1[t] = h1
            ai = pair_i[~h1]
            aj = pair_j[~h1]
            dyn[ai, aj] = 1
            dyn[aj, ai] = 1
