"""Agent cost models and per-group aggregate quantities.

The quadratic (LMS) model is the concrete workhorse: agent k observes
``d = u . w_opt + v`` with Gaussian regressor u and noise v, and its
stochastic gradient at w is ``2 u (u . w - d)``. Every model is driven by
``dim + 1`` standard normal draws per evaluation (the regressor block and
the scalar noise), which is what lets the simulation engine pre-generate
noise once and feed either backend identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combination import perron_vector
from .errors import ConfigError, NonPositiveVariance, NotPositiveDefinite

__all__ = [
    "LmsAgentSpec",
    "AgentCostModel",
    "GroupModel",
    "lms_cost_model",
    "build_group_model",
]


def seq_dot(a, b) -> float:
    """Left-to-right inner product; fixed association shared with the kernels."""
    acc = 0.0
    for j in range(len(a)):
        acc = acc + a[j] * b[j]
    return acc


@dataclass(frozen=True)
class LmsAgentSpec:
    """Scalar parameters of one LMS agent.

    ``sigma_u_sq`` is the per-component regressor variance (regressor
    covariance ``sigma_u_sq * I``), ``sigma_v_sq`` the observation noise
    variance, ``dim`` the parameter dimension.
    """

    sigma_u_sq: float
    sigma_v_sq: float
    dim: int


@dataclass(frozen=True)
class AgentCostModel:
    """Cost model of a single agent.

    Attributes
    ----------
    dim : int
    hessian : (M, M) ndarray
        Hessian of the expected cost at the minimizer.
    noise_cov : (M, M) ndarray
        Covariance of the gradient noise at the minimizer.
    sigma_u, sigma_v : float
        Standard deviations of the LMS regressor / observation noise; the
        compiled kernel consumes these directly.
    """

    dim: int
    hessian: np.ndarray
    noise_cov: np.ndarray
    sigma_u: float
    sigma_v: float

    def gradient_from_noise(self, w, wo, u_std, v_std):
        """Stochastic gradient at w given standard normal draws.

        ``u_std`` is an (M,) standard normal vector, ``v_std`` a scalar
        standard normal. The arithmetic (scaling, left-to-right inner
        products, grouping of the factor 2) mirrors the compiled kernel.
        """
        u = self.sigma_u * np.asarray(u_std, dtype=np.float64)
        d = seq_dot(u, wo) + self.sigma_v * v_std
        r = seq_dot(u, w) - d
        return (2.0 * r) * u

    def sample_gradient(self, w, wo, rng):
        """Stochastic gradient at w; draws ``dim`` regressor values then one
        noise value from ``rng``."""
        u_std = rng.standard_normal(self.dim)
        v_std = rng.standard_normal()
        return self.gradient_from_noise(w, wo, u_std, v_std)


def lms_cost_model(spec: LmsAgentSpec) -> AgentCostModel:
    """Build the quadratic model for one agent.

    ``hessian = 2 sigma_u_sq I`` and ``noise_cov = 4 sigma_u_sq sigma_v_sq I``
    follow from the factor-2 gradient convention.

    Raises
    ------
    NonPositiveVariance
        If the regressor variance is not strictly positive or the noise
        variance is negative. A zero noise variance is legal: it gives the
        noise-free model whose sampled gradient vanishes at the minimizer.
    """
    su2 = float(spec.sigma_u_sq)
    sv2 = float(spec.sigma_v_sq)
    if su2 <= 0.0:
        raise NonPositiveVariance(f"sigma_u_sq must be positive, got {su2}")
    if sv2 < 0.0:
        raise NonPositiveVariance(f"sigma_v_sq must be nonnegative, got {sv2}")
    m = int(spec.dim)
    if m <= 0:
        raise ConfigError(f"dim must be positive, got {m}")
    return AgentCostModel(
        dim=m,
        hessian=2.0 * su2 * np.eye(m),
        noise_cov=4.0 * su2 * sv2 * np.eye(m),
        sigma_u=float(np.sqrt(su2)),
        sigma_v=float(np.sqrt(sv2)),
    )


@dataclass(frozen=True)
class GroupModel:
    """Aggregate quantities of one group under the static combination matrix.

    ``perron`` is the Perron vector of the group's combination block (uniform
    for Metropolis weights), ``h_weighted = sum_k p_k mu_k H_k`` and
    ``noise_weighted = sum_k p_k^2 mu_k^2 R_k`` are the weighted aggregates
    the steady-state formulas are built from.
    """

    index: int
    cluster: int
    members: tuple
    minimizer: np.ndarray
    perron: np.ndarray
    mu: np.ndarray
    h_weighted: np.ndarray
    noise_weighted: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


def _per_agent_mu(mu, n: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim == 0:
        mu = np.full(n, float(mu))
    if mu.shape != (n,):
        raise ConfigError(f"mu must be scalar or length {n}, got shape {mu.shape}")
    if np.any(mu <= 0):
        raise ConfigError("step sizes must be strictly positive")
    return mu


def build_group_model(model, costs, a_static, mu) -> list:
    """Per-group aggregates from a topology, cost models, and combination.

    Parameters
    ----------
    model : NetworkModel
    costs : sequence of AgentCostModel, one per agent.
    a_static : (N, N) ndarray
        Static combination matrix; support must stay within groups.
    mu : float or (N,) array
        Step size(s).

    Returns
    -------
    list of GroupModel in group order.
    """
    n = model.n_agents
    if len(costs) != n:
        raise ConfigError(f"expected {n} cost models, got {len(costs)}")
    dims = {c.dim for c in costs}
    if dims != {model.dim}:
        raise ConfigError(f"cost dims {sorted(dims)} do not match topology dim {model.dim}")
    a_static = np.asarray(a_static, dtype=np.float64)
    same_group = model.group_of[:, None] == model.group_of[None, :]
    if np.any((a_static != 0) & ~same_group):
        raise ConfigError("static combination matrix has weight across groups")
    mu = _per_agent_mu(mu, n)

    groups = []
    for m in range(model.n_groups):
        members = model.group_members(m)
        block = a_static[np.ix_(members, members)]
        p = perron_vector(block)
        dim = model.dim
        h_w = np.zeros((dim, dim))
        r_w = np.zeros((dim, dim))
        for p_k, k in zip(p, members):
            h_w += p_k * mu[k] * costs[k].hessian
            r_w += p_k**2 * mu[k] ** 2 * costs[k].noise_cov
        # The aggregate Hessian must be positive definite: the group needs
        # at least one strongly convex member for the centroid recursion
        # to contract.
        if float(np.linalg.eigvalsh((h_w + h_w.T) / 2.0)[0]) <= 0.0:
            raise NotPositiveDefinite(
                f"group {m}: aggregate Hessian is not positive definite"
            )
        cluster = int(model.cluster_of[members[0]])
        groups.append(
            GroupModel(
                index=m,
                cluster=cluster,
                members=tuple(int(k) for k in members),
                minimizer=model.minimizers[cluster].copy(),
                perron=p,
                mu=mu[members].copy(),
                h_weighted=h_w,
                noise_weighted=r_w,
            )
        )
    return groups
