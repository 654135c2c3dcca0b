"""Closed-form steady-state predictions and detection error bounds.

Everything here is deterministic theory: Lyapunov-equation covariances of
the group centroid errors, the replicated network covariance, pairwise
difference covariances, normalized MSD values, moments and densities of the
squared-difference statistic, and Chernoff-type bounds on both clustering
error probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._bessel import bessel_i_scaled
from .errors import (
    ConfigError,
    DegenerateDelta,
    DomainError,
    NoConvergence,
    NotPositiveDefinite,
    SingularAggregateHessian,
    StepSizeTooLarge,
    ThresholdOutOfRange,
    UnstableD,
)
from .models import build_group_model, _per_agent_mu

__all__ = [
    "solve_discrete_lyapunov",
    "solve_continuous_lyapunov",
    "normalized_msd",
    "build_pi",
    "delta_between_groups",
    "delta_stat_moments",
    "type1_bound",
    "type2_bound",
    "noncentral_chi2_pdf",
    "delta_sq_pdf_special_case",
    "LowDimModel",
    "TheoryReport",
    "build_low_dim_model",
    "predict",
    "error_bound_table",
]


# --- Lyapunov solvers ------------------------------------------------------

def _spectral_radius_estimate(a: np.ndarray) -> float:
    """Spectral radius, max |eigenvalue|.

    Computed from the full eigenvalue set. Power iteration is not an option
    here: for non-normal matrices the Rayleigh-style norm quotient can
    overshoot the radius, and a dominant complex pair keeps it from settling
    at all. The matrices passed in are small group-level operators, so the
    dense solve is cheap.
    """
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def solve_discrete_lyapunov(d: np.ndarray, q: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Solve ``S = D S D^T + Q`` for a stable D and symmetric PSD Q.

    Fixed-point iteration from ``S_0 = Q`` with squaring acceleration
    (``S <- S + A S A^T``, ``A <- A^2``), run until the successive Frobenius
    change drops below 1e-13 relative. The result is checked against the
    residual contract ``||D S D^T + Q - S||_F <= tol * ||Q||_F``.

    Raises
    ------
    UnstableD
        If the spectral radius of D is not below one.
    NoConvergence
        If the residual contract cannot be met.
    """
    d = np.asarray(d, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n) or q.shape != (n, n):
        raise ConfigError(f"D and Q must be square of equal size, got {d.shape}, {q.shape}")
    if np.max(np.abs(q - q.T)) > 1e-12 * max(1.0, np.abs(q).max()):
        raise ConfigError("Q must be symmetric")

    rho = _spectral_radius_estimate(d)
    if rho >= 1.0:
        raise UnstableD(f"spectral radius estimate {rho:.6g} >= 1")

    s = q.copy()
    a = d.copy()
    for _ in range(200):
        s_next = s + a @ s @ a.T
        a = a @ a
        if not np.all(np.isfinite(s_next)):
            raise UnstableD("fixed-point iteration diverged")
        change = np.linalg.norm(s_next - s)
        s = s_next
        if change <= 1e-13 * max(1.0, np.linalg.norm(s)):
            break
    s = 0.5 * (s + s.T)

    residual = np.linalg.norm(d @ s @ d.T + q - s)
    bound = tol * np.linalg.norm(q)
    if residual > bound and np.linalg.norm(q) > 0:
        raise NoConvergence(
            f"discrete Lyapunov residual {residual:.3e} exceeds {bound:.3e}"
        )
    return s


def solve_continuous_lyapunov(hbar: np.ndarray, rbar: np.ndarray) -> np.ndarray:
    """Solve ``H S + S H = R`` for symmetric positive definite H.

    Works in H's eigenbasis where the equation is elementwise:
    ``S'_ij = R'_ij / (lambda_i + lambda_j)``.

    Raises
    ------
    NotPositiveDefinite
        If H has a non-positive eigenvalue.
    NoConvergence
        If the reconstructed residual exceeds ``1e-10 * ||R||_F``.
    """
    hbar = np.asarray(hbar, dtype=np.float64)
    rbar = np.asarray(rbar, dtype=np.float64)
    n = hbar.shape[0]
    if hbar.shape != (n, n) or rbar.shape != (n, n):
        raise ConfigError("H and R must be square of equal size")
    if np.max(np.abs(hbar - hbar.T)) > 1e-10 * max(1.0, np.abs(hbar).max()):
        raise ConfigError("H must be symmetric")

    lam, u = np.linalg.eigh(hbar)
    if lam.min() <= 0.0:
        raise NotPositiveDefinite(f"H has eigenvalue {lam.min():.6g} <= 0")
    r_prime = u.T @ rbar @ u
    s_prime = r_prime / (lam[:, None] + lam[None, :])
    s = u @ s_prime @ u.T
    s = 0.5 * (s + s.T)

    residual = np.linalg.norm(hbar @ s + s @ hbar - rbar)
    if residual > 1e-10 * max(np.linalg.norm(rbar), 1e-300):
        raise NoConvergence(
            f"continuous Lyapunov residual {residual:.3e} out of tolerance"
        )
    return s


# --- steady-state MSD ------------------------------------------------------

def _weighted_group_sums(group, costs, mu, perron):
    h_sum = np.zeros((costs[group.members[0]].dim,) * 2)
    r_sum = np.zeros_like(h_sum)
    for k in group.members:
        p_k = perron[k]
        h_sum += p_k * mu[k] * costs[k].hessian
        r_sum += p_k**2 * mu[k] ** 2 * costs[k].noise_cov
    return h_sum, r_sum


def normalized_msd(groups, costs, mu, perron):
    """Steady-state MSD per group and total, normalized by the step size.

    For group m the value is
    ``N_m / (2 mu_max) * Tr[(sum_k p_k mu_k H_k)^{-1} (sum_k p_k^2 mu_k^2 R_k)]``
    with sums over the group members; the predicted steady-state MSD is
    ``mu_max`` times the returned value.

    Parameters
    ----------
    groups : list of GroupModel
    costs : sequence of AgentCostModel
    mu : float or (N,) array
    perron : (N,) array
        Per-agent Perron weights of the static combination matrix.

    Returns
    -------
    (per_group, total) : ((G,) ndarray, float)

    Raises
    ------
    SingularAggregateHessian
        If a group's weighted Hessian sum is singular.
    """
    n = len(costs)
    mu = _per_agent_mu(mu, n)
    perron = np.asarray(perron, dtype=np.float64)
    if perron.shape != (n,):
        raise ConfigError(f"perron must have shape ({n},), got {perron.shape}")
    mu_max = float(mu.max())

    per_group = np.zeros(len(groups))
    for i, g in enumerate(groups):
        h_sum, r_sum = _weighted_group_sums(g, costs, mu, perron)
        try:
            if np.linalg.cond(h_sum) > 1e12:
                raise SingularAggregateHessian(
                    f"group {g.index}: weighted Hessian is numerically singular"
                )
            x = np.linalg.solve(h_sum, r_sum)
        except np.linalg.LinAlgError as exc:
            raise SingularAggregateHessian(f"group {g.index}: {exc}") from exc
        per_group[i] = g.size / (2.0 * mu_max) * np.trace(x)
    return per_group, float(per_group.sum())


def build_pi(phi: np.ndarray, group_sizes) -> np.ndarray:
    """Expand the group covariance to the full network covariance.

    Block (k, l) of the result equals block (m, n) of ``phi`` whenever agent
    k is in group m and agent l in group n; all replicas of a block are the
    same values bit for bit.
    """
    sizes = [int(s) for s in group_sizes]
    g = len(sizes)
    phi = np.asarray(phi, dtype=np.float64)
    if g == 0 or phi.shape[0] % g != 0 or phi.shape[0] != phi.shape[1]:
        raise ConfigError(f"phi shape {phi.shape} incompatible with {g} groups")
    m_dim = phi.shape[0] // g
    n = sum(sizes)
    pi = np.zeros((n * m_dim, n * m_dim))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for gm in range(g):
        for gn in range(g):
            block = phi[gm * m_dim:(gm + 1) * m_dim, gn * m_dim:(gn + 1) * m_dim]
            for k in range(offsets[gm], offsets[gm + 1]):
                for l in range(offsets[gn], offsets[gn + 1]):
                    pi[k * m_dim:(k + 1) * m_dim, l * m_dim:(l + 1) * m_dim] = block
    return pi


def delta_between_groups(phi: np.ndarray, m: int, n: int, dim: int) -> np.ndarray:
    """Covariance of the difference of two group centroids.

    ``Delta = Phi_mm + Phi_nn - Phi_mn - Phi_nm`` extracted from the stacked
    ``phi`` with M x M blocks of size ``dim``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    g = phi.shape[0] // dim
    if not (0 <= m < g and 0 <= n < g):
        raise ConfigError(f"group indices ({m}, {n}) out of range for {g} groups")

    def block(i, j):
        return phi[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim]

    return block(m, m) + block(n, n) - block(m, n) - block(n, m)


def delta_stat_moments(d_star, delta, mu_max: float):
    """Mean and variance of the squared difference statistic.

    ``mean = ||d*||^2 + mu Tr(Delta)`` and
    ``var = 4 mu d*' Delta d* + 2 mu^2 Tr(Delta^2)`` for the statistic
    ``||d* + g||^2`` with ``g ~ N(0, mu Delta)``.
    """
    if mu_max <= 0.0:
        raise DomainError(f"mu_max must be positive, got {mu_max}")
    d_star = np.asarray(d_star, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    mean = float(d_star @ d_star + mu_max * np.trace(delta))
    var = float(
        4.0 * mu_max * (d_star @ delta @ d_star)
        + 2.0 * mu_max**2 * np.trace(delta @ delta)
    )
    return mean, var


# --- error probability bounds ---------------------------------------------

def type1_bound(theta: float, delta, mu_max: float, m_dim: int) -> float:
    """Chernoff bound on the false-separation probability for a same-minimizer pair.

    With ``theta' = theta / ||Delta||`` (spectral norm) the bound is
    ``(theta' e / (mu M))^{M/2} exp(-theta' / 2 mu)``, valid for
    ``mu < theta'/M``.

    Raises
    ------
    StepSizeTooLarge
        If ``mu_max >= theta'/M`` (bound not applicable).
    """
    if theta <= 0.0:
        raise ThresholdOutOfRange(f"theta must be positive, got {theta}")
    if mu_max <= 0.0:
        raise DomainError(f"mu_max must be positive, got {mu_max}")
    delta = np.asarray(delta, dtype=np.float64)
    spec_norm = float(np.linalg.eigvalsh(0.5 * (delta + delta.T)).max())
    if spec_norm <= 0.0:
        # Degenerate: the statistic is identically zero, never above theta.
        return 0.0
    theta_p = theta / spec_norm
    if mu_max >= theta_p / m_dim:
        raise StepSizeTooLarge(
            f"bound needs mu < {theta_p / m_dim:.6g}, got mu={mu_max}"
        )
    return (theta_p * math.e / (mu_max * m_dim)) ** (m_dim / 2.0) * math.exp(
        -theta_p / (2.0 * mu_max)
    )


def type2_bound(theta: float, d_star, delta, mu_max: float) -> float:
    """Chernoff bound on the missed-separation probability for a split pair.

    ``0.5 exp(-(||d*||^2 - theta)^2 / (8 mu ||d*||^2_Lambda))`` where the
    weighted norm comes from the eigen-decomposition of Delta:
    ``||d*||^2_Lambda = sum_h lambda_h^2 xbar_h^2`` with
    ``xbar = Lambda^{-1/2} U' d*``.

    Raises
    ------
    ThresholdOutOfRange
        Unless ``0 < theta <= ||d*||^2`` (equality gives the boundary 1/2).
    DegenerateDelta
        If ``d*`` has a component outside the range of Delta.
    """
    if mu_max <= 0.0:
        raise DomainError(f"mu_max must be positive, got {mu_max}")
    d_star = np.asarray(d_star, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    d_norm_sq = float(d_star @ d_star)
    if not (0.0 < theta <= d_norm_sq):
        raise ThresholdOutOfRange(
            f"theta must lie in (0, ||d*||^2={d_norm_sq:.6g}], got {theta}"
        )

    lam, u = np.linalg.eigh(0.5 * (delta + delta.T))
    coeff = u.T @ d_star
    lam_max = float(lam.max(initial=0.0))
    if lam_max <= 0.0:
        raise DegenerateDelta("Delta is zero; the difference statistic is degenerate")
    null = lam <= 1e-12 * lam_max
    if np.any(np.abs(coeff[null]) > 1e-8 * math.sqrt(d_norm_sq)):
        raise DegenerateDelta(
            "d* has a component outside the range of Delta; "
            "the Gaussian approximation of the statistic degenerates"
        )
    # sum_h lambda_h^2 xbar_h^2 with xbar_h = coeff_h / sqrt(lambda_h)
    weighted = float(np.sum(lam[~null] * coeff[~null] ** 2))
    if weighted <= 0.0:
        raise DegenerateDelta("weighted norm of d* under Delta vanishes")
    return 0.5 * math.exp(-((d_norm_sq - theta) ** 2) / (8.0 * mu_max * weighted))


# --- densities -------------------------------------------------------------

def _noncentral_chi2_pdf_scalar(x: float, d: float, lam: float) -> float:
    if x < 0.0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if d < 1.0:
        raise DomainError(f"degrees of freedom must be >= 1, got {d}")
    if lam < 0.0:
        raise DomainError(f"noncentrality must be nonnegative, got {lam}")

    if lam == 0.0:
        if x == 0.0:
            if d < 2.0:
                return math.inf
            return 0.5 if d == 2.0 else 0.0
        return math.exp(
            (0.5 * d - 1.0) * math.log(x)
            - 0.5 * x
            - 0.5 * d * math.log(2.0)
            - math.lgamma(0.5 * d)
        )

    if x == 0.0:
        if d < 2.0:
            return math.inf
        return 0.5 * math.exp(-0.5 * lam) if d == 2.0 else 0.0

    nu = 0.5 * d - 1.0
    s = math.sqrt(lam * x)
    scaled = bessel_i_scaled(nu, s)
    log_pref = math.log(0.5) + 0.25 * (d - 2.0) * (math.log(x) - math.log(lam))
    exponent = s - 0.5 * (x + lam)
    if scaled == 0.0:
        return 0.0
    return math.exp(log_pref + exponent + math.log(scaled))


def noncentral_chi2_pdf(x, d: float, lam: float):
    """Density of the (non-)central chi-square distribution.

    ``f(x; d, lam) = 1/2 (x/lam)^{(d-2)/4} e^{-(x+lam)/2} I_{(d-2)/2}(sqrt(lam x))``
    with the central closed form used when ``lam = 0``. Accepts scalar or
    array ``x``; inputs outside the domain raise DomainError.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    if x_arr.ndim == 0:
        return _noncentral_chi2_pdf_scalar(float(x_arr), float(d), float(lam))
    out = np.empty(x_arr.shape)
    flat = x_arr.reshape(-1)
    out_flat = out.reshape(-1)
    for i in range(flat.size):
        out_flat[i] = _noncentral_chi2_pdf_scalar(float(flat[i]), float(d), float(lam))
    return out


def delta_sq_pdf_special_case(z, m_dim: int, d_star_norm_sq: float,
                              sigma_sq: float, mu_max: float):
    """Density of the squared difference statistic when ``Delta = sigma^2 I``.

    A scaled non-central chi-square:
    ``f(z) = (1/(mu sigma^2)) f_chi2(z / (mu sigma^2); M, ||d*||^2/(mu sigma^2))``.
    """
    if sigma_sq <= 0.0:
        raise DomainError(f"sigma_sq must be positive, got {sigma_sq}")
    if mu_max <= 0.0:
        raise DomainError(f"mu_max must be positive, got {mu_max}")
    if d_star_norm_sq < 0.0:
        raise DomainError(f"||d*||^2 must be nonnegative, got {d_star_norm_sq}")
    scale = mu_max * sigma_sq
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr < 0.0):
        raise DomainError("z must be nonnegative")
    res = noncentral_chi2_pdf(z_arr / scale, float(m_dim), d_star_norm_sq / scale)
    return res / scale


# --- end-to-end prediction -------------------------------------------------

@dataclass(frozen=True)
class LowDimModel:
    """Stacked operators of the group-centroid error dynamics.

    ``d_mat = diag{I - mu_max Hbar_m}`` drives the mean-square recursion,
    ``q_dt = P' M R_s M P`` is the driving noise term, and
    ``rbar = mu_max^{-2} q_dt`` its normalized version.
    """

    mu_max: float
    group_sizes: tuple
    hbar: np.ndarray
    d_mat: np.ndarray
    p_mat: np.ndarray
    m_step: np.ndarray
    r_s: np.ndarray
    q_dt: np.ndarray
    rbar: np.ndarray


@dataclass(frozen=True)
class TheoryReport:
    """All closed-form predictions for one configuration."""

    mu_max: float
    dim: int
    group_sizes: tuple
    group_clusters: tuple
    low_dim: LowDimModel
    theta_cov: np.ndarray
    phi_cov: np.ndarray
    pi_cov: np.ndarray
    deltas: dict
    normalized_msd_per_group: np.ndarray
    normalized_msd_total: float
    msd_per_agent_by_group: np.ndarray
    consistency_gap: float
    groups: tuple = field(repr=False, default=())

    def delta(self, m: int, n: int) -> np.ndarray:
        key = (m, n) if (m, n) in self.deltas else (n, m)
        return self.deltas[key]


def build_low_dim_model(model, costs, groups, mu) -> LowDimModel:
    """Assemble the stacked low-dimensional operators for the given groups."""
    n = model.n_agents
    m_dim = model.dim
    mu = _per_agent_mu(mu, n)
    mu_max = float(mu.max())
    g = len(groups)

    hbar = np.zeros((g * m_dim, g * m_dim))
    d_mat = np.zeros_like(hbar)
    for i, grp in enumerate(groups):
        sl = slice(i * m_dim, (i + 1) * m_dim)
        hbar_m = grp.h_weighted / mu_max
        hbar[sl, sl] = hbar_m
        d_mat[sl, sl] = np.eye(m_dim) - mu_max * hbar_m

    p_mat = np.zeros((n * m_dim, g * m_dim))
    for i, grp in enumerate(groups):
        for p_k, k in zip(grp.perron, grp.members):
            p_mat[k * m_dim:(k + 1) * m_dim, i * m_dim:(i + 1) * m_dim] = (
                p_k * np.eye(m_dim)
            )
    m_step = np.diag(np.repeat(mu, m_dim))
    r_s = np.zeros((n * m_dim, n * m_dim))
    for k in range(n):
        r_s[k * m_dim:(k + 1) * m_dim, k * m_dim:(k + 1) * m_dim] = costs[k].noise_cov

    q_dt = p_mat.T @ m_step @ r_s @ m_step @ p_mat
    return LowDimModel(
        mu_max=mu_max,
        group_sizes=tuple(grp.size for grp in groups),
        hbar=hbar,
        d_mat=d_mat,
        p_mat=p_mat,
        m_step=m_step,
        r_s=r_s,
        q_dt=q_dt,
        rbar=q_dt / mu_max**2,
    )


def predict(model, costs, a_static, mu) -> TheoryReport:
    """Compute every steady-state prediction for one configuration.

    Builds the group aggregates and low-dimensional operators, solves the
    discrete Lyapunov equation for the centroid covariance and the per-group
    continuous Lyapunov equations for its small-step limit, expands the
    network covariance, and evaluates pairwise difference covariances and
    normalized MSD. The discrete and continuous routes are compared and the
    relative gap (which shrinks with the step size) is recorded.
    """
    groups = build_group_model(model, costs, a_static, mu)
    n = model.n_agents
    m_dim = model.dim
    mu_vec = _per_agent_mu(mu, n)
    mu_max = float(mu_vec.max())
    g = len(groups)

    low = build_low_dim_model(model, costs, groups, mu_vec)
    theta_cov = solve_discrete_lyapunov(low.d_mat, low.q_dt)

    # The driving noise is independent across agents, hence across groups:
    # rbar is block-diagonal and the continuous equation decouples per group.
    phi_cov = np.zeros((g * m_dim, g * m_dim))
    for i, grp in enumerate(groups):
        sl = slice(i * m_dim, (i + 1) * m_dim)
        phi_cov[sl, sl] = solve_continuous_lyapunov(low.hbar[sl, sl], low.rbar[sl, sl])

    pi_cov = build_pi(phi_cov, low.group_sizes)

    deltas = {}
    for m in range(g):
        for nn in range(m, g):
            deltas[(m, nn)] = delta_between_groups(phi_cov, m, nn, m_dim)

    perron_full = np.zeros(n)
    for grp in groups:
        for p_k, k in zip(grp.perron, grp.members):
            perron_full[k] = p_k
    per_group, total = normalized_msd(groups, costs, mu_vec, perron_full)

    msd_per_agent = np.array(
        [mu_max * np.trace(phi_cov[i * m_dim:(i + 1) * m_dim,
                                   i * m_dim:(i + 1) * m_dim])
         for i in range(g)]
    )
    centroid_normalized = float(
        sum(np.trace(phi_cov[i * m_dim:(i + 1) * m_dim, i * m_dim:(i + 1) * m_dim])
            for i in range(g))
    )
    gap = abs(np.trace(theta_cov) / mu_max - centroid_normalized)
    gap /= max(centroid_normalized, 1e-300)

    return TheoryReport(
        mu_max=mu_max,
        dim=m_dim,
        group_sizes=tuple(grp.size for grp in groups),
        group_clusters=tuple(grp.cluster for grp in groups),
        low_dim=low,
        theta_cov=theta_cov,
        phi_cov=phi_cov,
        pi_cov=pi_cov,
        deltas=deltas,
        normalized_msd_per_group=per_group,
        normalized_msd_total=total,
        msd_per_agent_by_group=msd_per_agent,
        consistency_gap=float(gap),
        groups=tuple(groups),
    )


def error_bound_table(model, costs, a_static, mu_list, theta_list) -> list:
    """Theoretical error bounds for every group pair over a (mu, theta) grid.

    Returns a list of dict rows with keys ``mu``, ``theta``, ``pair``,
    ``same_cluster``, ``d_star_norm_sq``, ``mean``, ``var``, ``type1``,
    ``type2``, ``note``. A bound is None (with the reason in ``note``) when
    its validity condition fails for that cell.
    """
    rows = []
    for mu in mu_list:
        report = predict(model, costs, a_static, mu)
        mu_max = report.mu_max
        for m in range(len(report.group_sizes)):
            for nn in range(m + 1, len(report.group_sizes)):
                c_m = report.group_clusters[m]
                c_n = report.group_clusters[nn]
                d_star = model.minimizers[c_m] - model.minimizers[c_n]
                delta = report.delta(m, nn)
                same = c_m == c_n
                for theta in theta_list:
                    mean, var = delta_stat_moments(d_star, delta, mu_max)
                    t1 = t2 = None
                    notes = []
                    if same:
                        try:
                            t1 = type1_bound(theta, delta, mu_max, model.dim)
                        except StepSizeTooLarge as exc:
                            notes.append(f"type1: {exc}")
                    else:
                        d_sq = float(d_star @ d_star)
                        if theta >= d_sq:
                            # The bound is only meaningful strictly inside
                            # (0, ||d*||^2); boundary cells are marked invalid.
                            notes.append(
                                f"type2: theta {theta} >= ||d*||^2 {d_sq}"
                            )
                        else:
                            try:
                                t2 = type2_bound(theta, d_star, delta, mu_max)
                            except (ThresholdOutOfRange, DegenerateDelta) as exc:
                                notes.append(f"type2: {exc}")
                    rows.append(
                        {
                            "mu": float(mu),
                            "theta": float(theta),
                            "pair": (m, nn),
                            "same_cluster": same,
                            "d_star_norm_sq": float(d_star @ d_star),
                            "mean": mean,
                            "var": var,
                            "type1": t1,
                            "type2": t2,
                            "note": "; ".join(notes),
                        }
                    )
    return rows
