"""Exponentially scaled modified Bessel function of the first kind.

Provides ``e^{-z} I_nu(z)`` for z >= 0 and nu >= -0.5, the range needed by
the non-central chi-square density (nu = d/2 - 1 with d >= 1 degrees of
freedom). Scaling keeps the density arithmetic inside double range: the
caller recombines exponents instead of ever forming e^z.

Two branches share the work:

* ascending series for z < 20; every term is positive, so the summation
  is forward stable and runs to machine precision;
* large-argument asymptotic expansion for z >= 20, truncated adaptively at
  its smallest term and accepted only when that term is below 1e-13 of the
  sum. Large orders (roughly nu^2 > 2z) defeat the expansion, so the
  fallback re-runs the ascending series with periodic rescaling, which
  stays inside double range for any z.
"""

from __future__ import annotations

import math

_SWITCH = 20.0
_SERIES_MAX_TERMS = 800
_ASYMPTOTIC_MAX_TERMS = 200


def bessel_i_scaled(nu: float, z: float) -> float:
    """Return ``exp(-z) * I_nu(z)`` for z >= 0, nu >= -0.5."""
    if z < 0.0:
        raise ValueError(f"z must be nonnegative, got {z}")
    if nu < -0.5:
        raise ValueError(f"order must be >= -0.5, got {nu}")
    if z == 0.0:
        if nu == 0.0:
            return 1.0
        return 0.0 if nu > 0.0 else math.inf
    if z < _SWITCH:
        return _series(nu, z)
    value, rel_err = _asymptotic(nu, z)
    if rel_err <= 1e-13:
        return value
    return _series_scaled(nu, z)


def _series(nu: float, z: float) -> float:
    # I_nu(z) = sum_k (z/2)^{nu+2k} / (k! Gamma(nu+k+1)), all terms positive.
    term = (0.5 * z) ** nu / math.gamma(nu + 1.0)
    total = term
    quarter_z_sq = 0.25 * z * z
    for k in range(_SERIES_MAX_TERMS):
        term = term * quarter_z_sq / ((k + 1.0) * (k + 1.0 + nu))
        total += term
        if term <= 1e-17 * total:
            break
    return math.exp(-z) * total


def _asymptotic(nu: float, z: float):
    # e^{-z} I_nu(z) ~ (2 pi z)^{-1/2} sum_k a_k with a_0 = 1 and
    # a_{k+1} = -a_k (4 nu^2 - (2k+1)^2) / (8 z (k+1)); divergent, so stop
    # at the smallest term. Returns (value, relative truncation error) so
    # the caller can reject the expansion when z is too small for nu.
    four_nu_sq = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    trunc = 1.0
    for k in range(_ASYMPTOTIC_MAX_TERMS):
        nxt = -term * (four_nu_sq - (2.0 * k + 1.0) ** 2) / (8.0 * z * (k + 1.0))
        if nxt == 0.0:
            trunc = 0.0  # terminating series (half-integer order): exact
            break
        if abs(nxt) >= abs(term):
            trunc = abs(nxt)  # expansion started diverging; error ~ first omitted
            break
        total += nxt
        if abs(nxt) <= 1e-17 * abs(total):
            trunc = abs(nxt)
            break
        term = nxt
        trunc = abs(term)
    rel_err = trunc / abs(total) if total != 0.0 else math.inf
    return total / math.sqrt(2.0 * math.pi * z), rel_err


def _series_scaled(nu: float, z: float) -> float:
    # Same ascending series, but the accumulator is renormalized whenever it
    # grows past 1e250 so that z up to the thousands cannot overflow. The
    # leading term enters in log form for the same reason.
    log_lead = nu * math.log(0.5 * z) - math.lgamma(nu + 1.0)
    quarter_z_sq = 0.25 * z * z
    term = 1.0
    total = 1.0
    shift = 0.0  # log of the total renormalization applied so far
    for k in range(100_000):
        ratio = quarter_z_sq / ((k + 1.0) * (k + 1.0 + nu))
        term *= ratio
        total += term
        if ratio < 1.0 and term <= 1e-17 * total:
            break
        if total > 1e250:
            total *= 1e-250
            term *= 1e-250
            shift += 250.0 * math.log(10.0)
    return math.exp(log_lead + shift - z) * total
