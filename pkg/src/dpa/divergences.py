"""Divergences and (epsilon, delta) conversions computed from a PLD."""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .exceptions import Unachievable, ValidationError
from .pld import PrivacyLossDistribution, pld_moments

UPPER = "upper"
LOWER = "lower"


@dataclasses.dataclass(frozen=True)
class PrivacyGuarantee:
    """An (epsilon, delta) pair and whether it bounds the truth from above or below."""

    epsilon: float
    delta: float
    bound_kind: str = UPPER

    def __post_init__(self):
        if not (self.epsilon >= 0):
            raise ValidationError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if not 0 <= self.delta <= 1:
            raise ValidationError(f"delta must lie in [0, 1], got {self.delta!r}")
        if self.bound_kind not in (UPPER, LOWER, "estimate"):
            raise ValidationError(f"unknown bound_kind {self.bound_kind!r}")


def _bound_kind(pld):
    return UPPER if pld.pessimistic else LOWER


def _hockey_stick_scalar(losses, masses, eps, inf_mass):
    k = np.searchsorted(losses, eps, side="right")
    tail = masses[k:] * -np.expm1(eps - losses[k:])
    return min(1.0, max(0.0, math.fsum(tail) + inf_mass))


def hockey_stick(pld: PrivacyLossDistribution, epsilon):
    """delta(eps) = E_P[(1 - exp(eps - L))^+] + P(L = inf).

    ``epsilon`` may be a scalar or an array; negative values are evaluated
    literally.
    """
    losses, masses = pld.losses, pld.masses
    eps = np.asarray(epsilon, dtype=float)
    if eps.ndim == 0:
        return _hockey_stick_scalar(losses, masses, float(eps), pld.infinity_mass)
    out = np.array([_hockey_stick_scalar(losses, masses, e, pld.infinity_mass) for e in eps.ravel()])
    return out.reshape(eps.shape)


def epsilon_at_delta(pld: PrivacyLossDistribution, delta: float, tol: float = 1e-9) -> float:
    """Smallest epsilon (to ``tol``) with ``hockey_stick(pld, eps) <= delta``.

    Raises:
      Unachievable: ``delta <= pld.infinity_mass``.
    """
    if not 0 < delta < 1:
        raise ValidationError(f"delta must lie in (0, 1), got {delta!r}")
    if delta <= pld.infinity_mass:
        raise Unachievable(f"delta={delta!r} is not above the +inf atom mass {pld.infinity_mass!r}")
    losses, masses = pld.losses, pld.masses
    if _hockey_stick_scalar(losses, masses, 0.0, pld.infinity_mass) <= delta:
        return 0.0
    lo, hi = 0.0, max(float(losses[-1]), 0.0)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _hockey_stick_scalar(losses, masses, mid, pld.infinity_mass) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def guarantee_at_delta(pld: PrivacyLossDistribution, delta: float) -> PrivacyGuarantee:
    return PrivacyGuarantee(epsilon_at_delta(pld, delta), delta, _bound_kind(pld))


def guarantee_at_epsilon(pld: PrivacyLossDistribution, epsilon: float) -> PrivacyGuarantee:
    return PrivacyGuarantee(epsilon, hockey_stick(pld, epsilon), _bound_kind(pld))


def kl_divergence(pld: PrivacyLossDistribution) -> float:
    """KL(P || Q), the mean privacy loss; infinite with an atom at +inf."""
    if pld.infinity_mass > 0:
        return math.inf
    return pld_moments(pld)[0]


def renyi_divergence(pld: PrivacyLossDistribution, alpha: float) -> float:
    """Renyi divergence of order ``alpha``: log E_P[exp((alpha - 1) L)] / (alpha - 1)."""
    if not alpha > 1:
        raise ValidationError(f"alpha must exceed 1, got {alpha!r}")
    if pld.infinity_mass > 0:
        return math.inf
    nz = pld.masses > 0
    val = logsumexp((alpha - 1) * pld.losses[nz] + np.log(pld.masses[nz])) / (alpha - 1)
    return float(val)


def f_divergence(pld: PrivacyLossDistribution, f: Callable, f_limit_slope: float) -> float:
    """D_f(P || Q) = E_Q[f(dP/dQ)] evaluated through the loss distribution.

    The finite part is ``E_P[exp(-L) f(exp(L))]``.  The ``+inf`` atom adds
    ``infinity_mass * f_limit_slope`` where ``f_limit_slope`` is the limit of
    ``f(t) / t``.  Q-mass not seen by the grid (events with zero P-probability)
    adds ``f(0)`` times that mass.
    """
    losses, masses = pld.losses, pld.masses
    nz = masses > 0
    l, m = losses[nz], masses[nz]
    t = np.exp(l)
    vals = np.asarray(f(t), dtype=float)
    finite = math.fsum(m * np.exp(-l) * vals)
    total = finite
    if pld.infinity_mass > 0:
        total += pld.infinity_mass * f_limit_slope
    q_seen = math.fsum(m * np.exp(-l))
    missing = 1.0 - q_seen
    if missing > 1e-12:
        with np.errstate(all="ignore"):
            f0 = float(f(np.array(0.0)))
        if not math.isnan(f0):
            total += f0 * missing
    return total


def rdp_to_dp(renyi_value: float, alpha: float, epsilon: float) -> float:
    """delta = min(1, exp((alpha - 1) (R_alpha - eps)))."""
    if not alpha > 1:
        raise ValidationError(f"alpha must exceed 1, got {alpha!r}")
    if math.isinf(renyi_value):
        return 1.0
    x = (alpha - 1) * (renyi_value - epsilon)
    return 1.0 if x >= 0 else math.exp(x)
