"""Accountants for k-fold non-adaptive composition.

``fft_compose`` convolves PLDs on their shared grid; ``basic_compose``,
``rdp_compose`` and ``clt_compose`` give the linear, Renyi and normal
approximation guarantees for comparison.
"""

from __future__ import annotations

import math
import os
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft
from scipy.special import log_ndtr, ndtr

from ._validation import check_positive_int, check_probability
from .divergences import UPPER, PrivacyGuarantee, epsilon_at_delta, rdp_to_dp, renyi_divergence
from .exceptions import GridMismatch, InfiniteMass, MemoryBudgetExceeded, ValidationError
from .pld import PrivacyLossDistribution, pld_moments

DEFAULT_ALPHAS = tuple([1 + x / 10 for x in range(1, 10)] + [2.0, 4.0, 8.0, 16.0, 32.0, 64.0])
DEFAULT_TAIL_MASS_BOUND = 1e-10
DEFAULT_MAX_LENGTH = 2 ** 24
ESTIMATE = "estimate"


def _workers():
    val = os.environ.get("DPA_THREADS")
    if not val:
        return 1
    try:
        return max(1, int(val))
    except ValueError:
        raise ValidationError(f"DPA_THREADS must be a positive integer, got {val!r}") from None


def basic_compose(guarantees: Iterable[Tuple[float, float]]) -> PrivacyGuarantee:
    """Linear composition: (sum of epsilons, min(1, sum of deltas))."""
    eps, delta = [], []
    for g in guarantees:
        e, d = (g.epsilon, g.delta) if isinstance(g, PrivacyGuarantee) else g
        if not e >= 0:
            raise ValidationError(f"epsilon must be non-negative, got {e!r}")
        check_probability(d, "delta")
        eps.append(float(e))
        delta.append(float(d))
    if not eps:
        raise ValidationError("need at least one guarantee")
    return PrivacyGuarantee(math.fsum(eps), min(1.0, math.fsum(delta)), UPPER)


def basic_epsilon(pld: PrivacyLossDistribution, k: int, delta: float) -> float:
    """Epsilon of k-fold linear composition with delta split evenly over the steps."""
    k = check_positive_int(k, "k")
    return k * epsilon_at_delta(pld, delta / k)


def _check_grid(plds):
    h = plds[0].grid_spacing
    for p in plds[1:]:
        if abs(p.grid_spacing - h) > 1e-12 * h:
            raise GridMismatch(f"grid spacings differ: {h!r} vs {p.grid_spacing!r}")
    return h


def _truncate(masses, min_index, tail, pessimistic):
    """Cut tails of total mass at most ``tail`` (half per side)."""
    if tail <= 0 or masses.size < 3:
        return masses, min_index, 0.0
    half = tail / 2
    lo = int(np.searchsorted(np.cumsum(masses), half, side="right"))
    hi = masses.size - int(np.searchsorted(np.cumsum(masses[::-1]), half, side="right"))
    lo = min(lo, masses.size - 1)
    hi = max(hi, lo + 1)
    below = math.fsum(masses[:lo])
    above = math.fsum(masses[hi:])
    out = masses[lo:hi].copy()
    to_inf = 0.0
    # the lower tail collapses onto the new leftmost cell
    out[0] += below
    if pessimistic:
        to_inf = above
    else:
        out[-1] += above
    return out, min_index + lo, to_inf


def _convolve(a, b, pessimistic, max_length):
    n = a.size + b.size - 1
    size = 1 << max(0, (n - 1).bit_length())
    if size > max_length:
        raise MemoryBudgetExceeded(f"FFT length {size} exceeds the budget {max_length}")
    workers = _workers()
    fa = scipy.fft.rfft(a, size, workers=workers)
    fb = scipy.fft.rfft(b, size, workers=workers)
    out = scipy.fft.irfft(fa * fb, size, workers=workers)[:n]
    out = np.clip(out, 0.0, None)
    target = math.fsum(a) * math.fsum(b)
    total = math.fsum(out)
    gap = target - total
    if gap > 0:
        # round-off deficit goes to the largest loss when pessimistic
        if pessimistic:
            out[-1] += gap
        else:
            out[0] += gap
    elif total > 0:
        out *= target / total
    return out


def _compose_pair(x, y, tail, max_length):
    pess = x.pessimistic and y.pessimistic
    masses = _convolve(x.masses, y.masses, pess, max_length)
    finite = (1.0 - x.infinity_mass) * (1.0 - y.infinity_mass)
    masses, min_index, to_inf = _truncate(masses, x.min_index + y.min_index, tail, pess)
    inf = 1.0 - finite + to_inf
    total = math.fsum(masses)
    if total > 0:
        masses *= (1.0 - inf) / total
    return PrivacyLossDistribution(x.grid_spacing, min_index, masses, inf, pess).trimmed()


def fft_compose(plds: Union[PrivacyLossDistribution, Sequence[PrivacyLossDistribution]],
                k: Optional[int] = None, tail_mass_bound: float = DEFAULT_TAIL_MASS_BOUND,
                max_length: int = DEFAULT_MAX_LENGTH) -> PrivacyLossDistribution:
    """Compose PLDs by zero-padded FFT convolution on their shared grid.

    Args:
      plds: A PLD (with ``k`` copies) or a sequence of PLDs.
      k: Number of self-compositions when ``plds`` is a single PLD.
      tail_mass_bound: Mass that may be truncated overall.  Each convolution
        truncates at most ``tail_mass_bound / k`` (``k`` the number of
        factors), since truncated mass compounds through later convolutions.
        Pessimistically the upper tail joins the +inf atom.
      max_length: Largest FFT length allowed.

    Raises:
      GridMismatch: The PLDs use different grid spacings.
      MemoryBudgetExceeded: A convolution would exceed ``max_length``.
    """
    if isinstance(plds, PrivacyLossDistribution):
        k = 1 if k is None else check_positive_int(k, "k")
        tail = tail_mass_bound / k
        base = plds
        result = None
        while True:
            if k & 1:
                result = base if result is None else _compose_pair(result, base, tail, max_length)
            k >>= 1
            if not k:
                break
            base = _compose_pair(base, base, tail, max_length)
        return result
    plds = list(plds)
    if not plds:
        raise ValidationError("need at least one PLD")
    if k is not None and k != 1:
        plds = plds * check_positive_int(k, "k")
    _check_grid(plds)
    tail = tail_mass_bound / len(plds)
    result = plds[0]
    for p in plds[1:]:
        result = _compose_pair(result, p, tail, max_length)
    return result


def rdp_compose(pld: PrivacyLossDistribution, k: int, epsilon: float,
                alphas: Optional[Sequence[float]] = None) -> PrivacyGuarantee:
    """delta = min over alpha of rdp_to_dp(k * R_alpha, alpha, epsilon)."""
    k = check_positive_int(k, "k")
    alphas = DEFAULT_ALPHAS if alphas is None else tuple(alphas)
    if not alphas:
        raise ValidationError("alphas must be non-empty")
    delta = min(rdp_to_dp(k * renyi_divergence(pld, a), a, epsilon) for a in alphas)
    return PrivacyGuarantee(float(epsilon), delta, UPPER)


def rdp_epsilon(pld: PrivacyLossDistribution, k: int, delta: float,
                alphas: Optional[Sequence[float]] = None) -> float:
    """Smallest epsilon certified by the Renyi conversion at the given delta."""
    k = check_positive_int(k, "k")
    alphas = DEFAULT_ALPHAS if alphas is None else tuple(alphas)
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    return max(0.0, min(k * renyi_divergence(pld, a) + math.log(1 / delta) / (a - 1) for a in alphas))


def _normal_delta(mean, var, eps):
    """delta(eps) of a loss that is exactly Normal(mean, var) under P."""
    if var <= 0:
        return max(0.0, -math.expm1(eps - mean)) if mean > eps else 0.0
    sd = math.sqrt(var)
    a = ndtr((mean - eps) / sd)
    # e^{eps - mean + var/2} Phi((mean - eps - var)/sd), in logs to avoid overflow
    b = math.exp(eps - mean + var / 2 + log_ndtr((mean - eps - var) / sd))
    return min(1.0, max(0.0, a - b))


def clt_compose(pld: PrivacyLossDistribution, k: int, epsilon: float):
    """Normal approximation of the k-fold composed delta at ``epsilon``.

    The composed loss is replaced by Normal(k m, k v) with (m, v) the mean and
    variance of ``pld``.  The result is an estimate, not a bound.

    Returns:
      ``(delta_estimate, "approximation")``.

    Raises:
      InfiniteMass: ``pld`` has an atom at +inf.
    """
    k = check_positive_int(k, "k")
    if pld.infinity_mass > 0:
        raise InfiniteMass("the normal approximation needs infinity_mass = 0")
    m, v, _ = pld_moments(pld)
    return _normal_delta(k * m, k * v, float(epsilon)), "approximation"


def clt_epsilon(pld: PrivacyLossDistribution, k: int, delta: float, tol: float = 1e-9) -> float:
    """Epsilon at which the normal approximation reaches ``delta``."""
    k = check_positive_int(k, "k")
    if pld.infinity_mass > 0:
        raise InfiniteMass("the normal approximation needs infinity_mass = 0")
    m, v, _ = pld_moments(pld)
    mean, var = k * m, k * v
    if _normal_delta(mean, var, 0.0) <= delta:
        return 0.0
    lo, hi = 0.0, max(1.0, mean + 40 * math.sqrt(var))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _normal_delta(mean, var, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi
