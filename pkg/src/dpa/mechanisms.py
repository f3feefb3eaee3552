"""Mechanism specifications, dominating pairs, PLDs, samplers and costs.

Additive families add noise ``Z`` to a scalar query.  Their dominating pair
is taken to be (``Z``, ``Z + s``) for sensitivity ``s``; for the symmetric
unimodal noises below this is the standard worst case and is assumed rather
than proven here.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import _io
from ._validation import check_nonnegative, check_positive
from .exceptions import NonIntegrable, ValidationError
from .pld import DEFAULT_POLICY, DiscretizationPolicy, PrivacyLossDistribution, discretize_pld, \
    pld_from_cdfs, pld_from_discrete_pair

GAUSSIAN = "gaussian"
LAPLACE = "laplace"
STAIRCASE = "staircase"
RANDOMIZED_RESPONSE = "randomized_response"
FAMILIES = (GAUSSIAN, LAPLACE, STAIRCASE, RANDOMIZED_RESPONSE)

_REQUIRED = {
    GAUSSIAN: ("sigma",),
    LAPLACE: ("lambda",),
    STAIRCASE: ("epsilon", "eta"),
    RANDOMIZED_RESPONSE: ("epsilon",),
}


@dataclasses.dataclass(frozen=True)
class MechanismSpec:
    """A mechanism family with its parameters and the query sensitivity.

    Attributes:
      family: One of ``gaussian`` (``sigma``), ``laplace`` (``lambda``, the
        rate of the density ``lambda/2 exp(-lambda |z|)``), ``staircase``
        (``epsilon``, ``eta``) or ``randomized_response`` (``epsilon``).
      params: Family parameters.
      sensitivity: Query sensitivity ``s``.
    """

    family: str
    params: dict
    sensitivity: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        params = dict(self.params)
        for key in _REQUIRED[self.family]:
            if key not in params:
                raise ValidationError(f"{self.family} needs parameter {key!r}")
        extra = set(params) - set(_REQUIRED[self.family])
        if extra:
            raise ValidationError(f"unexpected parameters for {self.family}: {sorted(extra)}")
        for key in _REQUIRED[self.family]:
            if key == "eta":
                params[key] = check_nonnegative(params[key], key)
            else:
                params[key] = check_positive(params[key], key)
        s = check_positive(self.sensitivity, "sensitivity")
        if self.family == STAIRCASE and params["eta"] > s:
            raise ValidationError("staircase eta must not exceed the sensitivity")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "sensitivity", s)

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params), "sensitivity": self.sensitivity}

    def to_json(self):
        return _io.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["family"], dict(d.get("params", {})), float(d.get("sensitivity", 1.0)))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed mechanism record: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def gaussian(sigma: float, sensitivity: float = 1.0) -> MechanismSpec:
    return MechanismSpec(GAUSSIAN, {"sigma": sigma}, sensitivity)


def laplace(lam: float, sensitivity: float = 1.0) -> MechanismSpec:
    return MechanismSpec(LAPLACE, {"lambda": lam}, sensitivity)


def staircase(epsilon: float, eta: float, sensitivity: float = 1.0) -> MechanismSpec:
    return MechanismSpec(STAIRCASE, {"epsilon": epsilon, "eta": eta}, sensitivity)


def randomized_response(epsilon: float) -> MechanismSpec:
    return MechanismSpec(RANDOMIZED_RESPONSE, {"epsilon": epsilon}, 1.0)


# --------------------------------------------------------------------------
# staircase noise


def staircase_normalizer(epsilon, eta, s):
    """Density level ``c`` of the central band |z| <= eta."""
    r = math.exp(-epsilon)
    return 1.0 / (2 * eta + 2 * s * r / (1 - r))


def _stair_band(z, eta, s):
    a = np.abs(z)
    return np.where(a <= eta, 0, np.ceil((a - eta) / s)).astype(np.int64)


def _stair_sf_abs(t, epsilon, eta, s):
    """P(|Z| > t) for t >= 0."""
    c = staircase_normalizer(epsilon, eta, s)
    r = math.exp(-epsilon)
    t = np.asarray(t, dtype=float)
    central = 2 * c * np.clip(eta - t, 0.0, None)
    k = np.where(t <= eta, 1.0, np.ceil((t - eta) / s))
    k = np.maximum(k, 1.0)
    # part of band k above t plus all later bands
    band_end = (k * s + eta)
    in_band = 2 * c * r ** k * np.clip(band_end - np.maximum(t, eta), 0.0, s)
    later = 2 * c * s * r ** (k + 1) / (1 - r)
    return central + in_band + later


def _stair_cdf(z, epsilon, eta, s):
    z = np.asarray(z, dtype=float)
    half = 0.5 * _stair_sf_abs(np.abs(z), epsilon, eta, s)
    return np.where(z < 0, half, 1.0 - half)


def _stair_logpdf(z, epsilon, eta, s):
    c = staircase_normalizer(epsilon, eta, s)
    return math.log(c) - epsilon * _stair_band(z, eta, s)


# --------------------------------------------------------------------------
# dominating pairs


@dataclasses.dataclass(frozen=True)
class DominatingPair:
    """Numerator/denominator laws of a mechanism's worst-case neighbor pair.

    ``logpdf_p``/``logpdf_q`` are log densities (log masses for discrete
    families); ``sample_p``/``sample_q`` draw ``n`` values from a numpy
    Generator.
    """

    logpdf_p: Callable
    logpdf_q: Callable
    sample_p: Callable
    sample_q: Callable
    discrete: bool = False

    def pdf_p(self, y):
        return np.exp(self.logpdf_p(y))

    def pdf_q(self, y):
        return np.exp(self.logpdf_q(y))

    def llr(self, y):
        """log(q(y) / p(y)): evidence for the shifted hypothesis."""
        return self.logpdf_q(y) - self.logpdf_p(y)


def _logpdf(spec: MechanismSpec, y, center):
    y = np.asarray(y, dtype=float) - center
    p = spec.params
    if spec.family == GAUSSIAN:
        sig = p["sigma"]
        return -0.5 * (y / sig) ** 2 - math.log(sig) - 0.5 * math.log(2 * math.pi)
    if spec.family == LAPLACE:
        lam = p["lambda"]
        return math.log(lam / 2) - lam * np.abs(y)
    if spec.family == STAIRCASE:
        return _stair_logpdf(y, p["epsilon"], p["eta"], spec.sensitivity)
    raise ValidationError("log density requested for a discrete family")


def _rr_probs(epsilon):
    e = math.exp(epsilon)
    return np.array([e / (1 + e), 1 / (1 + e)])


def noise_sample(spec: MechanismSpec, rng: np.random.Generator, size=None):
    """Draw additive noise for ``spec`` (not defined for randomized response)."""
    p = spec.params
    if spec.family == GAUSSIAN:
        return rng.normal(0.0, p["sigma"], size)
    if spec.family == LAPLACE:
        return rng.laplace(0.0, 1.0 / p["lambda"], size)
    if spec.family == STAIRCASE:
        eps, eta, s = p["epsilon"], p["eta"], spec.sensitivity
        c = staircase_normalizer(eps, eta, s)
        r = math.exp(-eps)
        n = 1 if size is None else int(np.prod(size))
        u_band = rng.random(n)
        u_pos = rng.random(n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        p_central = 2 * eta * c
        # band k >= 1 has probability 2 c s r^k, a geometric law on k
        rest = np.clip((u_band - p_central) / (1 - p_central), 0.0, 1.0 - 1e-16)
        k = np.floor(np.log1p(-rest) / math.log(r)).astype(np.int64) + 1
        k = np.maximum(k, 1)
        a = np.where(u_band < p_central, u_pos * eta, (k - 1) * s + eta + u_pos * s)
        z = sign * a
        return z[0] if size is None else z.reshape(size)
    raise ValidationError("randomized response has no additive noise")


def dominating_pair(spec: MechanismSpec) -> DominatingPair:
    """Worst-case pair: noise at query 0 versus noise at query ``s``."""
    s = spec.sensitivity
    if spec.family == RANDOMIZED_RESPONSE:
        lp = np.log(_rr_probs(spec.params["epsilon"]))
        lq = lp[::-1].copy()

        def logpmf(table):
            return lambda y: table[np.asarray(y, dtype=np.int64)]

        def sampler(table):
            probs = np.exp(table)
            return lambda rng, n: (rng.random(n) >= probs[0]).astype(np.int64)

        return DominatingPair(logpmf(lp), logpmf(lq), sampler(lp), sampler(lq), discrete=True)

    return DominatingPair(
        logpdf_p=lambda y: _logpdf(spec, y, 0.0),
        logpdf_q=lambda y: _logpdf(spec, y, s),
        sample_p=lambda rng, n: noise_sample(spec, rng, n),
        sample_q=lambda rng, n: s + noise_sample(spec, rng, n),
    )


# --------------------------------------------------------------------------
# privacy loss distributions


def _gaussian_pld(sigma, s, policy):
    mu = s * s / (2 * sigma * sigma)
    sd = s / sigma

    def y_of(l):
        return (s * s - 2 * sigma * sigma * np.asarray(l, float)) / (2 * s)

    # L = (s^2 - 2 s y) / (2 sigma^2) decreases in y
    def p_le(l):
        return ndtr(-y_of(l) / sigma)

    def p_gt(l):
        return ndtr(y_of(l) / sigma)

    def q_le(l):
        return ndtr(-(y_of(l) - s) / sigma)

    def q_gt(l):
        return ndtr((y_of(l) - s) / sigma)

    width = (math.sqrt(2 * math.log(2 / policy.tail_mass_bound)) + 2) * sd
    if policy.pessimistic:
        # extend the upper edge until the tail underflows, so that truncation
        # does not create a +inf atom (moments and Renyi stay finite)
        return pld_from_cdfs(p_le, q_le, p_gt, q_gt, (mu - width, mu + 40 * sd), policy,
                             upper_tail_bound=0.0)
    return pld_from_cdfs(p_le, q_le, p_gt, q_gt, (mu - width, mu + width), policy)


def _laplace_pld(lam, s, policy):
    top = lam * s

    def y_of(l):
        return np.clip((top - np.asarray(l, float)) / (2 * lam), 0.0, s)

    # continuous part lives on 0 < y < s where L = lam (s - 2 y)
    def p_le(l):
        return 0.5 * (np.exp(-lam * y_of(l)) - math.exp(-top))

    def p_gt(l):
        return -0.5 * np.expm1(-lam * y_of(l))

    def q_le(l):
        return -0.5 * np.expm1(-lam * (s - y_of(l)))

    def q_gt(l):
        return 0.5 * (np.exp(-lam * (s - y_of(l))) - math.exp(-top))

    atoms = [(top, 0.5), (-top, 0.5 * math.exp(-top))]
    return pld_from_cdfs(p_le, q_le, p_gt, q_gt, (-top, top), policy, atoms=atoms)


def staircase_loss_masses(epsilon, eta, s):
    """P-masses of the staircase losses (+eps, 0, -eps) for the shifted pair."""
    cdf = lambda z: float(_stair_cdf(z, epsilon, eta, s))
    # y <= -eta: loss +eps; y >= s + eta: loss -eps; enumerate the middle
    masses = {1: cdf(-eta), 0: 0.0, -1: 1.0 - cdf(s + eta)}
    pts = sorted({-eta, eta, s - eta, s + eta, -eta + s, eta - s})
    pts = [x for x in pts if -eta <= x <= s + eta]
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        k = int(_stair_band(mid - s, eta, s) - _stair_band(mid, eta, s))
        masses[k] += cdf(b) - cdf(a)
    return masses


def _staircase_pld(epsilon, eta, s, policy):
    masses = staircase_loss_masses(epsilon, eta, s)
    atoms = [(k * epsilon, m) for k, m in masses.items() if m > 0]
    return discretize_pld(None, policy, atoms=atoms)


def mechanism_pld(spec: MechanismSpec, policy: DiscretizationPolicy = DEFAULT_POLICY) -> PrivacyLossDistribution:
    """PLD of the mechanism's dominating pair under ``policy``."""
    if not isinstance(policy, DiscretizationPolicy):
        raise ValidationError("policy must be a DiscretizationPolicy")
    p, s = spec.params, spec.sensitivity
    if spec.family == GAUSSIAN:
        return _gaussian_pld(p["sigma"], s, policy)
    if spec.family == LAPLACE:
        return _laplace_pld(p["lambda"], s, policy)
    if spec.family == STAIRCASE:
        return _staircase_pld(p["epsilon"], p["eta"], s, policy)
    probs = _rr_probs(p["epsilon"])
    return pld_from_discrete_pair(probs, probs[::-1], policy)


def mechanism_plds(spec: MechanismSpec, policy: DiscretizationPolicy = DEFAULT_POLICY):
    """Forward and reverse PLDs.  All supported families are symmetric, so they coincide."""
    pld = mechanism_pld(spec, policy)
    return pld, pld


def sample(spec: MechanismSpec, true_query_value: float, rng_seed: int, size=None):
    """Mechanism output for a query value; deterministic given ``rng_seed``.

    For randomized response the query value must be 0 or 1 and the output is
    the reported bit.
    """
    rng = np.random.default_rng(rng_seed)
    if spec.family == RANDOMIZED_RESPONSE:
        if true_query_value not in (0, 1):
            raise ValidationError("randomized response needs a query value of 0 or 1")
        keep = _rr_probs(spec.params["epsilon"])[0]
        flip = rng.random(size) >= keep
        return np.where(flip, 1 - true_query_value, true_query_value)
    return true_query_value + noise_sample(spec, rng, size)


# --------------------------------------------------------------------------
# costs


def _as_cost(cost: Union[str, Callable]) -> Callable:
    if callable(cost):
        return cost
    if cost == "quadratic":
        return lambda z: np.asarray(z, float) ** 2
    if cost == "absolute":
        return lambda z: np.abs(np.asarray(z, float))
    raise ValidationError(f"unknown cost {cost!r}")


_GL = np.polynomial.legendre.leggauss(8)


def _band_integral(cost, a, b):
    x, w = _GL
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.asarray(cost(mid + half * x), float) @ w)


def staircase_cost(epsilon, eta, s, cost="quadratic", tol=1e-14):
    """Expected cost of staircase noise, integrated band by band.

    Each band is integrated with 8-point Gauss-Legendre, exact for polynomial
    costs up to degree 15.  The cost is assumed symmetric.
    """
    cost = _as_cost(cost)
    c = staircase_normalizer(epsilon, eta, s)
    total = 2 * c * _band_integral(cost, 0.0, eta) if eta > 0 else 0.0
    r = math.exp(-epsilon)
    for k in range(1, 100000):
        lo = (k - 1) * s + eta
        term = 2 * c * r ** k * _band_integral(cost, lo, lo + s)
        total += term
        if abs(term) <= tol * max(abs(total), 1e-300) and k > 3:
            break
    return total


def expected_cost(spec: MechanismSpec, cost: Union[str, Callable] = "quadratic", tol: float = 1e-8) -> float:
    """E[c(Z)] for the family's additive noise.

    Raises:
      NonIntegrable: Adaptive quadrature misses the tolerance.
    """
    p = spec.params
    if spec.family == RANDOMIZED_RESPONSE:
        raise ValidationError("randomized response has no additive noise cost")
    if spec.family == STAIRCASE:
        return staircase_cost(p["epsilon"], p["eta"], spec.sensitivity, cost)
    fn = _as_cost(cost)
    if spec.family == GAUSSIAN and cost == "quadratic":
        return p["sigma"] ** 2
    if spec.family == LAPLACE and cost == "quadratic":
        return 2.0 / p["lambda"] ** 2
    pdf = lambda z: math.exp(float(_logpdf(spec, z, 0.0)))
    # the noise is symmetric about zero, where the Laplace density has its cusp
    val, err = integrate.quad(lambda z: (float(fn(z)) + float(fn(-z))) * pdf(z), 0, np.inf,
                              epsabs=tol, epsrel=tol, limit=400)
    if not math.isfinite(val) or err > 10 * tol * max(1.0, abs(val)):
        raise NonIntegrable(f"expected cost did not converge (error estimate {err:.2e})")
    return val
