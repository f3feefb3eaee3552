"""Monte-Carlo likelihood-ratio attacks that check claimed tradeoff curves."""

from __future__ import annotations

import dataclasses
import math
from typing import List, Tuple

import numpy as np

from ._validation import check_positive_int
from .exceptions import ValidationError
from .mechanisms import MechanismSpec, dominating_pair
from .tradeoff import EMPIRICAL, TradeoffCurve, hull_curve

DEFAULT_LEVELS = 512
DEFAULT_CONFIDENCE = 0.99
_CHUNK = 1 << 18
_LLR_DECIMALS = 10


@dataclasses.dataclass
class AttackReport:
    """Result of a threshold sweep.

    Attributes:
      sweep: ``(threshold, p_fa, p_md, radius)`` rows; each threshold appears
        twice, once for the strict test ``LLR > t`` and once for ``LLR >= t``.
      violations: ``(p_fa, p_md, bound_value)`` for points that fall below the
        claimed curve by more than the confidence radius.
      num_samples: Samples drawn under each hypothesis.
      confidence: Simultaneous confidence level of the radii.
    """

    sweep: List[Tuple[float, float, float, float]]
    violations: List[Tuple[float, float, float]]
    num_samples: int
    confidence: float = DEFAULT_CONFIDENCE

    @property
    def num_violations(self) -> int:
        return len(self.violations)

    def to_dict(self):
        return {
            "num_samples": self.num_samples,
            "confidence": self.confidence,
            "num_violations": self.num_violations,
            "violations": [list(v) for v in self.violations],
            "sweep": [list(s) for s in self.sweep],
        }


def _llrs(spec: MechanismSpec, num_samples: int, rng_seed: int):
    """Sorted log-likelihood ratios under both hypotheses.

    Samples are drawn in fixed-size chunks, each from its own child seed, so
    the result depends only on ``rng_seed`` and ``num_samples``.
    """
    pair = dominating_pair(spec)
    seeds = np.random.SeedSequence(int(rng_seed) % (1 << 64)).spawn(2)
    out = []
    for seed, draw in zip(seeds, (pair.sample_p, pair.sample_q)):
        n_chunks = -(-num_samples // _CHUNK)
        children = seed.spawn(n_chunks)
        parts = []
        for c, child in enumerate(children):
            n = min(_CHUNK, num_samples - c * _CHUNK)
            y = draw(np.random.default_rng(child), n)
            # round so that exact ties (flat LLR regions, atoms) survive float noise
            parts.append(np.round(pair.llr(y), _LLR_DECIMALS))
        out.append(np.sort(np.concatenate(parts)))
    return out


def _error_points(llr0, llr1, levels):
    """Error pairs of the tests 'decide H1 iff LLR > t' and 'iff LLR >= t'."""
    n0, n1 = llr0.size, llr1.size
    pooled = np.concatenate([llr0, llr1])
    thresholds = np.unique(np.quantile(pooled, np.linspace(0.0, 1.0, levels)))
    t = np.repeat(thresholds, 2)
    strict = np.tile([True, False], thresholds.size)
    # count of samples <= t (strict test) or < t (non-strict test)
    below0 = np.where(strict, np.searchsorted(llr0, t, "right"), np.searchsorted(llr0, t, "left"))
    below1 = np.where(strict, np.searchsorted(llr1, t, "right"), np.searchsorted(llr1, t, "left"))
    fa = (n0 - below0) / n0
    md = below1 / n1
    return t, fa, md


def hoeffding_radius(num_samples: int, num_estimates: int, confidence: float = DEFAULT_CONFIDENCE) -> float:
    """Two-sided Hoeffding radius valid simultaneously for ``num_estimates`` means."""
    alpha = (1.0 - confidence) / max(1, num_estimates)
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * num_samples))


def run_attack(spec: MechanismSpec, claimed: TradeoffCurve, num_samples: int, rng_seed: int,
               levels: int = DEFAULT_LEVELS, confidence: float = DEFAULT_CONFIDENCE) -> AttackReport:
    """Test a claimed tradeoff curve with exact likelihood-ratio tests.

    Draws ``num_samples`` outputs at query values 0 and ``s``, sweeps
    thresholds at empirical LLR quantiles, and flags points where
    ``p_md + r < claimed(min(1, p_fa + r))``.  The Hoeffding radius ``r`` is
    Bonferroni-corrected over all estimates, so a valid claim produces no
    violation with probability at least ``confidence``.
    """
    n = check_positive_int(num_samples, "num_samples")
    if n < 1000:
        raise ValidationError("num_samples must be at least 1000")
    if not isinstance(claimed, TradeoffCurve):
        raise ValidationError("claimed must be a TradeoffCurve")
    llr0, llr1 = _llrs(spec, n, rng_seed)
    t, fa, md = _error_points(llr0, llr1, levels)
    radius = hoeffding_radius(n, 2 * t.size, confidence)
    bound = np.asarray(claimed(np.minimum(1.0, fa + radius)), dtype=float)
    bad = md + radius < bound
    sweep = [(float(a), float(b), float(c), radius) for a, b, c in zip(t, fa, md)]
    violations = [(float(a), float(b), float(c)) for a, b, c in zip(fa[bad], md[bad], bound[bad])]
    return AttackReport(sweep, violations, n, confidence)


def empirical_tradeoff(spec: MechanismSpec, num_samples: int, rng_seed: int,
                       levels: int = DEFAULT_LEVELS) -> TradeoffCurve:
    """Lower convex hull of the empirical (false alarm, missed detection) points."""
    n = check_positive_int(num_samples, "num_samples")
    if n < 1000:
        raise ValidationError("num_samples must be at least 1000")
    llr0, llr1 = _llrs(spec, n, rng_seed)
    _, fa, md = _error_points(llr0, llr1, levels)
    return hull_curve(fa, md, EMPIRICAL, {"num_samples": n})
