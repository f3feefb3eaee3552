"""Hypothesis-testing tradeoff curves.

A tradeoff curve maps a false-alarm probability ``x`` to a lower bound on the
missed-detection probability of any test between the output distributions on
two neighboring datasets.  Here ``H0`` is the output under the first dataset
(the numerator ``P`` of a PLD) and ``H1`` the output under the second.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from . import _io
from ._validation import check_nonnegative, check_positive, check_probability
from .exceptions import ValidationError
from .pld import PrivacyLossDistribution

PIECEWISE_LINEAR = "piecewise_linear"
GAUSSIAN = "gaussian"
FROM_PLD = "from_pld"
EMPIRICAL = "empirical"
TABULATED = "tabulated"
DEFAULT_EXPORT_POINTS = 2048


class TradeoffCurve:
    """A false-alarm to missed-detection lower bound, evaluable pointwise.

    Curves of kind ``from_pld``, ``empirical`` and ``tabulated`` are stored as
    vertices of a piecewise-linear function and evaluated by linear
    interpolation.
    """

    def __init__(self, kind: str, params: Optional[dict] = None, points=None):
        self.kind = kind
        self.params = dict(params or {})
        if points is not None:
            x, y = (np.asarray(a, dtype=float) for a in points)
            if x.shape != y.shape or x.ndim != 1 or x.size < 2:
                raise ValidationError("curve points must be two equal-length vectors")
            order = np.argsort(x, kind="stable")
            points = (x[order], np.clip(y[order], 0.0, 1.0))
        elif kind in (FROM_PLD, EMPIRICAL, TABULATED):
            raise ValidationError(f"a {kind} curve needs points")
        self.points = points

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.kind == PIECEWISE_LINEAR:
            eps, delta = self.params["epsilon"], self.params["delta"]
            a = 1.0 - delta - math.exp(eps) * x
            b = math.exp(-eps) * (1.0 - delta - x)
            y = np.maximum(0.0, np.maximum(a, b))
        elif self.kind == GAUSSIAN:
            y = ndtr(norm.isf(x) - self.params["mu"])
        else:
            y = np.interp(x, *self.points)
        y = np.clip(y, 0.0, 1.0)
        return float(y) if y.ndim == 0 else y

    def grid(self, n: int = DEFAULT_EXPORT_POINTS):
        """Sample the curve on ``n`` equally spaced false-alarm values."""
        x = np.linspace(0.0, 1.0, n)
        return x, np.asarray(self(x), dtype=float)

    def to_csv(self, n: int = DEFAULT_EXPORT_POINTS) -> str:
        x, y = self.grid(n)
        return _io.write_csv(["p_fa", "p_md_lower"], [x, y])

    @classmethod
    def from_csv(cls, text: str) -> "TradeoffCurve":
        cols = _io.read_csv(text)
        if "p_fa" not in cols or "p_md_lower" not in cols:
            raise ValidationError("curve CSV needs columns p_fa,p_md_lower")
        return cls(TABULATED, points=(cols["p_fa"], cols["p_md_lower"]))

    def __repr__(self):
        if self.points is not None:
            return f"TradeoffCurve(kind={self.kind!r}, n_points={self.points[0].size})"
        return f"TradeoffCurve(kind={self.kind!r}, params={self.params!r})"


def dp_tradeoff(epsilon: float, delta: float) -> TradeoffCurve:
    """The (epsilon, delta)-DP curve max(0, 1 - d - e^eps x, e^-eps (1 - d - x))."""
    check_nonnegative(epsilon, "epsilon")
    check_probability(delta, "delta")
    return TradeoffCurve(PIECEWISE_LINEAR, {"epsilon": float(epsilon), "delta": float(delta)})


def gaussian_tradeoff(mu: float) -> TradeoffCurve:
    """Curve of testing N(0, 1) against N(mu, 1): x -> Phi(Phi^-1(1 - x) - mu)."""
    check_positive(mu, "mu")
    return TradeoffCurve(GAUSSIAN, {"mu": float(mu)})


def lower_convex_hull(x, y):
    """Vertices of the lower convex hull of a point cloud, sorted by x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    # keep the lowest y for each distinct x
    keep = np.r_[True, x[1:] != x[:-1]]
    x, y = x[keep], y[keep]
    hx, hy = [], []
    for xi, yi in zip(x, y):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (yi - hy[-2]) - (hy[-1] - hy[-2]) * (xi - hx[-2])
            if cross <= 0:
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(xi)
        hy.append(yi)
    return np.array(hx), np.array(hy)


def hull_curve(fa, md, kind=EMPIRICAL, params=None) -> TradeoffCurve:
    """Lower convex hull of achievable (false alarm, missed detection) points."""
    fa = np.clip(np.r_[np.asarray(fa, float), 0.0, 1.0], 0.0, 1.0)
    md = np.clip(np.r_[np.asarray(md, float), 1.0, 0.0], 0.0, 1.0)
    hx, hy = lower_convex_hull(fa, md)
    # the hull is non-increasing once the minimum is reached at x = 1
    hy = np.minimum.accumulate(hy)
    return TradeoffCurve(kind, params, points=(hx, hy))


def _sweep(pld: PrivacyLossDistribution):
    """Error pairs of the threshold tests 'decide H1 iff L < t' on a PLD.

    Returns false-alarm (numerator mass below t) and missed-detection
    (denominator mass at or above t) for t on every grid point.
    """
    m = pld.masses
    qm = pld.q_masses()
    below_p = np.r_[0.0, np.cumsum(m)]
    above_q = np.r_[np.cumsum(qm[::-1])[::-1], 0.0]
    return below_p, above_q


def tradeoff_from_pld(pld_forward: PrivacyLossDistribution,
                      pld_reverse: Optional[PrivacyLossDistribution] = None) -> TradeoffCurve:
    """Optimal tradeoff curve of a pair given by its forward and reverse PLDs.

    The forward PLD is the loss ``log(p/q)`` under ``p``; the reverse PLD is
    ``log(q/p)`` under ``q``.  Threshold tests on both give achievable error
    pairs; randomizing between adjacent thresholds gives the lower convex hull.
    """
    fa_f, md_f = _sweep(pld_forward)
    fa, md = [fa_f], [md_f]
    if pld_reverse is not None:
        if pld_reverse.grid_spacing <= 0:
            raise ValidationError("invalid reverse PLD")
        # roles of the hypotheses swap: false alarm is numerator-of-reverse mass
        b, a = _sweep(pld_reverse)
        fa.append(a)
        md.append(b)
    return hull_curve(np.concatenate(fa), np.concatenate(md), FROM_PLD,
                      {"grid_spacing": pld_forward.grid_spacing, "pessimistic": pld_forward.pessimistic})


def dominates(lower: TradeoffCurve, upper: TradeoffCurve, grid_points: int = 1001) -> bool:
    """Sampled check that ``upper(x) >= lower(x) - 1e-12`` on ``grid_points`` values.

    This is a finite check on a uniform grid, not a proof of domination.
    """
    if int(grid_points) < 2:
        raise ValidationError("grid_points must be at least 2")
    x = np.linspace(0.0, 1.0, int(grid_points))
    return bool(np.all(np.asarray(upper(x)) >= np.asarray(lower(x)) - 1e-12))
