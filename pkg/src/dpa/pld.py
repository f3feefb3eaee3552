"""Grid-discretized privacy loss distributions.

A privacy loss distribution (PLD) is the law of ``L = log(dP/dQ)(Y)`` with
``Y ~ P``.  Here it is stored on the grid ``{k * h : k integer}`` together with
an atom at ``+inf`` holding the P-mass of events that are impossible under Q.

Discretization works cell by cell.  The cell ``((j - 1) h, j h]`` carries a
P-mass ``m`` and a Q-mass ``q = E_P[exp(-L); cell]``.  Pessimistic rounding
splits ``m`` between the two cell edges so that both ``m`` and ``q`` are kept.
Since ``delta(eps) = E_P[(1 - exp(eps) exp(-L))^+]`` is convex in ``exp(-L)``,
this split can only increase delta, and it is exact when ``eps`` lies on the
grid.  Optimistic rounding subtracts a piecewise-linear correction from the
same split so that the result lower-bounds every distribution with the given
cell masses.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from . import _io
from ._validation import check_prob_vector
from .exceptions import AlphabetMismatch, InfiniteMass, InvalidPolicy, NonIntegrable, ValidationError

PESSIMISTIC = "pessimistic"
OPTIMISTIC = "optimistic"
_ROUNDINGS = (PESSIMISTIC, OPTIMISTIC)

_MASS_TOL = 1e-12
_SNAP_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class DiscretizationPolicy:
    """How a continuous loss distribution is placed on the grid.

    Attributes:
      grid_spacing: Distance between grid points, in nats.
      tail_mass_bound: Total P-mass that may be truncated, split evenly
        between the two tails.
      rounding: ``"pessimistic"`` for upper bounds on delta, ``"optimistic"``
        for lower bounds.
    """

    grid_spacing: float = 1e-4
    tail_mass_bound: float = 1e-10
    rounding: str = PESSIMISTIC

    def __post_init__(self):
        h = self.grid_spacing
        if not isinstance(h, (int, float, np.floating)) or not math.isfinite(h) or h <= 0:
            raise InvalidPolicy(f"grid_spacing must be positive, got {h!r}")
        t = self.tail_mass_bound
        if not isinstance(t, (int, float, np.floating)) or not 0 < t < 1:
            raise InvalidPolicy(f"tail_mass_bound must lie in (0, 1), got {t!r}")
        if self.rounding not in _ROUNDINGS:
            raise InvalidPolicy(f"rounding must be one of {_ROUNDINGS}, got {self.rounding!r}")

    @property
    def pessimistic(self) -> bool:
        return self.rounding == PESSIMISTIC

    def replace(self, **changes) -> "DiscretizationPolicy":
        return dataclasses.replace(self, **changes)


DEFAULT_POLICY = DiscretizationPolicy()


@dataclasses.dataclass(frozen=True, eq=False)
class PrivacyLossDistribution:
    """Discrete privacy loss distribution on an integer grid.

    Attributes:
      grid_spacing: Grid step in nats.
      min_index: Index of the first cell; cell ``i`` has loss
        ``(min_index + i) * grid_spacing``.
      masses: P-probabilities of the finite grid losses.
      infinity_mass: P-probability that the loss is ``+inf``.
      pessimistic: Whether derived deltas are upper (True) or lower bounds.
    """

    grid_spacing: float
    min_index: int
    masses: np.ndarray
    infinity_mass: float = 0.0
    pessimistic: bool = True

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float, copy=True).reshape(-1)
        if masses.size == 0:
            masses = np.zeros(1)
        if not (math.isfinite(self.grid_spacing) and self.grid_spacing > 0):
            raise ValidationError("grid_spacing must be positive")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise ValidationError("masses must be finite and non-negative")
        inf = float(self.infinity_mass)
        if not 0 <= inf <= 1 + _MASS_TOL:
            raise ValidationError(f"infinity_mass must lie in [0, 1], got {inf!r}")
        total = math.fsum(masses) + inf
        if abs(total - 1.0) > _MASS_TOL:
            raise ValidationError(f"total mass must be 1, got {total!r}")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "infinity_mass", min(inf, 1.0))
        object.__setattr__(self, "min_index", int(self.min_index))
        object.__setattr__(self, "grid_spacing", float(self.grid_spacing))
        object.__setattr__(self, "pessimistic", bool(self.pessimistic))

    @property
    def max_index(self) -> int:
        return self.min_index + self.masses.size - 1

    @property
    def losses(self) -> np.ndarray:
        return (self.min_index + np.arange(self.masses.size)) * self.grid_spacing

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses) + self.infinity_mass

    def q_masses(self) -> np.ndarray:
        """Q-probabilities of the grid losses, ``masses * exp(-loss)``."""
        with np.errstate(over="ignore"):
            return self.masses * np.exp(-self.losses)

    def trimmed(self) -> "PrivacyLossDistribution":
        """Drop zero cells at both ends."""
        nz = np.flatnonzero(self.masses)
        if nz.size == 0:
            return dataclasses.replace(self, min_index=0, masses=np.zeros(1))
        return dataclasses.replace(
            self, min_index=self.min_index + nz[0], masses=self.masses[nz[0]:nz[-1] + 1]
        )

    def to_dict(self) -> dict:
        return {
            "grid_spacing": self.grid_spacing,
            "min_index": self.min_index,
            "masses": self.masses,
            "infinity_mass": self.infinity_mass,
            "pessimistic": self.pessimistic,
        }

    def to_json(self) -> str:
        return _io.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PrivacyLossDistribution":
        try:
            return cls(
                grid_spacing=float(d["grid_spacing"]),
                min_index=int(d["min_index"]),
                masses=np.asarray(d["masses"], dtype=float),
                infinity_mass=float(d["infinity_mass"]),
                pessimistic=bool(d["pessimistic"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed PLD record: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "PrivacyLossDistribution":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, PrivacyLossDistribution):
            return NotImplemented
        return (
            self.grid_spacing == other.grid_spacing
            and self.min_index == other.min_index
            and self.infinity_mass == other.infinity_mass
            and self.pessimistic == other.pessimistic
            and np.array_equal(self.masses, other.masses)
        )

    def __repr__(self):
        return (
            f"PrivacyLossDistribution(grid_spacing={self.grid_spacing!r}, "
            f"min_index={self.min_index}, n_cells={self.masses.size}, "
            f"infinity_mass={self.infinity_mass!r}, pessimistic={self.pessimistic})"
        )


def identity_pld(grid_spacing: float = DEFAULT_POLICY.grid_spacing, pessimistic: bool = True):
    """PLD of a mechanism that reveals nothing: a point mass at zero loss."""
    return PrivacyLossDistribution(grid_spacing, 0, np.ones(1), 0.0, pessimistic)


# --------------------------------------------------------------------------
# rounding core


def _round_cells(h, j0, m, q, pessimistic):
    """Place cell masses on the grid.

    Cell ``j0 + c`` spans losses ``((j0 + c - 1) h, (j0 + c) h]`` and holds
    P-mass ``m[c]`` and Q-mass ``q[c]``.  Returns masses on the grid indices
    ``j0 - 1 .. j0 + len(m) - 1``.
    """
    n = m.size
    out = np.zeros(n + 1)
    if n == 0:
        return out
    j = j0 + np.arange(n)
    u_hi = np.exp(-(j - 1) * h)
    du = u_hi * -math.expm1(-h)
    # A = E_P[u_hi - U], B = E_P[U - u_lo] over the cell
    a = np.clip(m * u_hi - q, 0.0, None)
    a = np.minimum(a, m * du)
    b = m * du - a
    with np.errstate(invalid="ignore", divide="ignore"):
        w_top = np.where(m > 0, a / du, 0.0)
    w_top = np.minimum(w_top, m)
    out[1:] += w_top
    out[:-1] += m - w_top
    if pessimistic:
        return out
    # Optimistic: subtract a convex-preserving piecewise-linear correction e(u)
    # that covers the largest possible deficit inside each cell.
    e = np.zeros(n + 1)  # e at grid points, index aligned with ``out``
    e_prev = 0.0
    for c in range(n - 1, -1, -1):
        e[c + 1] = e_prev
        ac, bc = a[c], b[c]
        if ac > 0 and bc > 0:
            tot = ac + bc
            peak = ac * bc / tot
            if peak > e_prev:
                e_prev = e_prev + (peak - e_prev) * tot / bc
        e[c] = e_prev
    slope = (e[:-1] - e[1:]) / du  # slope of e on each cell, in u
    kink = np.zeros(n + 1)
    kink[1:] += slope
    kink[:-1] -= slope
    res = out - kink
    res = np.clip(res, 0.0, None)
    tot = res.sum()
    if tot > 0:
        res *= out.sum() / tot
    return res


def _snap(loss, h):
    k = round(loss / h)
    if abs(loss - k * h) <= _SNAP_TOL * h:
        return k
    return None


def _assemble(h, lo_idx, hi_idx, cell_m, cell_q, policy, atoms=(), infinity_mass=0.0,
              below=0.0, above=0.0):
    """Build a PLD from per-cell masses plus atoms and truncated tails.

    ``cell_m``/``cell_q`` describe cells ``lo_idx + 1 .. hi_idx``; the grid
    therefore spans indices ``lo_idx .. hi_idx``.  ``below``/``above`` are the
    finite-loss P-masses that fall outside the grid.
    """
    cell_m = np.asarray(cell_m, dtype=float).copy()
    cell_q = np.asarray(cell_q, dtype=float).copy()
    grid_atoms = np.zeros(hi_idx - lo_idx + 1)
    for loss, mass in atoms:
        if mass <= 0:
            continue
        if loss == math.inf:
            infinity_mass += mass
            continue
        k = _snap(loss, h)
        if k is not None and lo_idx <= k <= hi_idx:
            grid_atoms[k - lo_idx] += mass
        elif loss < lo_idx * h:
            below += mass
        elif loss > hi_idx * h:
            above += mass
        else:
            c = min(max(int(math.ceil(loss / h)) - lo_idx - 1, 0), cell_m.size - 1)
            cell_m[c] += mass
            cell_q[c] += mass * math.exp(-loss)
    masses = _round_cells(h, lo_idx + 1, cell_m, cell_q, policy.pessimistic) + grid_atoms
    masses[0] += below
    if policy.pessimistic:
        infinity_mass += above
    else:
        masses[-1] += above
    inf = min(max(infinity_mass, 0.0), 1.0)
    # absorb floating-point drift so that the total is exactly one
    total = math.fsum(masses)
    if total > 0:
        masses *= (1.0 - inf) / total
    return PrivacyLossDistribution(h, lo_idx, masses, inf, policy.pessimistic).trimmed()


def _outer_nats(lo, hi, h):
    """Grid indices of the loss range rounded outward to whole nats."""
    lo_n = math.floor(lo)
    hi_n = math.ceil(hi)
    if hi_n <= lo_n:
        hi_n = lo_n + 1
    lo_idx = int(math.floor(lo_n / h + 1e-9))
    hi_idx = int(math.ceil(hi_n / h - 1e-9))
    return lo_idx, hi_idx


def pld_from_cdfs(p_le: Callable, q_le: Callable, p_gt: Callable, q_gt: Callable,
                  support: Tuple[float, float], policy: DiscretizationPolicy = DEFAULT_POLICY,
                  atoms: Iterable[Tuple[float, float]] = (), infinity_mass: float = 0.0,
                  upper_tail_bound: Optional[float] = None):
    """Discretize a loss distribution given by its P and Q distribution functions.

    ``p_le(x)`` must return ``P(L <= x)`` for the continuous part and
    ``p_gt(x)`` its complement ``P(L > x)`` (again for the continuous part);
    likewise for Q.  Both are vectorised over ``x``.  Supplying the
    complements separately keeps small tail probabilities accurate.

    ``support`` is a loss interval outside of which the continuous part is
    negligible; the grid is cut where the tail masses drop below the
    policy's bound.  ``upper_tail_bound`` overrides the bound for the upper
    tail; passing 0 keeps every cell with positive mass so that no +inf atom
    is created by truncation.
    """
    h = policy.grid_spacing
    half_tail = policy.tail_mass_bound / 2
    upper_tail = half_tail if upper_tail_bound is None else upper_tail_bound
    lo, hi = support
    lo_idx, hi_idx = _outer_nats(lo, hi, h)
    # shrink to the tail bound, on whole-nat boundaries
    nat = int(round(1 / h)) if abs(1 / h - round(1 / h)) < 1e-9 else None
    if nat:
        while hi_idx - lo_idx > nat and float(p_le((lo_idx + nat) * h)) <= half_tail:
            lo_idx += nat
        while hi_idx - lo_idx > nat and float(p_gt((hi_idx - nat) * h)) <= upper_tail:
            hi_idx -= nat
    edges = np.arange(lo_idx, hi_idx + 1) * h
    pl, pg = np.asarray(p_le(edges), float), np.asarray(p_gt(edges), float)
    ql, qg = np.asarray(q_le(edges), float), np.asarray(q_gt(edges), float)
    # difference whichever side is smaller for accuracy
    use_le = pl[1:] <= pg[:-1]
    cell_m = np.where(use_le, pl[1:] - pl[:-1], pg[:-1] - pg[1:])
    use_le_q = ql[1:] <= qg[:-1]
    cell_q = np.where(use_le_q, ql[1:] - ql[:-1], qg[:-1] - qg[1:])
    cell_m = np.clip(cell_m, 0.0, None)
    cell_q = np.clip(cell_q, 0.0, None)
    below, above = max(float(pl[0]), 0.0), max(float(pg[-1]), 0.0)
    return _assemble(h, lo_idx, hi_idx, cell_m, cell_q, policy, atoms, infinity_mass, below, above)


_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)


def _gl_cells(f, a, b, rule):
    x, w = rule
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel()), float).reshape(pts.shape)
    return half * (vals @ w), half * ((vals * np.exp(-pts)) @ w)


def _find_support(f, tail):
    def mass(a, b):
        return integrate.quad(f, a, b, limit=200)[0]

    lo, hi = -1.0, 1.0
    for _ in range(12):
        if mass(-np.inf, lo) <= tail:
            break
        lo *= 2
    for _ in range(12):
        if mass(hi, np.inf) <= tail:
            break
        hi *= 2
    return lo, hi


def discretize_pld(loss_density: Optional[Callable], policy: DiscretizationPolicy = DEFAULT_POLICY,
                   support: Optional[Tuple[float, float]] = None,
                   atoms: Iterable[Tuple[float, float]] = (), tol: float = 1e-10):
    """Discretize a privacy loss distribution given by its P-density.

    Args:
      loss_density: Vectorised density of L under P, or None when the loss
        consists of ``atoms`` only.  Its integral plus the atom masses may be
        below one; the remainder becomes the ``+inf`` atom.
      policy: Grid spacing, tail bound and rounding direction.
      support: Interval containing all but a negligible part of the density.
        Located numerically when omitted.
      atoms: ``(loss, P-mass)`` pairs; ``loss`` may be ``inf``.
      tol: Absolute tolerance on the total integrated mass.

    Returns:
      The discretized PrivacyLossDistribution.

    Raises:
      NonIntegrable: Quadrature does not reach ``tol``.
      InvalidPolicy: ``policy`` is not a DiscretizationPolicy.
    """
    if not isinstance(policy, DiscretizationPolicy):
        raise InvalidPolicy("policy must be a DiscretizationPolicy")
    atoms = [(float(l), float(m)) for l, m in atoms]
    h = policy.grid_spacing
    if loss_density is None:
        finite = [l for l, m in atoms if math.isfinite(l) and m > 0] or [0.0]
        lo_idx, hi_idx = _outer_nats(min(finite), max(finite), h)
        n = hi_idx - lo_idx
        total_atoms = math.fsum(m for _, m in atoms)
        if total_atoms > 1 + _MASS_TOL:
            raise ValidationError("atom masses exceed one")
        return _assemble(h, lo_idx, hi_idx, np.zeros(n), np.zeros(n), policy, atoms,
                         max(0.0, 1.0 - total_atoms))
    f = loss_density
    if support is None:
        support = _find_support(f, policy.tail_mass_bound / 4)
    lo, hi = float(support[0]), float(support[1])
    finite = [l for l, m in atoms if math.isfinite(l)]
    lo_idx, hi_idx = _outer_nats(min([lo] + finite), max([hi] + finite), h)
    edges = np.arange(lo_idx, hi_idx + 1) * h
    a, b = edges[:-1], edges[1:]
    m8, q8 = _gl_cells(f, a, b, _GL8)
    m16, q16 = _gl_cells(f, a, b, _GL16)
    bad = np.abs(m8 - m16) > tol * max(h, 1e-3)
    for c in np.flatnonzero(bad):
        vm, em = integrate.quad(f, a[c], b[c], limit=200, epsabs=tol * 1e-2)
        vq, _ = integrate.quad(lambda x: f(x) * math.exp(-x), a[c], b[c], limit=200, epsabs=tol * 1e-2)
        if em > tol:
            raise NonIntegrable(f"cell ({a[c]}, {b[c]}] did not converge (error {em:.2e})")
        m16[c], q16[c] = vm, vq
    cell_m = np.clip(m16, 0.0, None)
    cell_q = np.clip(q16, 0.0, None)
    inside = math.fsum(cell_m)
    outside_lo = integrate.quad(f, -np.inf, a[0])[0] if np.isfinite(a[0]) else 0.0
    outside_hi = integrate.quad(f, b[-1], np.inf)[0]
    total = inside + outside_lo + outside_hi + math.fsum(m for _, m in atoms)
    if total > 1 + 1e-6:
        raise NonIntegrable(f"loss density integrates to {total!r} > 1")
    inf_mass = max(0.0, 1.0 - total)
    # truncate tails to the policy bound on whole-nat boundaries
    nat = int(round(1 / h)) if abs(1 / h - round(1 / h)) < 1e-9 else None
    below, above = max(outside_lo, 0.0), max(outside_hi, 0.0)
    if nat:
        half_tail = policy.tail_mass_bound / 2
        cum_lo = below + np.concatenate([[0.0], np.cumsum(cell_m)])
        cum_hi = above + np.concatenate([np.cumsum(cell_m[::-1])[::-1], [0.0]])
        k_lo = 0
        while k_lo + nat < cell_m.size and cum_lo[k_lo + nat] <= half_tail:
            k_lo += nat
        k_hi = cell_m.size
        while k_hi - nat > k_lo and cum_hi[k_hi - nat] <= half_tail:
            k_hi -= nat
        below, above = cum_lo[k_lo], cum_hi[k_hi]
        cell_m, cell_q = cell_m[k_lo:k_hi], cell_q[k_lo:k_hi]
        hi_idx = lo_idx + k_hi
        lo_idx = lo_idx + k_lo
    return _assemble(h, lo_idx, hi_idx, cell_m, cell_q, policy, atoms, inf_mass, below, above)


def pld_from_discrete_pair(p: Sequence[float], q: Sequence[float],
                           policy: DiscretizationPolicy = DEFAULT_POLICY):
    """PLD of a pair of distributions on a common finite alphabet.

    Outcomes with ``q = 0 < p`` go to the ``+inf`` atom; outcomes with
    ``p = 0`` carry no P-mass and are dropped.

    Raises:
      AlphabetMismatch: ``p`` and ``q`` have different lengths.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != q.shape:
        raise AlphabetMismatch(f"alphabets differ in size: {p.size} vs {q.size}")
    p = check_prob_vector(p, "p")
    q = check_prob_vector(q, "q")
    atoms = []
    for pi, qi in zip(p, q):
        if pi <= 0:
            continue
        atoms.append((math.inf if qi <= 0 else math.log(pi / qi), pi))
    return discretize_pld(None, policy, atoms=atoms)


def pld_moments(pld: PrivacyLossDistribution):
    """Mean, variance and third absolute central moment of the finite losses.

    Raises:
      InfiniteMass: ``pld.infinity_mass > 0``.
    """
    if pld.infinity_mass > 0:
        raise InfiniteMass("moments are undefined with an atom at +inf")
    x = pld.losses
    w = pld.masses / math.fsum(pld.masses)
    mean = float(w @ x)
    d = x - mean
    return mean, float(w @ d ** 2), float(w @ np.abs(d) ** 3)
