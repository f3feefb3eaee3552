"""Noise design: staircase parameter search, the minimax-KL (Cactus) program
and the ground-state (Schrodinger) problem.

All three return scalar additive noise.  ``NoiseDistribution`` stores noise
as a symmetric histogram: cell ``i`` is ``[(i - 1/2) h, (i + 1/2) h]`` with
mass ``core_masses[i + N]`` for ``|i| <= N``, and cells beyond ``N`` continue
with masses ``core_masses[0] * r**j`` (geometric tails with ratio ``r``).
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import optimize as sopt

from . import _io
from ._validation import check_positive
from .exceptions import BoundaryTooSmall, Infeasible, NoGroundState, NotConverged, ValidationError
from .mechanisms import staircase_cost, staircase
from .pld import DEFAULT_POLICY, DiscretizationPolicy, PrivacyLossDistribution, discretize_pld

_GL = np.polynomial.legendre.leggauss(8)


@dataclasses.dataclass(frozen=True)
class CostSpec:
    """An even, non-negative cost with ``c(0) = 0`` and a budget ``C``."""

    cost_function: Callable
    budget: float
    name: str = "custom"

    def __post_init__(self):
        check_positive(self.budget, "budget")
        if not callable(self.cost_function):
            raise ValidationError("cost_function must be callable")

    def __call__(self, z):
        return np.asarray(self.cost_function(np.asarray(z, dtype=float)), dtype=float)

    def cell_average(self, centers, width):
        """Mean cost over cells ``[c - w/2, c + w/2]`` (8-point Gauss-Legendre)."""
        x, w = _GL
        centers = np.asarray(centers, dtype=float)
        pts = centers[..., None] + 0.5 * width * x
        return 0.5 * (self(pts) @ w)


def quadratic_cost(budget: float) -> CostSpec:
    return CostSpec(lambda z: z * z, budget, "quadratic")


def absolute_cost(budget: float) -> CostSpec:
    return CostSpec(np.abs, budget, "absolute")


def cost_from_name(name: str, budget: float) -> CostSpec:
    if name in ("quad", "quadratic"):
        return quadratic_cost(budget)
    if name in ("abs", "absolute"):
        return absolute_cost(budget)
    raise ValidationError(f"unknown cost {name!r}; expected quad or abs")


# --------------------------------------------------------------------------
# noise distribution


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseDistribution:
    """Symmetric histogram noise with geometric tails.

    Attributes:
      grid_spacing: Cell width ``h``.
      core_masses: Masses of cells ``-N .. N`` (length ``2N + 1``), symmetric.
      tail_decay_rate: Ratio ``r`` between consecutive tail cells.
    """

    grid_spacing: float
    core_masses: np.ndarray
    tail_decay_rate: float

    def __post_init__(self):
        m = np.array(self.core_masses, dtype=float, copy=True).reshape(-1)
        check_positive(self.grid_spacing, "grid_spacing")
        if m.size % 2 != 1:
            raise ValidationError("core_masses must have odd length 2N + 1")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValidationError("core_masses must be finite and non-negative")
        if not np.allclose(m, m[::-1], rtol=1e-9, atol=1e-300):
            raise ValidationError("core_masses must be symmetric")
        r = float(self.tail_decay_rate)
        if not 0 < r < 1:
            raise ValidationError("tail_decay_rate must lie in (0, 1)")
        m = 0.5 * (m + m[::-1])
        total = math.fsum(m) + 2 * m[-1] * r / (1 - r)
        if abs(total - 1) > 1e-10:
            raise ValidationError(f"noise must have total mass 1, got {total!r}")
        m.setflags(write=False)
        object.__setattr__(self, "core_masses", m)
        object.__setattr__(self, "tail_decay_rate", r)
        object.__setattr__(self, "grid_spacing", float(self.grid_spacing))

    @property
    def half_width(self) -> int:
        return (self.core_masses.size - 1) // 2

    @property
    def z_max(self) -> float:
        return self.half_width * self.grid_spacing

    @property
    def centers(self) -> np.ndarray:
        n = self.half_width
        return np.arange(-n, n + 1) * self.grid_spacing

    def tail_cells(self, tol=1e-300):
        """Number of tail cells per side until the cell mass falls below ``tol``."""
        edge = self.core_masses[-1]
        if edge <= tol:
            return 0
        return int(math.ceil(math.log(tol / edge) / math.log(self.tail_decay_rate)))

    def extended(self, extra: int) -> np.ndarray:
        """Masses on cells ``-N - extra .. N + extra`` including tail cells."""
        r = self.tail_decay_rate
        t = self.core_masses[-1] * r ** np.arange(1, extra + 1)
        return np.concatenate([t[::-1], self.core_masses, t])

    def density(self, z):
        """Piecewise-constant density."""
        z = np.asarray(z, dtype=float)
        h, n = self.grid_spacing, self.half_width
        i = np.rint(z / h).astype(np.int64)
        a = np.abs(i)
        core = self.core_masses[np.clip(i + n, 0, 2 * n)]
        tail = self.core_masses[-1] * self.tail_decay_rate ** np.clip(a - n, 0, None)
        return np.where(a <= n, core, tail) / h

    def expected_cost(self, cost) -> float:
        """E[c(Z)] with the cost averaged exactly over each histogram cell."""
        if not isinstance(cost, CostSpec):
            cost = CostSpec(cost, 1.0)
        h, n = self.grid_spacing, self.half_width
        core = math.fsum(self.core_masses * cost.cell_average(self.centers, h))
        extra = min(self.tail_cells(1e-30), 10 ** 7)
        if extra == 0:
            return core
        j = np.arange(1, extra + 1)
        tail_m = self.core_masses[-1] * self.tail_decay_rate ** j
        tail = 2 * math.fsum(tail_m * cost.cell_average((n + j) * h, h))
        return core + tail

    def second_moment(self) -> float:
        return self.expected_cost(quadratic_cost(1.0))

    def shifted_kl(self, shift_cells: int) -> float:
        """KL(Z || Z + a) for a shift of ``shift_cells`` cells (exact, tails included)."""
        m = int(shift_cells)
        if m == 0:
            return 0.0
        n, r = self.half_width, self.tail_decay_rate
        ext = self.extended(abs(m))
        # numerator cells -N .. N + m against denominator cells -N - m .. N
        p = ext[abs(m):]
        q = ext[:ext.size - abs(m)]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * np.log(p / q), 0.0)
        lr = -math.log(r)
        edge = self.core_masses[-1]
        # left tail (i < -N): ratio r^-m; right tail beyond N + m: ratio r^m
        left = edge * r / (1 - r) * m * lr
        right = -edge * r ** (m + 1) / (1 - r) * m * lr
        return math.fsum(terms) + left + right

    def pld(self, sensitivity: float, policy: DiscretizationPolicy = DEFAULT_POLICY) -> PrivacyLossDistribution:
        """PLD of the pair (Z, Z + s); ``s`` must be a whole number of cells."""
        h, n, r = self.grid_spacing, self.half_width, self.tail_decay_rate
        m = int(round(sensitivity / h))
        if m < 1 or abs(m * h - sensitivity) > 1e-9 * h:
            raise ValidationError("sensitivity must be a positive multiple of grid_spacing")
        ext = self.extended(m)
        p, q = ext[m:], ext[:-m]
        keep = p > 0
        with np.errstate(divide="ignore"):
            losses = np.where(q[keep] > 0, np.log(p[keep]) - np.log(np.where(q[keep] > 0, q[keep], 1.0)), np.inf)
        atoms = list(zip(losses.tolist(), p[keep].tolist()))
        edge, lr = self.core_masses[-1], -math.log(r)
        atoms.append((m * lr, edge * r / (1 - r)))
        atoms.append((-m * lr, edge * r ** (m + 1) / (1 - r)))
        return discretize_pld(None, policy, atoms=atoms)

    def sample(self, rng: np.random.Generator, size=None):
        """Draw from the histogram (uniform within the chosen cell)."""
        n_draw = 1 if size is None else int(np.prod(size))
        h, n, r = self.grid_spacing, self.half_width, self.tail_decay_rate
        edge = self.core_masses[-1]
        tail_mass = edge * r / (1 - r)
        probs = np.concatenate([[tail_mass], self.core_masses, [tail_mass]])
        probs = probs / probs.sum()
        cell = rng.choice(probs.size, size=n_draw, p=probs)
        idx = cell.astype(np.int64) - 1 - n
        # geometric offsets for tail cells
        depth = rng.geometric(1 - r, size=n_draw)
        idx = np.where(cell == 0, -n - depth, np.where(cell == probs.size - 1, n + depth, idx))
        z = (idx + rng.random(n_draw) - 0.5) * h
        return z[0] if size is None else z.reshape(size)

    def to_dict(self):
        return {"grid_spacing": self.grid_spacing, "core_masses": self.core_masses,
                "tail_decay_rate": self.tail_decay_rate}

    def to_json(self):
        return _io.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(float(d["grid_spacing"]), np.asarray(d["core_masses"], float), float(d["tail_decay_rate"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed noise record: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# staircase


def fit_staircase(epsilon: float, sensitivity: float, cost="quadratic", tol: float = 1e-9):
    """Choose the staircase band width eta in [0, s] minimizing expected cost at fixed epsilon.

    Golden-section search on the band-exact cost.

    Returns:
      ``(eta, expected_cost)``.
    """
    check_positive(epsilon, "epsilon")
    s = check_positive(sensitivity, "sensitivity")
    if isinstance(cost, CostSpec):
        cost = cost.cost_function
    f = lambda eta: staircase_cost(epsilon, eta, s, cost)
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = 0.0, s
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    candidates = [(f(x), x) for x in (0.5 * (a + b), 0.0, s)]
    best_cost, eta = min(candidates)
    return eta, best_cost


def staircase_spec(epsilon, sensitivity, cost="quadratic"):
    eta, _ = fit_staircase(epsilon, sensitivity, cost)
    return staircase(epsilon, eta, sensitivity)


# --------------------------------------------------------------------------
# cactus


class _ShiftKL:
    """Worst-shift KL machinery for symmetric histogram noise.

    The variables are ``x_0 .. x_N`` (mass of cells +-i).  ``A`` maps them to
    masses on the extended cells ``-N - M .. N + M``.
    """

    def __init__(self, n, m_max, r):
        self.n, self.m_max, self.r = n, m_max, r
        ext = np.arange(-n - m_max, n + m_max + 1)
        a = np.abs(ext)
        coef = np.where(a <= n, 1.0, r ** np.clip(a - n, 0, None))
        self.size = ext.size
        self.off = n + m_max
        self.A = sp.csr_matrix((coef, (np.arange(ext.size), np.minimum(a, n))), shape=(ext.size, n + 1))
        ms = np.arange(1, m_max + 1)
        self.ms = ms
        lr = -math.log(r)
        self.tailk = ms * lr * r * (1 - r ** ms) / (1 - r)
        num, den, seg = [], [], []
        for k, m in enumerate(ms):
            i = np.arange(self.off - n, self.off + n + m + 1)
            num.append(i)
            den.append(i - m)
            seg.append(np.full(i.size, k))
        self.num = np.concatenate(num)
        self.den = np.concatenate(den)
        self.seg = np.concatenate(seg)

    def values(self, x):
        P = self.A @ x
        if np.any(P <= 0):
            return None
        lP = np.log(P)
        d = lP[self.num] - lP[self.den]
        kl = np.bincount(self.seg, P[self.num] * d, minlength=self.ms.size) + self.tailk * x[-1]
        return kl, P, d

    def derivatives(self, x, weights):
        kl, P, d = self.values(x)
        M = self.ms.size
        gP = sp.csr_matrix(
            (np.concatenate([d + 1, -np.exp(d)]),
             (np.concatenate([self.seg, self.seg]), np.concatenate([self.num, self.den]))),
            shape=(M, self.size))
        G = np.asarray((gP @ self.A).todense())
        G[:, -1] += self.tailk
        w = weights[self.seg]
        Pi, Pd = P[self.num], P[self.den]
        H = sp.csr_matrix(
            (np.concatenate([w / Pi, w * Pi / Pd ** 2, -w / Pd, -w / Pd]),
             (np.concatenate([self.num, self.den, self.num, self.den]),
              np.concatenate([self.num, self.den, self.den, self.num]))),
            shape=(self.size, self.size))
        HP = np.asarray((self.A.T @ H @ self.A).todense())
        return kl, G, HP


def _noise_from_half(x, h, r):
    core = np.concatenate([x[:0:-1], x])
    total = math.fsum(core) + 2 * core[-1] * r / (1 - r)
    return NoiseDistribution(h, core / total, r)


def solve_cactus(sensitivity: float, cost: CostSpec, z_max: float = 6.0, spacing: float = 0.01,
                 tolerance: float = 1e-9, tail_decay_rate: Optional[float] = None,
                 max_iter: int = 5000) -> Tuple[NoiseDistribution, float]:
    """Minimize the worst-shift KL divergence of symmetric noise under a cost budget.

    Solves ``min_p max_{a in {h, 2h, .., s}} KL(p || p(. - a))`` subject to
    ``E[c(Z)] <= C`` over histogram noise on ``[-z_max, z_max]`` with
    geometric tails, as an epigraph program with a primal-dual interior-point
    method.  The tail contribution to every shifted KL is included exactly.

    Args:
      sensitivity: Shift bound ``s``; must be a multiple of ``spacing``.
      cost: Cost function and budget.
      z_max: Half-width of the explicit grid; at least ``5 max(sqrt(C), s)``.
      spacing: Histogram cell width.
      tolerance: Target duality gap on the objective.
      tail_decay_rate: Tail ratio; defaults to ``exp(-spacing)``.
      max_iter: Iteration cap.

    Returns:
      ``(noise, objective)`` with ``objective`` the worst-shift KL of ``noise``.

    Raises:
      NotConverged: Iteration cap reached; ``best`` holds the last feasible
        ``(noise, objective)``.
    """
    s = check_positive(sensitivity, "sensitivity")
    h = check_positive(spacing, "spacing")
    check_positive(z_max, "z_max")
    if not isinstance(cost, CostSpec):
        raise ValidationError("cost must be a CostSpec")
    m_max = int(round(s / h))
    if m_max < 1 or abs(m_max * h - s) > 1e-9 * h:
        raise ValidationError("sensitivity must be a positive multiple of spacing")
    if z_max < 5 * max(math.sqrt(cost.budget), s) - 1e-12:
        raise BoundaryTooSmall("z_max must be at least 5 max(sqrt(C), s)")
    r = math.exp(-h) if tail_decay_rate is None else float(tail_decay_rate)
    if not 0 < r < 1:
        raise ValidationError("tail_decay_rate must lie in (0, 1)")
    C = cost.budget
    n = int(round(z_max / h))
    z = np.arange(n + 1) * h
    # normalization and cost vectors for the half variables x_0 .. x_n
    norm_vec = np.r_[1.0, 2.0 * np.ones(n)]
    norm_vec[-1] += 2 * r / (1 - r)
    w = cost.cell_average(z, h)
    if w[0] > C:
        raise Infeasible("the cost budget is below the cost of the central cell")
    w[1:] *= 2
    j = np.arange(1, max(1, int(math.ceil(math.log(1e-30) / math.log(r)))) + 1)
    w[-1] += 2 * math.fsum(r ** j * cost.cell_average((n + j) * h, h))
    kl = _ShiftKL(n, m_max, r)

    # strictly feasible start: Gibbs-like profile shrunk until under budget
    c_z = cost(z)
    temp = 0.7 * C
    for _ in range(200):
        x = np.exp(-c_z / (2 * temp)) + 1e-6 * np.exp(-z)
        x /= norm_vec @ x
        if w @ x < C:
            break
        temp *= 0.9
    else:
        raise Infeasible("could not find a strictly feasible starting point")
    t = kl.values(x)[0].max() + 1.0
    nx, ny, mc = n + 1, n + 2, m_max + 1
    c_obj = np.zeros(ny)
    c_obj[-1] = 1.0
    aeq = np.r_[norm_vec, 0.0]

    def constraints(x, t):
        v = kl.values(x)
        if v is None:
            return None
        return np.r_[v[0] - t, w @ x - C]

    def jacobian(G):
        Df = np.zeros((mc, ny))
        Df[:m_max, :nx] = G
        Df[:m_max, nx] = -1.0
        Df[m_max, :nx] = w
        return Df

    def residual(x, t, lam, nu, tau):
        f = constraints(x, t)
        kv, G, _ = kl.derivatives(x, lam[:m_max])
        Df = jacobian(G)
        rd = c_obj + Df.T @ lam + aeq * nu
        rc = -lam * f - 1 / tau
        rp = norm_vec @ x - 1
        return math.sqrt(rd @ rd + rc @ rc + rp * rp)

    f = constraints(x, t)
    lam = -1.0 / f
    nu = 0.0
    mu = 10.0
    best = None
    for it in range(max_iter):
        kv, G, HP = kl.derivatives(x, lam[:m_max])
        f = np.r_[kv - t, w @ x - C]
        Df = jacobian(G)
        gap = -(f @ lam)
        tau = mu * mc / gap
        rd = c_obj + Df.T @ lam + aeq * nu
        rc = -lam * f - 1 / tau
        rp = norm_vec @ x - 1
        best = (x, float(kv.max()))
        if gap < tolerance and np.linalg.norm(rd) < 1e-6 and abs(rp) < 1e-12:
            break
        Hpd = np.zeros((ny, ny))
        Hpd[:nx, :nx] = HP
        Hpd += (Df.T * (-lam / f)) @ Df
        rhs = -rd - Df.T @ (rc / f)
        K = np.zeros((ny + 1, ny + 1))
        K[:ny, :ny] = Hpd
        K[:ny, ny] = aeq
        K[ny, :ny] = aeq
        # symmetric diagonal scaling before the solve
        sc = np.r_[1 / np.sqrt(np.maximum(np.diag(Hpd), 1e-300)), 1.0]
        sol = sc * np.linalg.solve(sc[:, None] * K * sc[None, :], sc * np.r_[rhs, -rp])
        dy, dnu = sol[:ny], sol[ny]
        dlam = (rc - lam * (Df @ dy)) / f
        neg = dlam < 0
        step = min(1.0, 0.99 * float(np.min(-lam[neg] / dlam[neg]))) if neg.any() else 1.0
        r0 = math.sqrt(rd @ rd + rc @ rc + rp * rp)
        while step > 1e-14:
            xn, tn = x + step * dy[:nx], t + step * dy[nx]
            if np.all(xn > 0):
                fn = constraints(xn, tn)
                if fn is not None and np.all(fn < 0):
                    if residual(xn, tn, lam + step * dlam, nu + step * dnu, tau) <= (1 - 0.01 * step) * r0:
                        break
            step *= 0.5
        if step <= 1e-14:
            noise = _noise_from_half(best[0], h, r)
            raise NotConverged("line search failed", best=(noise, best[1]))
        x, t, lam, nu = xn, tn, lam + step * dlam, nu + step * dnu
    else:
        noise = _noise_from_half(best[0], h, r)
        raise NotConverged(f"no convergence in {max_iter} iterations", best=(noise, best[1]))
    noise = _noise_from_half(x, h, r)
    objective = max(noise.shifted_kl(m) for m in range(1, m_max + 1))
    return noise, objective


# --------------------------------------------------------------------------
# schrodinger


def _shoot(f_base, energy, h, monotone):
    """Integrate y'' = (f_base - E) y outward from y(0) = 1, y'(0) = 0.

    Returns True when y changes sign.  With a non-decreasing cost the run
    stops early once y grows inside the forbidden region, where no node can
    follow.
    """
    k = h * h / 12.0
    f = (f_base - energy).tolist()
    y0 = 1.0
    # even Taylor start: y(h) = 1 + h^2 f0 / 2 + h^4 (f0^2 + f0'') / 24
    y1 = 1 + 0.5 * h * h * f[0] + h ** 4 * f[0] ** 2 / 24 + h * h * (f[1] - f[0]) / 12
    for i in range(1, len(f) - 1):
        y2 = (2 * (1 + 5 * k * f[i]) * y1 - (1 - k * f[i - 1]) * y0) / (1 - k * f[i + 1])
        if y2 <= 0:
            return True
        if monotone and y2 > y1 and f[i + 1] > 0:
            return False
        if y2 > 1e150:
            y1 *= 1e-150
            y2 *= 1e-150
        y0, y1 = y1, y2
    return False


def _numerov_profile(f_base, energy, h):
    k = h * h / 12.0
    f = (f_base - energy).tolist()
    n = len(f)
    y = [0.0] * n
    y[0] = 1.0
    y[1] = 1 + 0.5 * h * h * f[0] + h ** 4 * f[0] ** 2 / 24 + h * h * (f[1] - f[0]) / 12
    for i in range(1, n - 1):
        y[i + 1] = (2 * (1 + 5 * k * f[i]) * y[i] - (1 - k * f[i - 1]) * y[i - 1]) / (1 - k * f[i + 1])
        if abs(y[i + 1]) > 1e150:
            break
    return np.array(y)


def _ground_energy(f_base, h, e_tol=1e-10):
    """Largest node-free energy, by bisection on E."""
    monotone = bool(np.all(np.diff(f_base) >= 0))
    lo = min(0.0, float(f_base.min()))
    hi = lo + 1.0
    for _ in range(60):
        if _shoot(f_base, hi, h, monotone):
            break
        hi = lo + 2 * (hi - lo)
    else:
        raise NoGroundState("no energy with a node was found")
    while hi - lo > e_tol:
        mid = 0.5 * (lo + hi)
        if _shoot(f_base, mid, h, monotone):
            hi = mid
        else:
            lo = mid
    return lo


def _ground_state(theta, cost, z, h, decay_tol):
    f_base = theta * cost(z)
    energy = _ground_energy(f_base, h)
    y = _numerov_profile(f_base, energy, h)
    # the node-free side eventually turns upward; cut before it does
    y = y[: int(np.argmin(np.where(y > 0, y, np.inf))) + 1]
    p = (y / y[0]) ** 2
    small = np.flatnonzero(p < 1e-2 * decay_tol)
    cut = int(small[0]) if small.size else p.size - 1
    if p[cut] > decay_tol:
        raise BoundaryTooSmall(f"ground state only decays to {p[cut]:.2e} of its peak inside the boundary")
    # continue with the local decay rate of the forbidden region
    kappa = math.sqrt(max(float(f_base[cut]) - energy, 0.0))
    return energy, p[: cut + 1], math.exp(-2 * h * kappa)


def _profile_noise(p, h, ratio):
    r = min(max(ratio, 1e-12), 1 - 1e-9)
    core = np.concatenate([p[:0:-1], p])
    total = math.fsum(core) + 2 * core[-1] * r / (1 - r)
    return NoiseDistribution(h, core / total, r)


def solve_schrodinger(theta_cost: CostSpec, boundary: float = 10.0, ode_step: float = 1e-3,
                      cost_tol: float = 1e-6, decay_tol: float = 1e-8) -> NoiseDistribution:
    """Ground state of y'' = (theta c(z) - E) y with p = y^2 meeting the cost budget.

    Shooting from ``y(0) = 1, y'(0) = 0`` with the fourth-order Numerov
    scheme; bisection on ``E`` to ``1e-10`` selects the node-free solution,
    and a bracketed root search on ``theta`` matches ``E[c(Z)] = C``.

    Raises:
      NoGroundState: No node was found when bracketing ``E``.
      BoundaryTooSmall: The density does not decay to ``decay_tol`` of its
        peak inside ``boundary``.
    """
    cost = theta_cost
    if not isinstance(cost, CostSpec):
        raise ValidationError("theta_cost must be a CostSpec")
    h = check_positive(ode_step, "ode_step")
    check_positive(boundary, "boundary")
    z = np.arange(int(round(boundary / h)) + 1) * h
    if z.size < 4:
        raise BoundaryTooSmall("boundary must span several ODE steps")
    C = cost.budget

    def noise_at(theta):
        _, p, ratio = _ground_state(theta, cost, z, h, decay_tol)
        return _profile_noise(p, h, ratio)

    def excess(log_theta):
        return noise_at(math.exp(log_theta)).expected_cost(cost) - C

    # bracket theta by doubling/halving from 1 (larger theta means cheaper noise)
    lo = hi = 0.0
    g = excess(0.0)
    if g > 0:
        while g > 0:
            hi += math.log(2)
            g = excess(hi)
            if hi > 60:
                raise NoGroundState("could not bracket theta")
        lo = hi - math.log(2)
    else:
        while g <= 0:
            lo -= math.log(2)
            g = excess(lo)
            if lo < -60:
                raise NoGroundState("could not bracket theta")
        hi = lo + math.log(2)
    log_theta = sopt.brentq(excess, lo, hi, xtol=1e-12, rtol=1e-12)
    noise = noise_at(math.exp(log_theta))
    if abs(noise.expected_cost(cost) - C) > cost_tol:
        raise NotConverged("cost constraint not met", best=noise)
    return noise
