"""scikit-learn style wrappers that fit an additive noise law and apply it.

``fit`` runs the optimizer (the data only fixes the feature count);
``transform`` adds i.i.d. noise to every entry.  The fitted objects expose
``noise_`` and ``privacy_loss_distribution`` for accounting.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted, validate_data

from .mechanisms import mechanism_pld, noise_sample, staircase
from .optimize import cost_from_name, fit_staircase, solve_cactus, solve_schrodinger
from .pld import DEFAULT_POLICY


def _generator(random_state):
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(random_state)
    return np.random.default_rng(check_random_state(random_state).randint(0, 2 ** 32 - 1))


class _NoiseTransformer(TransformerMixin, BaseEstimator):

    def _validate_fit(self, X):
        if X is not None:
            validate_data(self, X, dtype=np.float64, reset=True)

    def _draw(self, rng, shape):
        raise NotImplementedError

    def transform(self, X):
        """Return ``X`` plus independent noise in every entry."""
        check_is_fitted(self, "noise_")
        X = validate_data(self, X, dtype=np.float64, copy=True, reset=False)
        return X + self._draw(_generator(self.random_state), X.shape)

    def privacy_loss_distribution(self, policy=DEFAULT_POLICY):
        """PLD of one release of a query with the configured sensitivity."""
        check_is_fitted(self, "noise_")
        return self._pld(policy)


class CactusNoise(_NoiseTransformer):
    """Additive noise minimizing the worst-shift KL divergence under a cost budget.

    Args:
      sensitivity: Query sensitivity ``s``.
      cost: ``"quad"`` or ``"abs"``.
      budget: Cost budget ``C``.
      z_max: Half-width of the optimized core.
      spacing: Grid spacing of the noise histogram.
      tolerance: Duality-gap tolerance of the solver.
      random_state: Seed or generator used by ``transform``.
    """

    def __init__(self, sensitivity=1.0, cost="quad", budget=0.25, z_max=6.0, spacing=0.05,
                 tolerance=1e-9, random_state=None):
        self.sensitivity = sensitivity
        self.cost = cost
        self.budget = budget
        self.z_max = z_max
        self.spacing = spacing
        self.tolerance = tolerance
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self._validate_fit(X)
        spec = cost_from_name(self.cost, self.budget)
        self.noise_, self.objective_ = solve_cactus(self.sensitivity, spec, self.z_max, self.spacing,
                                                    self.tolerance)
        return self

    def _draw(self, rng, shape):
        return self.noise_.sample(rng, shape)

    def _pld(self, policy):
        return self.noise_.pld(self.sensitivity, policy)


class SchrodingerNoise(_NoiseTransformer):
    """Additive noise from the ground state of the cost-weighted Schrodinger equation."""

    def __init__(self, sensitivity=1.0, cost="quad", budget=1.0, boundary=10.0, ode_step=1e-3,
                 random_state=None):
        self.sensitivity = sensitivity
        self.cost = cost
        self.budget = budget
        self.boundary = boundary
        self.ode_step = ode_step
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self._validate_fit(X)
        self.noise_ = solve_schrodinger(cost_from_name(self.cost, self.budget), self.boundary,
                                        self.ode_step)
        return self

    def _draw(self, rng, shape):
        return self.noise_.sample(rng, shape)

    def _pld(self, policy):
        return self.noise_.pld(self.sensitivity, policy)


class StaircaseNoise(_NoiseTransformer):
    """Staircase noise at a fixed epsilon with the band width fitted to the cost."""

    def __init__(self, epsilon=1.0, sensitivity=1.0, cost="quad", random_state=None):
        self.epsilon = epsilon
        self.sensitivity = sensitivity
        self.cost = cost
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self._validate_fit(X)
        cost = cost_from_name(self.cost, 1.0)
        self.eta_, self.expected_cost_ = fit_staircase(self.epsilon, self.sensitivity, cost)
        self.noise_ = staircase(self.epsilon, self.eta_, self.sensitivity)
        return self

    def _draw(self, rng, shape):
        return noise_sample(self.noise_, rng, shape)

    def _pld(self, policy):
        return mechanism_pld(self.noise_, policy)


__all__ = ["CactusNoise", "SchrodingerNoise", "StaircaseNoise"]
