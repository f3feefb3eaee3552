"""Privacy loss accounting, optimal additive noise and operational attack checks."""

__version__ = "0.1.0"

from .exceptions import (AlphabetMismatch, BoundaryTooSmall, DPAError, GridMismatch, InfiniteMass,
                         Infeasible, InvalidPolicy, MemoryBudgetExceeded, NoGroundState,
                         NonIntegrable, NotConverged, NumericError, Unachievable, ValidationError)
from .pld import (DEFAULT_POLICY, DiscretizationPolicy, PrivacyLossDistribution, discretize_pld,
                  identity_pld, pld_from_discrete_pair, pld_moments)
from .divergences import (PrivacyGuarantee, epsilon_at_delta, f_divergence, guarantee_at_delta,
                          guarantee_at_epsilon, hockey_stick, kl_divergence, rdp_to_dp,
                          renyi_divergence)
from .tradeoff import (TradeoffCurve, dominates, dp_tradeoff, gaussian_tradeoff, lower_convex_hull,
                       tradeoff_from_pld)
from .mechanisms import (MechanismSpec, dominating_pair, expected_cost, gaussian, laplace,
                         mechanism_pld, mechanism_plds, randomized_response, sample, staircase)
from .composition import (basic_compose, basic_epsilon, clt_compose, clt_epsilon, fft_compose,
                          rdp_compose, rdp_epsilon)
from .optimize import (CostSpec, NoiseDistribution, absolute_cost, fit_staircase, quadratic_cost,
                       solve_cactus, solve_schrodinger)
from .attack import AttackReport, empirical_tradeoff, run_attack
