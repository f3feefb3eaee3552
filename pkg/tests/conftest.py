import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.stats import norm

from dpa.mechanisms import gaussian, mechanism_plds
from dpa.pld import DiscretizationPolicy

settings.register_profile("dpa", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dpa")

PESS = DiscretizationPolicy()
OPT = DiscretizationPolicy(rounding="optimistic")
E = math.e


def gaussian_delta(eps, mu):
    """delta(eps) of the Normal(mu^2/2, mu^2) loss, the Gaussian mechanism with mu = s/sigma."""
    return norm.cdf(mu / 2 - eps / mu) - math.exp(eps) * norm.cdf(-mu / 2 - eps / mu)


@pytest.fixture(scope="session")
def gauss_plds():
    """Pessimistic and optimistic PLDs of gaussian(sigma=1), s=1 at the default grid."""
    spec = gaussian(1.0)
    return mechanism_plds(spec, PESS)[0], mechanism_plds(spec, OPT)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gauss_k100(gauss_plds):
    """100-fold compositions of the pessimistic and optimistic Gaussian PLDs."""
    from dpa.composition import fft_compose
    return tuple(fft_compose(p, 100) for p in gauss_plds)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
