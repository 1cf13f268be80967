import numpy as np
import pytest
from hypothesis import settings

from tpcomb import CoincidenceHistogram, load_preset
from tpcomb.analysis import comb_binned

settings.register_profile("ci", derandomize=True, deadline=None, max_examples=60)
settings.load_profile("ci")


def poisson_comb(params, bin_ps=32.0, window_ns=100.0, seed=0, mean=False):
    """Histogram with (Poisson) counts drawn from the bin-integrated comb model."""
    half = int(round(window_ns * 1e3 / bin_ps))
    x = np.arange(-half, half + 1) * bin_ps
    mu = comb_binned(x * 1e-3, params, bin_ps * 1e-3)
    if mean:
        return CoincidenceHistogram(x, mu, 1.0)
    y = np.random.default_rng(seed).poisson(mu)
    return CoincidenceHistogram(x, y, 1.0)


@pytest.fixture(scope="session")
def paper_default():
    return load_preset("paper_default")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


def uhlmann_fidelity(rho, sigma):
    """Squared Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 between two mixed states."""
    from scipy.linalg import sqrtm

    r = np.asarray(getattr(rho, "elements", rho))
    s = np.asarray(getattr(sigma, "elements", sigma))
    sr = sqrtm(r)
    ev = np.linalg.eigvalsh(0.5 * (sr @ s @ sr + (sr @ s @ sr).conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)
