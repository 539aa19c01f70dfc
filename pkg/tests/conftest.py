import numpy as np
import pytest

from hawkes_em.events import EventSequence
from hawkes_em.kernels import ExponentialKernel, GaussianBasisKernel
from hawkes_em.likelihood import ModelParams
from hawkes_em.simulator import SyntheticConfig, sample_graph, simulate
from hawkes_em.utils import make_rng


@pytest.fixture
def exp_kernel():
    return ExponentialKernel(1.0)


@pytest.fixture
def sg_kernel():
    """Three Gaussian bases over a cutoff of 2."""
    return GaussianBasisKernel.from_cutoff(3, 2.0)


@pytest.fixture
def small_seq():
    """Six hand-placed events on two dimensions over [0, 4)."""
    return EventSequence.from_events(
        [0.3, 0.9, 1.4, 2.2, 2.5, 3.7], [0, 1, 0, 1, 1, 0], horizon=4.0, D=2
    )


@pytest.fixture
def random_params():
    """Factory for strictly interior parameters of a given shape."""
    rng = np.random.default_rng(7)

    def make(D, M):
        return ModelParams(rng.uniform(0.2, 1.0, D), rng.uniform(0.05, 0.3, (D, D, M)))

    return make


@pytest.fixture
def synthetic_config():
    return SyntheticConfig(D=3, edge_prob=0.5, mu_range=(0.2, 0.5), n_events=200, seed=1)


@pytest.fixture
def simulated(synthetic_config):
    """A seeded ground truth on three dimensions and 200 events drawn from it."""
    truth = sample_graph(synthetic_config, make_rng(1, 0, 0))
    seq = simulate(truth, synthetic_config.kernel, make_rng(1, 1, 0, 0), n_events=200)
    return truth, seq
