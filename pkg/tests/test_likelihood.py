import math

import numpy as np
import pytest
from scipy import integrate

from hawkes_em.events import EventSequence
from hawkes_em.kernels import ExponentialKernel, GaussianBasisKernel, kernel_eval, kernel_integral
from hawkes_em.likelihood import (
    LikelihoodStats,
    ModelParams,
    branching_matrix,
    compensator,
    intensity,
    log_likelihood,
    log_likelihood_grad,
    spectral_radius,
    stationary_rates,
    time_rescaling_residuals,
)
from hawkes_em.utils import NonFiniteLikelihood, ValidationError, make_rng


def naive_intensity(params, kernel, seq, i, t):
    value = params.mu[i]
    for tk, dk in zip(seq.times, seq.dims):
        if tk < t:
            for m in range(kernel.n_basis):
                value += params.W[i, dk, m] * kernel_eval(kernel, m, t - tk)
    return value


def naive_log_likelihood(params, kernel, seq):
    """Double sum over event pairs plus per-event closed-form compensators."""
    total = sum(math.log(naive_intensity(params, kernel, seq, d, t)) for t, d in zip(seq.times, seq.dims))
    for i in range(seq.D):
        comp = params.mu[i] * seq.duration
        for tk, dk in zip(seq.times, seq.dims):
            for m in range(kernel.n_basis):
                comp += params.W[i, dk, m] * kernel_integral(kernel, m, 0.0, seq.horizon - tk)
        total -= comp
    return total


def random_sequence(rng, D, N, horizon):
    times = np.sort(rng.uniform(0.0, horizon, N))
    return EventSequence.from_events(times, rng.integers(0, D, N), horizon, D)


def test_poisson_log_likelihood():
    """Test homogeneous Poisson values"""
    seq = EventSequence.from_events([0.5], [0], 1.0, 1)
    assert log_likelihood(ModelParams.poisson([1.0]), ExponentialKernel(1.0), seq) == pytest.approx(-1.0)

    seq = EventSequence.from_events([0.2, 0.7], [0, 0], 2.0, 1)
    expected = 2 * math.log(0.5) - 1.0
    assert log_likelihood(ModelParams.poisson([0.5]), ExponentialKernel(1.0), seq) == pytest.approx(expected)


def test_intensity_values():
    """Test the intensity after a single event"""
    seq = EventSequence.from_events([0.0], [0], 2.0, 1)
    params = ModelParams([1.0], [[[0.5]]])
    kernel = ExponentialKernel(1.0)
    assert intensity(params, kernel, seq, 0, 1.0) == pytest.approx(1 + 0.5 * math.exp(-1), rel=1e-12)
    # strict past: the event does not excite its own time
    assert intensity(params, kernel, seq, 0, 0.0) == pytest.approx(1.0)
    assert intensity(ModelParams.poisson([0.3]), kernel, seq, 0, 1.5) == pytest.approx(0.3)


@pytest.mark.parametrize("kernel", [ExponentialKernel(1.3), GaussianBasisKernel.from_cutoff(3, 2.0)])
def test_log_likelihood_matches_naive_oracle(kernel, random_params):
    """Test the sufficient-statistics likelihood against the double sum"""
    rng = make_rng(11)
    for D, N in [(1, 20), (2, 60), (3, 120)]:
        seq = random_sequence(rng, D, N, horizon=30.0)
        params = random_params(D, kernel.n_basis)
        fast = log_likelihood(params, kernel, seq)
        assert fast == pytest.approx(naive_log_likelihood(params, kernel, seq), rel=1e-8)


def test_compensator_matches_quadrature(random_params):
    """Test the compensator against adaptive quadrature of the intensity"""
    kernel = ExponentialKernel(2.0)
    seq = random_sequence(make_rng(5), 2, 25, horizon=10.0)
    params = random_params(2, 1)
    comp = compensator(params, kernel, seq)
    for i in range(seq.D):
        expected, _ = integrate.quad(lambda t: naive_intensity(params, kernel, seq, i, t), 0.0, seq.horizon,
                                     points=list(seq.times), limit=500, epsabs=1e-12)
        assert comp[i] == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("kernel", [ExponentialKernel(1.0), GaussianBasisKernel.from_cutoff(2, 1.5)])
def test_gradient_matches_finite_differences(kernel, random_params):
    """Test the analytic gradient with central differences"""
    seq = random_sequence(make_rng(3), 2, 40, horizon=15.0)
    params = random_params(2, kernel.n_basis)
    grad_mu, grad_W = log_likelihood_grad(params, kernel, seq)
    analytic = np.concatenate([grad_mu, grad_W.ravel()])

    stats = LikelihoodStats(kernel, seq)
    flat = params.flatten()
    h = 1e-5
    numeric = np.zeros_like(flat)
    for k in range(len(flat)):
        up, down = flat.copy(), flat.copy()
        up[k] += h
        down[k] -= h
        numeric[k] = (stats.value(ModelParams.unflatten(up, 2, kernel.n_basis))
                      - stats.value(ModelParams.unflatten(down, 2, kernel.n_basis))) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_poisson_gradient():
    """Test the Poisson score and its zero at the rate estimate"""
    seq = EventSequence.from_events([0.5, 1.5, 2.5, 4.0], [0, 0, 0, 0], 5.0, 1)
    grad_mu, _ = log_likelihood_grad(ModelParams.poisson([1.0]), ExponentialKernel(1.0), seq)
    assert grad_mu[0] == pytest.approx(4 - 5.0)
    grad_mu, _ = log_likelihood_grad(ModelParams.poisson([4 / 5.0]), ExponentialKernel(1.0), seq)
    assert grad_mu[0] == pytest.approx(0.0, abs=1e-12)


def test_window_additivity(random_params, small_seq, sg_kernel):
    """Test that the likelihood splits over adjacent windows"""
    params = random_params(2, sg_kernel.n_basis)
    full = LikelihoodStats(sg_kernel, small_seq).value(params)
    left = LikelihoodStats(sg_kernel, small_seq, 0.0, 2.3).value(params)
    right = LikelihoodStats(sg_kernel, small_seq, 2.3, 4.0).value(params)
    assert full == pytest.approx(left + right, rel=1e-12)


def test_nonpositive_intensity_raises(small_seq, exp_kernel):
    """Test the error on an intensity that is not positive"""
    stats = LikelihoodStats(exp_kernel, small_seq)
    params = object.__new__(ModelParams)
    object.__setattr__(params, "mu", np.array([0.0, 0.0]))
    object.__setattr__(params, "W", np.zeros((2, 2, 1)))
    with pytest.raises(NonFiniteLikelihood):
        stats.value(params)


def test_model_params_validation():
    """Test parameter invariants"""
    with pytest.raises(ValidationError, match="positive-mu"):
        ModelParams([0.0], [[0.1]])
    with pytest.raises(ValidationError, match="nonnegative-W"):
        ModelParams([1.0], [[-0.1]])
    with pytest.raises(ValidationError, match="shape"):
        ModelParams([1.0, 1.0], [[0.1]])
    params = ModelParams([1.0, 2.0], np.ones((2, 2)))
    assert params.M == 1
    restored = ModelParams.unflatten(params.flatten(), 2, 1)
    np.testing.assert_array_equal(restored.mu, params.mu)
    np.testing.assert_array_equal(restored.W, params.W)


def test_branching_and_stability():
    """Test branching matrix, spectral radius and stationary rates"""
    kernel = ExponentialKernel(3.0)
    params = ModelParams([1.0], [[[0.5]]])
    G = branching_matrix(params, kernel)
    np.testing.assert_allclose(G, [[0.5]])
    assert spectral_radius(G) == pytest.approx(0.5)
    assert stationary_rates(params, kernel)[0] == pytest.approx(2.0)
    assert spectral_radius(np.zeros((3, 3))) == 0.0

    G = np.array([[0.0, 0.6], [0.6, 0.0]])
    assert spectral_radius(G) == pytest.approx(0.6, rel=1e-9)

    with pytest.raises(ValidationError, match="subcritical"):
        stationary_rates(ModelParams([1.0], [[[1.2]]]), kernel)


def test_time_rescaling_residuals_sum_to_compensator(small_seq, exp_kernel, random_params):
    """Test that residuals add up to the compensator at each dimension's last event"""
    params = random_params(2, 1)
    residuals = time_rescaling_residuals(params, exp_kernel, small_seq)
    assert [len(r) for r in residuals] == [3, 3]
    for i, res in enumerate(residuals):
        last = small_seq.times[small_seq.dims == i][-1]
        upto = EventSequence(small_seq.times[small_seq.times < last], small_seq.dims[small_seq.times < last],
                             last, 2)
        assert res.sum() == pytest.approx(compensator(params, exp_kernel, upto)[i], rel=1e-10)
        assert np.all(res > 0)


@pytest.mark.parametrize("kernel", [ExponentialKernel(1.0), GaussianBasisKernel.from_cutoff(3, 2.0)])
def test_silent_dimension_costs_its_base_rate(kernel, random_params, small_seq):
    """Test that an extra dimension with no events and no weights subtracts c * T"""
    params = random_params(2, kernel.n_basis)
    c = 0.37
    W = np.zeros((3, 3, kernel.n_basis))
    W[:2, :2] = params.W
    wider = ModelParams(np.append(params.mu, c), W)
    base = log_likelihood(params, kernel, small_seq)
    extended = log_likelihood(wider, kernel, small_seq.with_dimensions(3))
    assert extended - base == pytest.approx(-c * small_seq.duration, rel=1e-12)
