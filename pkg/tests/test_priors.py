import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from hawkes_em.likelihood import ModelParams
from hawkes_em.priors import (
    COLUMN,
    GAUSSIAN,
    GROUP,
    LAPLACE,
    W_PRIORS,
    HyperParams,
    PriorSpec,
    closed_form_alpha,
    log_prior,
    log_prior_grad,
    m_step_closed_form,
    weight_log_prior,
)
from hawkes_em.utils import ConfigError


def one_weight(x, M=1):
    return ModelParams([1.0], np.full((1, 1, M), x))


def test_entry_log_densities():
    """Test log-densities with their normalizers"""
    assert weight_log_prior(LAPLACE, np.zeros((1, 1, 1)), np.full((1, 1, 1), 0.5)) == pytest.approx(0.0)
    expected = -0.5 - 0.5 * math.log(2 * math.pi)
    assert weight_log_prior(GAUSSIAN, np.ones((1, 1, 1)), np.ones((1, 1, 1))) == pytest.approx(expected)
    assert expected == pytest.approx(-1.418939, abs=1e-6)


def test_group_log_density():
    """Test the group prior on a (3, 4) block"""
    W = np.array([3.0, 4.0]).reshape(1, 1, 2)
    assert weight_log_prior(GROUP, W, np.ones((1, 1))) == pytest.approx(-5.0)
    # column groups collect the D targets of each (source, basis)
    W = np.array([[[3.0]], [[4.0]]]).reshape(2, 1, 1)
    W = np.concatenate([W, np.zeros((2, 1, 1))], axis=1)
    alpha = np.array([[1.0], [2.0]])
    assert weight_log_prior(COLUMN, W, alpha) == pytest.approx(-5.0 - 0.0 / 2.0 - 2 * math.log(2.0))


def test_full_log_prior_adds_rate_term():
    """Test that the rate prior is always Gaussian"""
    params = ModelParams([1.0], [[[0.0]]])
    alpha = HyperParams(np.ones(1), np.full((1, 1, 1), 0.5))
    expected = -0.5 - 0.5 * math.log(2 * math.pi)
    assert log_prior(PriorSpec(LAPLACE), alpha, params) == pytest.approx(expected)


def test_single_sample_closed_forms():
    """Test the L1 and L2 updates on one sample"""
    assert closed_form_alpha(LAPLACE, np.array([[2.0]]))[0] == pytest.approx(2.0)
    assert closed_form_alpha(GAUSSIAN, np.array([[2.0]]))[0] == pytest.approx(4.0)
    alpha = m_step_closed_form(PriorSpec(LAPLACE), [one_weight(2.0)])
    assert alpha.alpha_W.shape == (1, 1, 1)
    assert alpha.alpha_W[0, 0, 0] == pytest.approx(2.0)
    assert alpha.alpha_mu[0] == pytest.approx(1.0)


@pytest.mark.parametrize("kind", W_PRIORS)
def test_closed_form_is_numeric_minimizer(kind):
    """Test every closed form against a bounded scalar minimization"""
    rng = np.random.default_rng(17)
    D, M, L = 2, 3, 4
    for _ in range(10):
        samples = [ModelParams(rng.uniform(0.1, 1.0, D), rng.uniform(0.01, 1.0, (D, D, M))) for _ in range(L)]
        prior = PriorSpec(kind)
        alpha = m_step_closed_form(prior, samples)
        assert alpha.alpha_W.shape == prior.alpha_W_shape(D, M)

        index = (0,) * alpha.alpha_W.ndim

        def objective(a):
            values = []
            for s in samples:
                trial = alpha.alpha_W.copy()
                trial[index] = a
                values.append(weight_log_prior(kind, s.W, trial))
            return -np.mean(values)

        target = alpha.alpha_W[index]
        result = minimize_scalar(objective, bounds=(target / 10, target * 10), method="bounded",
                                 options={"xatol": 1e-12})
        assert result.x == pytest.approx(target, abs=1e-6)


@pytest.mark.parametrize("kind", W_PRIORS)
def test_log_prior_gradient(kind):
    """Test the prior gradient with central differences"""
    rng = np.random.default_rng(2)
    D, M = 2, 2
    prior = PriorSpec(kind)
    params = ModelParams(rng.uniform(0.2, 1.0, D), rng.uniform(0.1, 1.0, (D, D, M)))
    alpha = HyperParams(rng.uniform(0.5, 2.0, D), rng.uniform(0.5, 2.0, prior.alpha_W_shape(D, M)))
    grad_mu, grad_W = log_prior_grad(prior, alpha, params)
    analytic = np.concatenate([grad_mu, grad_W.ravel()])

    flat = params.flatten()
    numeric = np.zeros_like(flat)
    h = 1e-6
    for k in range(len(flat)):
        up, down = flat.copy(), flat.copy()
        up[k] += h
        down[k] -= h
        numeric[k] = (log_prior(prior, alpha, ModelParams.unflatten(up, D, M))
                      - log_prior(prior, alpha, ModelParams.unflatten(down, D, M))) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_blend():
    """Test the momentum combination of scales"""
    old = HyperParams(np.array([2.0]), np.array([2.0]))
    new = HyperParams(np.array([4.0]), np.array([4.0]))
    assert old.blend(new, 0.5).alpha_W[0] == pytest.approx(3.0)
    assert old.blend(new, 1.0).alpha_W[0] == 2.0
    assert old.blend(new, 0.0).alpha_W[0] == 4.0


def test_prior_spec_parse():
    """Test prior option strings and shapes"""
    prior = PriorSpec.parse("w=group,mu=gaussian")
    assert prior.w_prior == GROUP
    assert prior.alpha_W_shape(4, 3) == (4, 4)
    assert PriorSpec.parse("w=column").alpha_W_shape(4, 3) == (4, 3)
    assert PriorSpec.parse("w=l1").w_prior == LAPLACE
    assert PriorSpec().alpha_W_shape(4, 3) == (4, 4, 3)
    with pytest.raises(ConfigError):
        PriorSpec.parse("w=horseshoe")


def test_hyperparams_round_trip():
    """Test hyper-parameter serialization"""
    alpha = HyperParams.initial(PriorSpec(COLUMN), 3, 2, 0.1)
    restored = HyperParams.from_dict(alpha.to_dict())
    np.testing.assert_array_equal(restored.alpha_W, alpha.alpha_W)
    assert alpha.size == 3 + 6
