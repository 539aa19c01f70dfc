"""
Variational EM for multivariate Hawkes processes.

The posterior over theta = (mu, W) is a fully factorized log-normal,

    theta = exp(gamma_mu + exp(gamma_sigma) * eps),   eps ~ N(0, I),

fitted by stochastic gradient ascent on a reparameterized ELBO (E-step), while
the prior scales alpha are moved towards their closed-form maximizer under
fresh posterior samples (M-step).
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from hawkes_em.events import EventSequence
from hawkes_em.kernels import KernelSpec
from hawkes_em.likelihood import LikelihoodStats, ModelParams
from hawkes_em.optim import FlatAdam
from hawkes_em.priors import HyperParams, PriorSpec, log_prior, log_prior_grad, m_step_closed_form
from hawkes_em.utils import ConfigError, ValidationError, make_rng

logger = logging.getLogger(__name__)


@dataclass
class EmConfig:
    """Variational EM settings; `init_loc_var` is a variance, `init_loc_std` overrides it."""
    L: int = 1
    beta: float = 0.5
    T_E: int = 100
    T_EM: int = 100
    eta: float = 0.02
    lr_decay: float = 1.0 - 1e-4
    seed: int = 0
    init_loc: float = 0.1
    init_loc_var: float = 0.01
    init_loc_std: Optional[float] = None
    init_scale: float = 0.2
    init_scale_var: float = 0.01
    init_scale_clip: Tuple[float, float] = (0.01, 2.0)
    init_alpha: float = 0.1
    smoothing_window: int = 50

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must be in [0, 1), got {self.beta}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.T_E < 0 or self.T_EM < 0:
            raise ConfigError("T_E and T_EM must be >= 0")
        if self.init_alpha <= 0:
            raise ConfigError(f"init_alpha must be > 0, got {self.init_alpha}")

    @property
    def loc_std(self) -> float:
        if self.init_loc_std is not None:
            return self.init_loc_std
        return float(np.sqrt(self.init_loc_var))

    def to_dict(self) -> dict:
        return {
            "L": self.L, "beta": self.beta, "T_E": self.T_E, "T_EM": self.T_EM,
            "eta": self.eta, "lr_decay": self.lr_decay, "seed": self.seed,
            "init_loc": self.init_loc, "init_loc_var": self.init_loc_var,
            "init_loc_std": self.init_loc_std, "init_scale": self.init_scale,
            "init_scale_var": self.init_scale_var, "init_scale_clip": list(self.init_scale_clip),
            "init_alpha": self.init_alpha, "smoothing_window": self.smoothing_window,
        }


@dataclass(frozen=True)
class VariationalState:
    """
    Log-space location gamma_mu and log-scale gamma_sigma, both flat over
    (mu, W.ravel()) with D + D*D*M entries.
    """
    gamma_mu: np.ndarray
    gamma_sigma: np.ndarray
    D: int
    M: int

    def __post_init__(self):
        loc = np.array(self.gamma_mu, dtype=np.float64)
        log_scale = np.array(self.gamma_sigma, dtype=np.float64)
        loc.setflags(write=False)
        log_scale.setflags(write=False)
        object.__setattr__(self, "gamma_mu", loc)
        object.__setattr__(self, "gamma_sigma", log_scale)
        size = self.D + self.D * self.D * self.M
        if loc.shape != (size,) or log_scale.shape != (size,):
            raise ValidationError(f"expected {size} variational coordinates, got {loc.shape}, {log_scale.shape}",
                                  "shape")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(log_scale))):
            raise ValidationError("variational parameters must be finite", "finite-params")

    @property
    def size(self) -> int:
        return self.gamma_mu.size

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.gamma_sigma)

    @classmethod
    def initial(cls, D: int, M: int, cfg: EmConfig, rng: np.random.Generator) -> "VariationalState":
        size = D + D * D * M
        loc = rng.normal(cfg.init_loc, cfg.loc_std, size=size)
        log_scale = rng.normal(cfg.init_scale, np.sqrt(cfg.init_scale_var), size=size)
        return cls(loc, np.clip(log_scale, *cfg.init_scale_clip), D, M)

    def split(self, flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flat coordinates as (mu-shaped, W-shaped) arrays."""
        return flat[:self.D], flat[self.D:].reshape(self.D, self.D, self.M)

    def to_dict(self) -> dict:
        return {"D": self.D, "M": self.M,
                "gamma_mu": self.gamma_mu.tolist(), "gamma_sigma": self.gamma_sigma.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "VariationalState":
        return cls(np.asarray(data["gamma_mu"], dtype=float), np.asarray(data["gamma_sigma"], dtype=float),
                   int(data["D"]), int(data["M"]))


@dataclass
class VariationalFit:
    """Output of fit_vi. elbo_trace holds one smoothed value per EM round."""
    state: VariationalState
    alpha: HyperParams
    prior: PriorSpec
    config: EmConfig
    elbo_trace: List[float] = field(default_factory=list)
    elbo_history: List[float] = field(default_factory=list)
    wall_time: float = 0.0


def reparam_sample(state: VariationalState, eps: np.ndarray) -> ModelParams:
    """exp(gamma_mu + exp(gamma_sigma) * eps) as model parameters."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != state.gamma_mu.shape:
        raise ValidationError(f"noise shape {eps.shape} does not match {state.gamma_mu.shape}", "shape")
    theta = np.exp(state.gamma_mu + state.scale * eps)
    return ModelParams.unflatten(theta, state.D, state.M)


def entropy_term(state: VariationalState) -> float:
    """Log-normal entropy up to an additive constant."""
    return float(np.sum(state.gamma_mu) + np.sum(state.gamma_sigma))


def map_objective(params: ModelParams, prior: PriorSpec, alpha: HyperParams,
                  seq: EventSequence, kernel: KernelSpec, stats: Optional[LikelihoodStats] = None) -> float:
    """log p(S | theta) + log p_alpha(theta)."""
    stats = stats or LikelihoodStats(kernel, seq)
    return stats.value(params) + log_prior(prior, alpha, params)


def sample_objective_and_grad(state: VariationalState, eps: np.ndarray, prior: PriorSpec,
                              alpha: HyperParams, stats: LikelihoodStats,
                              ) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Joint log-probability at one reparameterized sample, with its gradient
    w.r.t. gamma_mu and gamma_sigma for the given frozen noise.
    """
    params = reparam_sample(state, eps)
    value, grad_mu, grad_W = stats.value_and_grad(params)
    prior_mu, prior_W = log_prior_grad(prior, alpha, params)
    value += log_prior(prior, alpha, params)
    dtheta = np.concatenate([grad_mu + prior_mu, (grad_W + prior_W).ravel()])
    theta = params.flatten()
    grad_loc = theta * dtheta
    grad_log_scale = grad_loc * eps * state.scale
    return value, grad_loc, grad_log_scale


def elbo_and_grad(state: VariationalState, prior: PriorSpec, alpha: HyperParams,
                  stats: LikelihoodStats, eps_samples: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Monte-Carlo ELBO over L noise draws (rows of eps_samples) and its gradient."""
    eps_samples = np.atleast_2d(eps_samples)
    L = len(eps_samples)
    total = 0.0
    grad_loc = np.zeros(state.size)
    grad_log_scale = np.zeros(state.size)
    for eps in eps_samples:
        value, g_loc, g_scale = sample_objective_and_grad(state, eps, prior, alpha, stats)
        total += value
        grad_loc += g_loc
        grad_log_scale += g_scale
    # the entropy term contributes +1 to every coordinate
    return (total / L + entropy_term(state),
            grad_loc / L + 1.0,
            grad_log_scale / L + 1.0)


def elbo_estimate(state: VariationalState, prior: PriorSpec, alpha: HyperParams, seq: EventSequence,
                  kernel: KernelSpec, eps_samples: np.ndarray, stats: Optional[LikelihoodStats] = None) -> float:
    """(1/L) sum_l [log p(S | g(eps_l)) + log p_alpha(g(eps_l))] + entropy."""
    stats = stats or LikelihoodStats(kernel, seq)
    eps_samples = np.atleast_2d(eps_samples)
    joint = [map_objective(reparam_sample(state, eps), prior, alpha, seq, kernel, stats) for eps in eps_samples]
    return float(np.mean(joint)) + entropy_term(state)


def e_step(state: VariationalState, prior: PriorSpec, alpha: HyperParams, seq: EventSequence,
           kernel: KernelSpec, cfg: EmConfig, rng: np.random.Generator,
           optimizer: Optional[FlatAdam] = None, stats: Optional[LikelihoodStats] = None,
           history: Optional[List[float]] = None) -> VariationalState:
    """
    T_E Adam ascent steps on the reparameterized ELBO.

    Pass the same `optimizer` across rounds to keep its moments and learning
    rate schedule; ELBO estimates of every step are appended to `history`.
    """
    if cfg.T_E == 0:
        return state
    stats = stats or LikelihoodStats(kernel, seq)
    if optimizer is None:
        optimizer = FlatAdam(np.concatenate([state.gamma_mu, state.gamma_sigma]), lr=cfg.eta,
                             lr_decay=cfg.lr_decay)
    else:
        optimizer.set(np.concatenate([state.gamma_mu, state.gamma_sigma]))
    n = state.size
    for step in range(cfg.T_E):
        eps = rng.standard_normal((cfg.L, n))
        value, grad_loc, grad_log_scale = elbo_and_grad(state, prior, alpha, stats, eps)
        if history is not None:
            history.append(value)
        # ascent on the ELBO is descent on its negation
        x = optimizer.step(-np.concatenate([grad_loc, grad_log_scale]))
        state = VariationalState(x[:n], x[n:], state.D, state.M)
        logger.debug(f"e-step {step}: elbo={value:.6g}")
    return state


def m_step(alpha_old: HyperParams, state: VariationalState, prior: PriorSpec, cfg: EmConfig,
           rng: np.random.Generator) -> HyperParams:
    """alpha <- beta * alpha_old + (1 - beta) * closed form under L fresh samples."""
    eps = rng.standard_normal((cfg.L, state.size))
    samples = [reparam_sample(state, e) for e in eps]
    return alpha_old.blend(m_step_closed_form(prior, samples), cfg.beta)


def smoothed_trace(history: List[float], window: int) -> np.ndarray:
    """Trailing moving average of per-step ELBO estimates."""
    if not history:
        return np.array([])
    return pd.Series(history).rolling(window=max(window, 1), min_periods=1).mean().to_numpy()


def fit_vi(seq: EventSequence, kernel: KernelSpec, prior: PriorSpec, cfg: Optional[EmConfig] = None,
           callback: Optional[Callable[[int, VariationalState, HyperParams], None]] = None,
           stats: Optional[LikelihoodStats] = None) -> VariationalFit:
    """
    Run T_EM rounds of (T_E E-steps, one M-step).

    Everything random is drawn from one generator seeded with cfg.seed, so a
    fixed seed reproduces the fit exactly.
    """
    cfg = cfg or EmConfig()
    if seq.n_events == 0:
        raise ValidationError("cannot fit an empty sequence", "nonempty-sequence")
    started = time.time()
    rng = make_rng(cfg.seed)
    stats = stats or LikelihoodStats(kernel, seq)
    D, M = seq.D, kernel.n_basis

    state = VariationalState.initial(D, M, cfg, rng)
    alpha = HyperParams.initial(prior, D, M, cfg.init_alpha)
    optimizer = FlatAdam(np.concatenate([state.gamma_mu, state.gamma_sigma]), lr=cfg.eta, lr_decay=cfg.lr_decay)
    history: List[float] = []
    trace: List[float] = []

    logger.info(f"Fitting VI: D={D}, M={M}, N={seq.n_events}, prior={prior.w_prior}, "
                f"rounds={cfg.T_EM}x{cfg.T_E}, L={cfg.L}")
    for round_idx in range(cfg.T_EM):
        state = e_step(state, prior, alpha, seq, kernel, cfg, rng, optimizer=optimizer, stats=stats,
                       history=history)
        alpha = m_step(alpha, state, prior, cfg, rng)
        if history:
            trace.append(float(smoothed_trace(history, cfg.smoothing_window)[-1]))
            logger.debug(f"EM round {round_idx}: smoothed elbo={trace[-1]:.6g}")
        if callback is not None:
            callback(round_idx, state, alpha)

    fit = VariationalFit(state=state, alpha=alpha, prior=prior, config=cfg, elbo_trace=trace,
                         elbo_history=history, wall_time=time.time() - started)
    final = f"{trace[-1]:.6g}" if trace else "n/a"
    logger.info(f"VI finished: smoothed elbo={final}, steps={len(history)}")
    return fit


def posterior_mode(state: VariationalState) -> ModelParams:
    """Elementwise log-normal mode exp(gamma_mu - s^2)."""
    theta = np.exp(state.gamma_mu - state.scale ** 2)
    theta = np.maximum(theta, np.finfo(float).tiny)
    return ModelParams.unflatten(theta, state.D, state.M)


def posterior_mean(state: VariationalState) -> ModelParams:
    return ModelParams.unflatten(np.exp(state.gamma_mu + state.scale ** 2 / 2.0), state.D, state.M)


def posterior_std(state: VariationalState) -> Tuple[np.ndarray, np.ndarray]:
    """Log-normal standard deviations, returned as (mu-shaped, W-shaped)."""
    s2 = state.scale ** 2
    std = np.sqrt(np.expm1(s2)) * np.exp(state.gamma_mu + s2 / 2.0)
    return state.split(std)
