"""
Priors over (mu, W) with one scale per parameter or per group.

Each prior is the probabilistic reading of a common regularizer:
  gaussian  L2,          -x^2 / (2a) - log(a) / 2 - log(2 pi) / 2   per entry
  laplace   L1,          -|x| / a - log(2a)                         per entry
  group     group lasso, -||w_ij||_2 / a - M log a                  per (i, j) over bases
  column    low rank,    -||w_.jm||_2 / a - D log a                 per source column and basis
The group densities are known only up to an alpha-free constant, taken as 0.
The exogenous rates always get the gaussian prior.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from hawkes_em.likelihood import ModelParams
from hawkes_em.utils import ConfigError, parse_options

logger = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
LAPLACE = "laplace"
GROUP = "group"
COLUMN = "column"
W_PRIORS = (GAUSSIAN, LAPLACE, GROUP, COLUMN)
MU_PRIORS = (GAUSSIAN,)

# Smallest scale an M-step may return.
ALPHA_FLOOR = 1e-300


@dataclass(frozen=True)
class PriorSpec:
    w_prior: str = LAPLACE
    mu_prior: str = GAUSSIAN

    def __post_init__(self):
        if self.w_prior not in W_PRIORS:
            raise ConfigError(f"Unknown weight prior '{self.w_prior}', expected one of {W_PRIORS}")
        if self.mu_prior not in MU_PRIORS:
            raise ConfigError(f"Unknown rate prior '{self.mu_prior}', expected one of {MU_PRIORS}")

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse `w=laplace,mu=gaussian`."""
        _, opts = parse_options(":" + text)
        aliases = {"l1": LAPLACE, "l2": GAUSSIAN, "grouplaplace": GROUP, "lowrank": COLUMN}
        w = str(opts.get("w", LAPLACE)).lower()
        mu = str(opts.get("mu", GAUSSIAN)).lower()
        return cls(aliases.get(w, w), aliases.get(mu, mu))

    def alpha_W_shape(self, D: int, M: int) -> Tuple[int, ...]:
        if self.w_prior == GROUP:
            return (D, D)
        if self.w_prior == COLUMN:
            return (D, M)
        return (D, D, M)


@dataclass(frozen=True)
class HyperParams:
    """Prior scales: alpha_mu (D,) and alpha_W shaped by the weight prior."""
    alpha_mu: np.ndarray
    alpha_W: np.ndarray

    @classmethod
    def initial(cls, prior: PriorSpec, D: int, M: int, value: float = 0.1) -> "HyperParams":
        return cls(np.full(D, value), np.full(prior.alpha_W_shape(D, M), value))

    @property
    def size(self) -> int:
        return self.alpha_mu.size + self.alpha_W.size

    def blend(self, other: "HyperParams", beta: float) -> "HyperParams":
        """beta * self + (1 - beta) * other."""
        return HyperParams(beta * self.alpha_mu + (1.0 - beta) * other.alpha_mu,
                           beta * self.alpha_W + (1.0 - beta) * other.alpha_W)

    def to_dict(self) -> dict:
        return {"alpha_mu": self.alpha_mu.tolist(), "alpha_W": self.alpha_W.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "HyperParams":
        return cls(np.asarray(data["alpha_mu"], dtype=float), np.asarray(data["alpha_W"], dtype=float))


def _group_norms(kind: str, W: np.ndarray) -> np.ndarray:
    if kind == GROUP:
        return np.sqrt((W ** 2).sum(axis=2))
    return np.sqrt((W ** 2).sum(axis=0))


def _group_size(kind: str, W: np.ndarray) -> int:
    return W.shape[2] if kind == GROUP else W.shape[0]


def gaussian_log_density(x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return -x ** 2 / (2.0 * alpha) - 0.5 * np.log(alpha) - 0.5 * math.log(2.0 * math.pi)


def laplace_log_density(x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return -np.abs(x) / alpha - np.log(2.0 * alpha)


def group_log_density(norms: np.ndarray, alpha: np.ndarray, size: int) -> np.ndarray:
    return -norms / alpha - size * np.log(alpha)


def weight_log_prior(kind: str, W: np.ndarray, alpha_W: np.ndarray) -> float:
    if kind == GAUSSIAN:
        return float(gaussian_log_density(W, alpha_W).sum())
    if kind == LAPLACE:
        return float(laplace_log_density(W, alpha_W).sum())
    return float(group_log_density(_group_norms(kind, W), alpha_W, _group_size(kind, W)).sum())


def log_prior(prior: PriorSpec, alpha: HyperParams, params: ModelParams) -> float:
    """log p_alpha(mu, W) including every alpha-dependent normalizer."""
    return (float(gaussian_log_density(params.mu, alpha.alpha_mu).sum())
            + weight_log_prior(prior.w_prior, params.W, alpha.alpha_W))


def log_prior_grad(prior: PriorSpec, alpha: HyperParams,
                   params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of log_prior w.r.t. mu and W."""
    grad_mu = -params.mu / alpha.alpha_mu
    W = params.W
    kind = prior.w_prior
    if kind == GAUSSIAN:
        grad_W = -W / alpha.alpha_W
    elif kind == LAPLACE:
        grad_W = -np.sign(W) / alpha.alpha_W
    else:
        norms = _group_norms(kind, W)
        safe = np.where(norms > 0, norms, 1.0)
        if kind == GROUP:
            grad_W = -W / (alpha.alpha_W * safe)[:, :, None]
        else:
            grad_W = -W / (alpha.alpha_W * safe)[None, :, :]
    return grad_mu, grad_W


def closed_form_alpha(kind: str, samples: np.ndarray) -> np.ndarray:
    """
    Scale maximizing the mean sampled log-density of one variant.

    `samples` has shape (L, ...) for entry-wise priors and (L, D, D, M) for
    the group variants.
    """
    samples = np.asarray(samples, dtype=float)
    if kind == GAUSSIAN:
        alpha = np.mean(samples ** 2, axis=0)
    elif kind == LAPLACE:
        alpha = np.mean(np.abs(samples), axis=0)
    elif kind in (GROUP, COLUMN):
        norms = np.stack([_group_norms(kind, w) for w in samples])
        alpha = norms.mean(axis=0) / _group_size(kind, samples[0])
    else:
        raise ConfigError(f"Unknown prior variant '{kind}'")
    return np.maximum(alpha, ALPHA_FLOOR)


def m_step_closed_form(prior: PriorSpec, samples: Sequence[ModelParams]) -> HyperParams:
    """Closed-form maximizer over alpha of the mean log-prior of L posterior samples."""
    if len(samples) == 0:
        raise ConfigError("the M-step needs at least one sample")
    mus = np.stack([s.mu for s in samples])
    Ws = np.stack([s.W for s in samples])
    return HyperParams(closed_form_alpha(prior.mu_prior, mus), closed_form_alpha(prior.w_prior, Ws))
