"""Model parameters, conditional intensity, compensator and exact log-likelihood."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from hawkes_em.events import EventSequence
from hawkes_em.kernels import KernelSpec
from hawkes_em.utils import NonFiniteLikelihood, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """
    Exogenous rates mu (D,) and excitation weights W (D, D, M).

    W[i, j, m] is the weight of basis m in the effect of source j on target i.
    """
    mu: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        W = np.array(self.W, dtype=np.float64)
        if W.ndim == 2:
            W = W[:, :, None]
        mu.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "W", W)
        D = len(mu)
        if mu.ndim != 1 or W.ndim != 3 or W.shape[:2] != (D, D):
            raise ValidationError(f"expected mu (D,) and W (D, D, M), got {mu.shape} and {W.shape}", "shape")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(W))):
            raise ValidationError("parameters must be finite", "finite-params")
        if np.any(mu <= 0):
            raise ValidationError("exogenous rates must be strictly positive", "positive-mu")
        if np.any(W < 0):
            raise ValidationError("excitation weights must be nonnegative", "nonnegative-W")

    @property
    def D(self) -> int:
        return len(self.mu)

    @property
    def M(self) -> int:
        return self.W.shape[2]

    @property
    def n_params(self) -> int:
        return self.mu.size + self.W.size

    def edge_weights(self) -> np.ndarray:
        """Per-edge weight summed over bases, shape (D, D)."""
        return self.W.sum(axis=2)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.mu, self.W.ravel()])

    @classmethod
    def unflatten(cls, flat: np.ndarray, D: int, M: int) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        return cls(flat[:D], flat[D:].reshape(D, D, M))

    @classmethod
    def poisson(cls, mu, M: int = 1) -> "ModelParams":
        """No excitation: W = 0."""
        mu = np.asarray(mu, dtype=np.float64)
        return cls(mu, np.zeros((len(mu), len(mu), M)))

    def to_dict(self) -> Dict[str, Any]:
        return {"mu": self.mu.tolist(), "W": self.W.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelParams":
        return cls(np.asarray(data["mu"], dtype=float), np.asarray(data["W"], dtype=float))


class LikelihoodStats:
    """
    Parameter-free sufficient statistics of the log-likelihood on one window.

    With X[n, j, m] the summed kernel values at event n from earlier events of
    source j and C[j, m] the integrated kernels of source j over the window,

        log L = sum_n log(mu[i_n] + <W[i_n], X[n]>) - (T - start) sum_i mu_i
                - sum_{i,j,m} W[i, j, m] C[j, m]

    so each evaluation costs O(N * D * M) arithmetic.
    """

    def __init__(self, kernel: KernelSpec, seq: EventSequence, start: float = None, end: float = None):
        start = seq.start if start is None else float(start)
        end = seq.horizon if end is None else float(end)
        self.kernel = kernel
        self.D = seq.D
        self.M = kernel.n_basis
        self.duration = end - start
        lo, hi = np.searchsorted(seq.times, [start, end], side="left")
        self.n_events = int(hi - lo)
        self.dims = seq.dims[lo:hi]
        features = kernel.excitation_features(seq.times, seq.dims, seq.D, int(lo), int(hi))
        self.features = features.reshape(self.n_events, self.D * self.M)
        self.compensator = kernel.compensator_features(seq.times, seq.dims, seq.D, start, end)
        self.onehot = np.zeros((self.n_events, self.D))
        self.onehot[np.arange(self.n_events), self.dims] = 1.0

    def intensities(self, params: ModelParams) -> np.ndarray:
        """lambda_{i_n}(t_n) for every event in the window."""
        Wf = params.W.reshape(self.D, self.D * self.M)
        lam = params.mu[self.dims] + np.einsum("nk,nk->n", Wf[self.dims], self.features)
        if self.n_events and (not np.all(np.isfinite(lam)) or np.any(lam <= 0)):
            bad = int(np.argmin(np.where(np.isfinite(lam), lam, -np.inf)))
            raise NonFiniteLikelihood(f"intensity {lam[bad]!r} at event {bad} is not positive and finite")
        return lam

    def compensators(self, params: ModelParams) -> np.ndarray:
        """Integral of each lambda_i over the window, shape (D,)."""
        return params.mu * self.duration + np.einsum("ijm,jm->i", params.W, self.compensator)

    def value(self, params: ModelParams) -> float:
        lam = self.intensities(params)
        return float(np.sum(np.log(lam)) - np.sum(self.compensators(params)))

    def value_and_grad(self, params: ModelParams) -> Tuple[float, np.ndarray, np.ndarray]:
        """Log-likelihood with its exact gradient w.r.t. mu (D,) and W (D, D, M)."""
        lam = self.intensities(params)
        value = float(np.sum(np.log(lam)) - np.sum(self.compensators(params)))
        inv = 1.0 / lam
        grad_mu = self.onehot.T @ inv - self.duration
        grad_W = (self.onehot.T @ (self.features * inv[:, None])).reshape(self.D, self.D, self.M)
        grad_W -= self.compensator[None, :, :]
        return value, grad_mu, grad_W


def intensity(params: ModelParams, kernel: KernelSpec, seq: EventSequence, i: int, t: float) -> float:
    """lambda_i(t) given the events of `seq` strictly before t."""
    k = int(np.searchsorted(seq.times, t, side="left"))
    if k == 0:
        return float(params.mu[i])
    vals = kernel.values(t - seq.times[:k])
    return float(params.mu[i] + np.sum(params.W[i, seq.dims[:k], :] * vals))


def compensator(params: ModelParams, kernel: KernelSpec, seq: EventSequence) -> np.ndarray:
    """Integral of each lambda_i over the observation window, shape (D,)."""
    return LikelihoodStats(kernel, seq).compensators(params)


def log_likelihood(params: ModelParams, kernel: KernelSpec, seq: EventSequence) -> float:
    return LikelihoodStats(kernel, seq).value(params)


def log_likelihood_grad(params: ModelParams, kernel: KernelSpec,
                        seq: EventSequence) -> Tuple[np.ndarray, np.ndarray]:
    _, grad_mu, grad_W = LikelihoodStats(kernel, seq).value_and_grad(params)
    return grad_mu, grad_W


def branching_matrix(params: ModelParams, kernel: KernelSpec) -> np.ndarray:
    """G[i, j] = sum_m W[i, j, m] * integral of basis m over [0, inf)."""
    return np.einsum("ijm,m->ij", params.W, kernel.masses())


def spectral_radius(G: np.ndarray, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """
    Perron root of a nonnegative matrix by power iteration.

    Iterates on G + I, whose Perron root is rho(G) + 1 and which is aperiodic,
    then falls back to a dense eigen-solve if the iteration stalls.
    """
    G = np.asarray(G, dtype=float)
    if not np.any(G):
        return 0.0
    A = G + np.eye(len(G))
    x = np.ones(len(G)) / np.sqrt(len(G))
    estimate = 0.0
    for _ in range(max_iter):
        y = A @ x
        norm = np.linalg.norm(y)
        x = y / norm
        if abs(norm - estimate) <= tol * norm:
            return max(float(norm) - 1.0, 0.0)
        estimate = norm
    logger.debug("Power iteration did not converge, using eigenvalues")
    return float(np.max(np.abs(np.linalg.eigvals(G))))


def stationary_rates(params: ModelParams, kernel: KernelSpec) -> np.ndarray:
    """Expected long-run event rates (I - G)^-1 mu of a stable process."""
    G = branching_matrix(params, kernel)
    rho = spectral_radius(G)
    if rho >= 1.0:
        raise ValidationError(f"spectral radius {rho:.4f} >= 1, process is not stationary", "subcritical")
    return np.linalg.solve(np.eye(params.D) - G, params.mu)


def time_rescaling_residuals(params: ModelParams, kernel: KernelSpec,
                             seq: EventSequence) -> List[np.ndarray]:
    """
    Compensator increments between consecutive events of each dimension.

    Under the true model every array is an i.i.d. unit-rate exponential sample.
    """
    Psi = kernel.integrated_features(seq.times, seq.dims, seq.D)
    Wf = params.W.reshape(params.D, -1)
    Lam = (params.mu[seq.dims] * (seq.times - seq.start)
           + np.einsum("nk,nk->n", Wf[seq.dims], Psi.reshape(seq.n_events, -1)))
    residuals = []
    for i in range(seq.D):
        Lam_i = Lam[seq.dims == i]
        residuals.append(np.diff(np.concatenate([[0.0], Lam_i])))
    return residuals
