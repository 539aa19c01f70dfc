"""Ground-truth networks and exact MHP simulation by Ogata thinning."""

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from hawkes_em.events import EventSequence
from hawkes_em.kernels import ExponentialKernel, KernelSpec
from hawkes_em.likelihood import ModelParams, branching_matrix, spectral_radius
from hawkes_em.utils import SimulationCapExceeded, ValidationError, make_rng

logger = logging.getLogger(__name__)

# Seed keys: graphs use (GRAPH_KEY, g), simulations use (SIM_KEY, g, s).
GRAPH_KEY = 0
SIM_KEY = 1
CAP_FACTOR = 100


@dataclass
class SyntheticConfig:
    """Random Erdos-Renyi network with uniform rates and weights."""
    D: int = 20
    edge_prob: Optional[float] = None
    mu_range: Tuple[float, float] = (0.005, 0.02)
    weight_range: Tuple[float, float] = (0.1, 0.2)
    kernel: KernelSpec = field(default_factory=lambda: ExponentialKernel(1.0))
    n_events: Optional[int] = None
    horizon: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.edge_prob is None:
            self.edge_prob = math.log(self.D) / self.D if self.D > 1 else 1.0
        if not 0 < self.edge_prob <= 1:
            raise ValidationError(f"edge probability must be in (0, 1], got {self.edge_prob}", "edge-prob")
        if (self.n_events is None) == (self.horizon is None):
            raise ValidationError("set exactly one of n_events and horizon", "one-stop-rule")
        if self.mu_range[0] < 0 or self.mu_range[1] <= 0 or self.mu_range[0] > self.mu_range[1]:
            raise ValidationError(f"invalid mu range {self.mu_range}", "mu-range")
        if self.weight_range[0] < 0 or self.weight_range[0] > self.weight_range[1]:
            raise ValidationError(f"invalid weight range {self.weight_range}", "weight-range")


@dataclass(frozen=True)
class GroundTruth:
    """Adjacency (D, D) and the true parameters; W[i, j] > 0 iff adjacency[i, j]."""
    adjacency: np.ndarray
    params: ModelParams

    @property
    def D(self) -> int:
        return self.params.D

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {"adjacency": self.adjacency.astype(int).tolist(), **self.params.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroundTruth":
        params = ModelParams.from_dict(data)
        adjacency = np.asarray(data.get("adjacency", params.edge_weights() > 0), dtype=bool)
        return cls(adjacency, params)


def sample_graph(cfg: SyntheticConfig, rng: np.random.Generator) -> GroundTruth:
    """
    Draw an Erdos-Renyi graph over all D^2 ordered pairs, self-loops included.

    Edge weights are uniform in weight_range and split evenly across the M
    bases of the configured kernel, so the summed edge weight is the draw.
    """
    D, M = cfg.D, cfg.kernel.n_basis
    adjacency = rng.uniform(size=(D, D)) < cfg.edge_prob
    weights = rng.uniform(cfg.weight_range[0], cfg.weight_range[1], size=(D, D))
    mu = rng.uniform(cfg.mu_range[0], cfg.mu_range[1], size=D)
    # a zero draw on a continuous range has measure zero but would break positivity
    mu = np.maximum(mu, np.finfo(float).tiny)
    W = np.where(adjacency, weights, 0.0)[:, :, None] * np.full(M, 1.0 / M)
    logger.debug(f"Sampled graph with D={D}, {int(adjacency.sum())} edges")
    return GroundTruth(adjacency, ModelParams(mu, W))


class _ExponentialState:
    """Excitation of each target, decayed to the current time."""

    def __init__(self, params: ModelParams, kernel: ExponentialKernel):
        self.mu = params.mu
        self.jump = params.W[:, :, 0] * kernel.zeta
        self.zeta = kernel.zeta
        self.excitation = np.zeros(params.D)
        self.t = 0.0

    def advance(self, t: float) -> None:
        self.excitation *= math.exp(-self.zeta * (t - self.t))
        self.t = t

    def intensities(self) -> np.ndarray:
        return self.mu + self.excitation

    def bound(self) -> float:
        # exponential excitation only decreases between events
        return float(self.mu.sum() + self.excitation.sum())

    def add(self, d: int) -> None:
        self.excitation += self.jump[:, d]


class _WindowState:
    """Recent events within the kernel support, for kernels with a finite window."""

    def __init__(self, params: ModelParams, kernel: KernelSpec):
        self.mu = params.mu
        self.W = params.W
        self.kernel = kernel
        self.support = kernel.support
        self.times: deque = deque()
        self.dims: deque = deque()
        self.t = 0.0

    def advance(self, t: float) -> None:
        self.t = t
        while self.times and t - self.times[0] > self.support:
            self.times.popleft()
            self.dims.popleft()

    def _lags(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.t - np.fromiter(self.times, float), np.fromiter(self.dims, int)

    def intensities(self) -> np.ndarray:
        if not self.times:
            return self.mu.copy()
        lags, dims = self._lags()
        return self.mu + np.einsum("ikm,km->i", self.W[:, dims, :], self.kernel.values(lags))

    def bound(self) -> float:
        if not self.times:
            return float(self.mu.sum())
        lags, dims = self._lags()
        peaks = self.kernel.max_remaining(lags)
        return float(self.mu.sum() + np.einsum("ikm,km->", self.W[:, dims, :], peaks))

    def add(self, d: int) -> None:
        self.times.append(self.t)
        self.dims.append(d)


def expected_count(params: ModelParams, kernel: KernelSpec, horizon: float) -> float:
    """Stationary expected event count over [0, horizon), or the exogenous count if unstable."""
    G = branching_matrix(params, kernel)
    rho = spectral_radius(G)
    if rho >= 1.0:
        return float(params.mu.sum() * horizon)
    return float(np.linalg.solve(np.eye(params.D) - G, params.mu).sum() * horizon)


def simulate(truth: GroundTruth, kernel: KernelSpec, rng: np.random.Generator,
             n_events: Optional[int] = None, horizon: Optional[float] = None) -> EventSequence:
    """
    Sample an event sequence by Ogata thinning.

    Stops after exactly `n_events` events (the horizon is then the last event
    time plus one mean inter-event gap) or at `horizon`.

    Raises:
        SimulationCapExceeded: more than 100x the expected number of events
            under a horizon stop.
    """
    if (n_events is None) == (horizon is None):
        raise ValidationError("set exactly one of n_events and horizon", "one-stop-rule")
    params = truth.params
    if params.M != kernel.n_basis:
        raise ValidationError(f"W has {params.M} bases but kernel has {kernel.n_basis}", "basis-count")
    rho = spectral_radius(branching_matrix(params, kernel))
    if rho >= 1.0:
        logger.warning(f"Spectral radius {rho:.3f} >= 1: process is not stable")

    cap = None
    if horizon is not None:
        cap = max(CAP_FACTOR * expected_count(params, kernel, horizon), CAP_FACTOR)

    state = _ExponentialState(params, kernel) if isinstance(kernel, ExponentialKernel) \
        else _WindowState(params, kernel)
    times: List[float] = []
    dims: List[int] = []
    t = 0.0
    while True:
        lam_bar = state.bound()
        t += rng.exponential(1.0 / lam_bar)
        if horizon is not None and t >= horizon:
            break
        state.advance(t)
        lam = state.intensities()
        total = float(lam.sum())
        if rng.uniform() * lam_bar > total:
            continue
        d = int(np.searchsorted(np.cumsum(lam), rng.uniform() * total, side="right"))
        d = min(d, params.D - 1)
        times.append(t)
        dims.append(d)
        state.add(d)
        if cap is not None and len(times) > cap:
            raise SimulationCapExceeded(
                f"{len(times)} events exceed {cap:.0f} (100x expected); parameters look supercritical"
            )
        if n_events is not None and len(times) >= n_events:
            break

    if n_events is not None:
        horizon = times[-1] + times[-1] / len(times) if times else 1.0
    logger.debug(f"Simulated {len(times)} events over [0, {horizon:.3f})")
    return EventSequence.from_events(np.asarray(times), np.asarray(dims, dtype=int), horizon, params.D)


def simulate_batch(cfg: SyntheticConfig, n_graphs: int, n_sims: int,
                   workers: int = 1) -> List[Tuple[int, int, GroundTruth, EventSequence]]:
    """
    Draw n_graphs graphs with n_sims sequences each.

    Graph g uses seed keys (0, g) and simulation s of graph g uses (1, g, s),
    so results do not depend on the worker count or completion order.
    """
    truths = [sample_graph(cfg, make_rng(cfg.seed, GRAPH_KEY, g)) for g in range(n_graphs)]

    def run(task: Tuple[int, int]):
        g, s = task
        seq = simulate(truths[g], cfg.kernel, make_rng(cfg.seed, SIM_KEY, g, s),
                       n_events=cfg.n_events, horizon=cfg.horizon)
        return g, s, truths[g], seq

    tasks = [(g, s) for g in range(n_graphs) for s in range(n_sims)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(run, task) for task in tasks]
        results = [future.result() for future in futures]
    return results
