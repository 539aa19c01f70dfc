"""Penalized maximum-likelihood baselines fitted by proximal Adam."""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from hawkes_em.events import EventSequence
from hawkes_em.kernels import ExponentialKernel, GaussianBasisKernel, KernelSpec
from hawkes_em.likelihood import LikelihoodStats, ModelParams
from hawkes_em.optim import FlatAdam
from hawkes_em.penalties import GROUP_LASSO, L1, PenaltySpec, penalty_value, prox, smooth_grad
from hawkes_em.utils import NonFiniteLikelihood, ValidationError

logger = logging.getLogger(__name__)

# Lower bound on exogenous rates, keeps log-intensities finite.
EPS_MU = 1e-10
ACCEPT_SLACK = 1e-9


@dataclass
class MleOptions:
    learning_rate: float = 0.02
    max_iter: int = 5000
    tol: float = 1e-7
    patience: int = 20
    freeze_weights: bool = False
    init_weight: float = 0.01
    init_mu: Optional[float] = None
    backoff: float = 0.5
    min_lr: float = 1e-12


@dataclass
class FitReport:
    """Result of a penalized MLE fit; objective_trace holds accepted iterates only."""
    params: ModelParams
    objective_trace: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    rejected_steps: int = 0
    wall_time: float = 0.0


def penalized_objective(stats: LikelihoodStats, pen: PenaltySpec, params: ModelParams) -> float:
    """-log p(S | mu, W) + (1/alpha) R(W)."""
    return -stats.value(params) + penalty_value(pen, params)


def initial_params(seq: EventSequence, kernel: KernelSpec, opts: MleOptions) -> ModelParams:
    """Empirical rates (or `init_mu` everywhere) for mu and a constant weight for W."""
    if opts.init_mu is not None:
        mu = np.full(seq.D, max(opts.init_mu, EPS_MU))
    else:
        mu = np.maximum(seq.counts() / seq.duration, EPS_MU)
    w0 = 0.0 if opts.freeze_weights else opts.init_weight
    return ModelParams(mu, np.full((seq.D, seq.D, kernel.n_basis), w0))


def fit_mle(seq: EventSequence, kernel: KernelSpec, pen: PenaltySpec,
            opts: Optional[MleOptions] = None, stats: Optional[LikelihoodStats] = None) -> FitReport:
    """
    Minimize the penalized negative log-likelihood over mu >= EPS_MU, W >= 0.

    Smooth terms take an Adam step, nonsmooth penalties are applied by their
    proximal map with the current step size, and rates are projected. A step
    that raises the objective by more than ACCEPT_SLACK is rolled back and the
    learning rate is scaled by `backoff`.
    """
    opts = opts or MleOptions()
    if seq.n_events == 0:
        raise ValidationError("cannot fit an empty sequence", "nonempty-sequence")
    started = time.time()
    stats = stats or LikelihoodStats(kernel, seq)
    D, M = seq.D, kernel.n_basis

    params = initial_params(seq, kernel, opts)
    value, grad_mu, grad_W = stats.value_and_grad(params)
    objective = -value + penalty_value(pen, params)
    report = FitReport(params=params, objective_trace=[objective])
    adam = FlatAdam(params.flatten(), lr=opts.learning_rate)

    logger.info(f"Fitting MLE: D={D}, M={M}, N={seq.n_events}, penalty={pen.kind}:{pen.strength:g}")
    for iteration in range(1, opts.max_iter + 1):
        report.iterations = iteration
        loss_grad_W = -grad_W + smooth_grad(pen, params.W)
        if opts.freeze_weights:
            loss_grad_W = np.zeros_like(loss_grad_W)
        step_lr = adam.lr
        x = adam.step(np.concatenate([-grad_mu, loss_grad_W.ravel()]))

        mu = np.maximum(x[:D], EPS_MU)
        W = np.zeros((D, D, M)) if opts.freeze_weights else prox(pen, x[D:].reshape(D, D, M), step_lr)
        proposal = ModelParams(mu, W)
        try:
            new_value, new_grad_mu, new_grad_W = stats.value_and_grad(proposal)
            new_objective = -new_value + penalty_value(pen, proposal)
        except NonFiniteLikelihood:
            new_objective = np.inf

        if new_objective <= objective + ACCEPT_SLACK:
            adam.set(proposal.flatten())
            params, objective = proposal, new_objective
            grad_mu, grad_W = new_grad_mu, new_grad_W
            report.objective_trace.append(objective)
            logger.debug(f"iteration {iteration}: objective={objective:.8g}")
        else:
            adam.set(params.flatten())
            adam.scale_lr(opts.backoff)
            report.rejected_steps += 1
            logger.debug(f"rejected step at iteration {iteration}, lr -> {adam.lr:.3g}")
            if adam.lr < opts.min_lr:
                report.converged = True
                break

        trace = report.objective_trace
        if len(trace) > opts.patience:
            change = abs(trace[-1 - opts.patience] - trace[-1]) / max(abs(trace[-1]), 1.0)
            if change < opts.tol:
                report.converged = True
                break

    report.params = params
    report.wall_time = time.time() - started
    if not report.converged:
        logger.warning(f"MLE did not converge in {opts.max_iter} iterations")
    logger.info(f"MLE finished: objective={objective:.6g}, iterations={report.iterations}, "
                f"converged={report.converged}")
    return report


def adm4_like(zeta: float = 1.0, strength: float = 0.05) -> Tuple[KernelSpec, PenaltySpec]:
    """Exponential kernel with a lasso penalty, standing in for the ADM4 baseline."""
    return ExponentialKernel(zeta), PenaltySpec(L1, strength)


def sglp_like(M: int = 10, cutoff: float = 5.0, strength: float = 0.1,
              lasso_ratio: float = 0.75) -> Tuple[KernelSpec, PenaltySpec]:
    """Gaussian basis kernel with a sparse-group lasso, standing in for the SGLP baseline."""
    pen = PenaltySpec.composite(strength, [(lasso_ratio, L1), (1.0 - lasso_ratio, GROUP_LASSO)])
    return GaussianBasisKernel.from_cutoff(M, cutoff), pen
