"""Adam on a flat numpy parameter vector, backed by torch.optim."""

import logging

import numpy as np
import torch

logger = logging.getLogger(__name__)


class FlatAdam:
    """
    Adam with a per-step multiplicative learning-rate decay.

    Gradients come from analytic numpy code; torch only keeps the moment
    estimates and applies the update.
    """

    def __init__(self, x0: np.ndarray, lr: float, lr_decay: float = 1.0):
        self.theta = torch.tensor(np.asarray(x0, dtype=np.float64), dtype=torch.float64, requires_grad=True)
        self.optimizer = torch.optim.Adam([self.theta], lr=lr)
        self.scheduler = torch.optim.lr_scheduler.ExponentialLR(self.optimizer, gamma=lr_decay)

    @property
    def x(self) -> np.ndarray:
        return self.theta.detach().numpy().copy()

    @property
    def lr(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def step(self, loss_grad: np.ndarray) -> np.ndarray:
        """One descent step on the loss whose gradient is given; returns the new point."""
        self.theta.grad = torch.from_numpy(np.ascontiguousarray(loss_grad, dtype=np.float64))
        self.optimizer.step()
        self.scheduler.step()
        return self.x

    def set(self, x: np.ndarray) -> None:
        """Overwrite the current point (projection, proximal map or rollback)."""
        with torch.no_grad():
            self.theta.copy_(torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64)))

    def scale_lr(self, factor: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] *= factor
