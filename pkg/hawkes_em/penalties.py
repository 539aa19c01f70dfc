"""Penalties on the excitation weights and their proximal operators."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from hawkes_em.likelihood import ModelParams
from hawkes_em.utils import ConfigError, ValidationError, parse_options

logger = logging.getLogger(__name__)

L1 = "l1"
L2 = "l2"
GROUP_LASSO = "gl"
COMPOSITE = "composite"
KINDS = (L1, L2, GROUP_LASSO, COMPOSITE)


@dataclass(frozen=True)
class PenaltySpec:
    """
    A penalty (1/alpha) * R(W) with one shared strength.

    `strength` is 1/alpha. Composite penalties hold (weight, penalty) parts and
    add them up; their own strength multiplies every part.
    """
    kind: str
    strength: float = 0.0
    parts: Tuple[Tuple[float, "PenaltySpec"], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown penalty '{self.kind}', expected one of {KINDS}")
        if self.strength < 0:
            raise ValidationError(f"penalty strength must be >= 0, got {self.strength}", "nonnegative-strength")
        if self.kind == COMPOSITE:
            if not self.parts:
                raise ConfigError("composite penalty needs at least one part")
            if any(w < 0 or p.kind == COMPOSITE for w, p in self.parts):
                raise ConfigError("composite parts need nonnegative weights and cannot nest")

    @classmethod
    def none(cls) -> "PenaltySpec":
        return cls(L2, 0.0)

    @classmethod
    def composite(cls, strength: float, parts: List[Tuple[float, str]]) -> "PenaltySpec":
        """Composite from (weight, kind) pairs sharing `strength`, e.g. 0.75 L1 + 0.25 group lasso."""
        return cls(COMPOSITE, strength, tuple((float(w), cls(kind, 1.0)) for w, kind in parts))

    @classmethod
    def parse(cls, text: str) -> "PenaltySpec":
        """Parse `l1:c=0.1`, `l2:c=0.05`, `gl:c=0.1` or `sgl:c=0.1,ratio=0.75`."""
        name, opts = parse_options(text)
        strength = float(opts.get("c", 0.0))
        if name in (L1, L2, GROUP_LASSO):
            return cls(name, strength)
        if name in ("sgl", COMPOSITE):
            ratio = float(opts.get("ratio", 0.5))
            return cls.composite(strength, [(ratio, L1), (1.0 - ratio, GROUP_LASSO)])
        raise ConfigError(f"Unknown penalty '{text}'")

    def components(self) -> List[Tuple[float, str]]:
        """Flattened (effective strength, kind) pairs."""
        if self.kind == COMPOSITE:
            return [(self.strength * w * p.strength, p.kind) for w, p in self.parts]
        return [(self.strength, self.kind)]

    def to_dict(self) -> dict:
        data = {"kind": self.kind, "strength": self.strength}
        if self.parts:
            data["parts"] = [{"weight": w, **p.to_dict()} for w, p in self.parts]
        return data


def _raw_value(kind: str, W: np.ndarray) -> float:
    if kind == L1:
        return float(np.abs(W).sum())
    if kind == L2:
        return float((W ** 2).sum())
    return float(np.sqrt((W ** 2).sum(axis=2)).sum())


def penalty_value(pen: PenaltySpec, params: ModelParams) -> float:
    """(1/alpha) * R(W); group lasso groups are the M bases of each (i, j) pair."""
    return sum(c * _raw_value(kind, params.W) for c, kind in pen.components())


def smooth_grad(pen: PenaltySpec, W: np.ndarray) -> np.ndarray:
    """Gradient of the differentiable (L2) parts."""
    grad = np.zeros_like(W)
    for c, kind in pen.components():
        if kind == L2:
            grad += 2.0 * c * W
    return grad


def group_shrink(W: np.ndarray, threshold: float) -> np.ndarray:
    """Block soft-thresholding of each (i, j) group across bases."""
    norms = np.sqrt((W ** 2).sum(axis=2, keepdims=True))
    scale = np.where(norms > threshold, 1.0 - threshold / np.where(norms > 0, norms, 1.0), 0.0)
    return W * scale


def prox(pen: PenaltySpec, W: np.ndarray, step: float) -> np.ndarray:
    """
    Proximal map of step * R restricted to W >= 0.

    Projection, then L1 soft-thresholding, then group shrinkage; this order is
    the exact prox of the nonnegative sparse-group penalty.
    """
    W = np.maximum(W, 0.0)
    parts = pen.components()
    for c, kind in parts:
        if kind == L1 and c > 0:
            W = np.maximum(W - step * c, 0.0)
    for c, kind in parts:
        if kind == GROUP_LASSO and c > 0:
            W = group_shrink(W, step * c)
    return W
