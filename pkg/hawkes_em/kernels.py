"""Excitation kernels: exponential decay and a bank of Gaussian basis functions."""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Dict

import numpy as np
from scipy.special import ndtr

from hawkes_em.utils import ConfigError, ValidationError, parse_options

logger = logging.getLogger(__name__)

# Gaussian bases are exactly zero beyond this many scales from their center.
GAUSSIAN_CUTOFF = 6.0


class KernelSpec(ABC):
    """A bank of M nonnegative basis kernels kappa_m(t), t >= 0."""

    name = ""

    @property
    @abstractmethod
    def n_basis(self) -> int:
        ...

    @property
    @abstractmethod
    def support(self) -> float:
        """Lag beyond which every basis value is zero (inf if unbounded)."""

    @abstractmethod
    def values(self, lags) -> np.ndarray:
        """kappa_m(lag) for every basis, shape lags.shape + (M,)."""

    @abstractmethod
    def integrals(self, lower, upper) -> np.ndarray:
        """Integral of kappa_m over [lower, upper], shape lower.shape + (M,)."""

    @abstractmethod
    def max_remaining(self, lags) -> np.ndarray:
        """sup_{s >= lag} kappa_m(s), shape lags.shape + (M,)."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        ...

    def masses(self) -> np.ndarray:
        """Integral of each basis over [0, inf)."""
        return self.integrals(np.array(0.0), np.array(np.inf))

    def excitation_features(self, times: np.ndarray, dims: np.ndarray, D: int,
                            lo: int, hi: int) -> np.ndarray:
        """
        Summed kernel values of past events, per source.

        Returns an array of shape (hi - lo, D, M) whose row r holds
        sum_{k < n, dims[k] = j} kappa_m(times[n] - times[k]) for n = lo + r.
        """
        M = self.n_basis
        out = np.zeros((hi - lo, D, M))
        support = self.support
        for n in range(lo, hi):
            t = times[n]
            first = 0 if math.isinf(support) else int(np.searchsorted(times, t - support, side="left"))
            if first >= n:
                continue
            vals = self.values(t - times[first:n])
            np.add.at(out[n - lo], dims[first:n], vals)
        return out

    def integrated_features(self, times: np.ndarray, dims: np.ndarray, D: int) -> np.ndarray:
        """
        Integrated kernels of past events at every event time, shape (N, D, M).

        Row n holds sum_{k < n, dims[k] = j} int_0^{t_n - t_k} kappa_m.
        """
        N, M = len(times), self.n_basis
        out = np.zeros((N, D, M))
        masses = self.masses()
        onehot = np.zeros((N, D))
        onehot[np.arange(N), dims] = 1.0
        counts_before = np.cumsum(onehot, axis=0) - onehot
        support = self.support
        for n in range(N):
            t = times[n]
            first = 0 if math.isinf(support) else int(np.searchsorted(times, t - support, side="left"))
            # events older than the support contribute their full mass
            if first > 0:
                old_counts = counts_before[first]
                out[n] += old_counts[:, None] * masses[None, :]
            if first < n:
                lags = t - times[first:n]
                vals = self.integrals(np.zeros_like(lags), lags)
                np.add.at(out[n], dims[first:n], vals)
        return out

    def compensator_features(self, times: np.ndarray, dims: np.ndarray, D: int,
                             start: float, end: float) -> np.ndarray:
        """
        Per-source integrated excitation over the window [start, end), shape (D, M).

        Entry (j, m) is sum over events k of source j before `end` of
        int_{max(start, t_k)}^{end} kappa_m(t - t_k) dt.
        """
        hi = int(np.searchsorted(times, end, side="left"))
        t = times[:hi]
        lower = np.maximum(start - t, 0.0)
        upper = end - t
        vals = self.integrals(lower, upper)
        out = np.zeros((D, self.n_basis))
        np.add.at(out, dims[:hi], vals)
        return out

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "KernelSpec":
        kind = str(data.get("type", "")).lower()
        if kind == ExponentialKernel.name:
            return ExponentialKernel(float(data["zeta"]))
        if kind == GaussianBasisKernel.name:
            return GaussianBasisKernel(np.asarray(data["centers"], dtype=float), float(data["scale"]))
        raise ConfigError(f"Unknown kernel type '{kind}'")

    @staticmethod
    def parse(text: str) -> "KernelSpec":
        """Parse `exp:zeta=1` or `sg:M=10,Tc=5`."""
        name, opts = parse_options(text)
        if name in ("exp", "exponential"):
            return ExponentialKernel(float(opts.get("zeta", 1.0)))
        if name in ("sg", "gaussian", "sumgauss"):
            if "M" not in opts or "Tc" not in opts:
                raise ConfigError(f"Gaussian basis kernel needs M and Tc, got '{text}'")
            return GaussianBasisKernel.from_cutoff(int(opts["M"]), float(opts["Tc"]))
        raise ConfigError(f"Unknown kernel '{text}', expected exp:zeta=.. or sg:M=..,Tc=..")


class ExponentialKernel(KernelSpec):
    """kappa(t) = zeta * exp(-zeta * t), a unit-mass kernel with M = 1."""

    name = "exponential"

    def __init__(self, zeta: float):
        if not zeta > 0:
            raise ValidationError(f"decay must be positive, got {zeta}", "positive-decay")
        self.zeta = float(zeta)

    def __repr__(self):
        return f"ExponentialKernel(zeta={self.zeta})"

    def __eq__(self, other):
        return isinstance(other, ExponentialKernel) and other.zeta == self.zeta

    @property
    def n_basis(self) -> int:
        return 1

    @property
    def support(self) -> float:
        return math.inf

    def values(self, lags) -> np.ndarray:
        lags = np.asarray(lags, dtype=float)
        return (self.zeta * np.exp(-self.zeta * lags))[..., None]

    def integrals(self, lower, upper) -> np.ndarray:
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return (np.exp(-self.zeta * lower) - np.exp(-self.zeta * upper))[..., None]

    def max_remaining(self, lags) -> np.ndarray:
        return self.values(lags)

    def excitation_features(self, times, dims, D, lo, hi) -> np.ndarray:
        """O(N * D) recursion over per-source decayed sums."""
        out = np.zeros((hi - lo, D, 1))
        state = np.zeros(D)
        t_prev = times[0] if len(times) else 0.0
        for n in range(hi):
            t = times[n]
            state *= math.exp(-self.zeta * (t - t_prev))
            if n >= lo:
                out[n - lo, :, 0] = state
            state[dims[n]] += self.zeta
            t_prev = t
        return out

    def integrated_features(self, times, dims, D) -> np.ndarray:
        N = len(times)
        onehot = np.zeros((N, D))
        onehot[np.arange(N), dims] = 1.0
        counts_before = np.cumsum(onehot, axis=0) - onehot
        decayed = self.excitation_features(times, dims, D, 0, N)[:, :, 0] / self.zeta
        return (counts_before - decayed)[:, :, None]

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.name, "zeta": self.zeta}


class GaussianBasisKernel(KernelSpec):
    """
    kappa_m(t) = (2 pi b^2)^-1 exp(-(t - tau_m)^2 / (2 b^2)), zero when |t - tau_m| > 6b.

    The (2 pi b^2)^-1 prefactor is kept as published, so each basis has mass
    (2 pi b^2)^-1/2 over the real line rather than one.
    """

    name = "gaussian_basis"

    def __init__(self, centers, scale: float):
        centers = np.atleast_1d(np.asarray(centers, dtype=float))
        if centers.ndim != 1 or len(centers) == 0:
            raise ValidationError("need at least one basis center", "nonempty-basis")
        if np.any(centers < 0) or np.any(np.diff(centers) < 0):
            raise ValidationError("centers must be nonnegative and nondecreasing", "sorted-centers")
        if not scale > 0:
            raise ValidationError(f"scale must be positive, got {scale}", "positive-scale")
        self.centers = centers
        self.scale = float(scale)
        self.peak = 1.0 / (2.0 * math.pi * self.scale ** 2)

    @classmethod
    def from_cutoff(cls, M: int, cutoff: float) -> "GaussianBasisKernel":
        """tau_m = Tc * (m - 1) / M and b = Tc / (pi * M)."""
        if M < 1 or not cutoff > 0:
            raise ValidationError(f"need M >= 1 and Tc > 0, got M={M}, Tc={cutoff}", "basis-cutoff")
        centers = cutoff * np.arange(M) / M
        return cls(centers, cutoff / (math.pi * M))

    def __repr__(self):
        return f"GaussianBasisKernel(M={self.n_basis}, scale={self.scale:.4g})"

    def __eq__(self, other):
        return (isinstance(other, GaussianBasisKernel) and other.scale == self.scale
                and np.array_equal(other.centers, self.centers))

    @property
    def n_basis(self) -> int:
        return len(self.centers)

    @property
    def support(self) -> float:
        return float(self.centers[-1] + GAUSSIAN_CUTOFF * self.scale)

    def values(self, lags) -> np.ndarray:
        lags = np.asarray(lags, dtype=float)[..., None]
        z = (lags - self.centers) / self.scale
        vals = self.peak * np.exp(-0.5 * z ** 2)
        return np.where(np.abs(z) > GAUSSIAN_CUTOFF, 0.0, vals)

    def integrals(self, lower, upper) -> np.ndarray:
        lower = np.asarray(lower, dtype=float)[..., None]
        upper = np.asarray(upper, dtype=float)[..., None]
        width = GAUSSIAN_CUTOFF * self.scale
        lo = np.clip(lower, self.centers - width, self.centers + width)
        hi = np.clip(upper, self.centers - width, self.centers + width)
        norm = self.peak * math.sqrt(2.0 * math.pi) * self.scale
        mass = ndtr((hi - self.centers) / self.scale) - ndtr((lo - self.centers) / self.scale)
        return norm * np.maximum(mass, 0.0)

    def max_remaining(self, lags) -> np.ndarray:
        lags = np.asarray(lags, dtype=float)
        vals = self.values(lags)
        before_peak = lags[..., None] <= self.centers
        return np.where(before_peak, self.peak, vals)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.name, "centers": self.centers.tolist(), "scale": self.scale}


def kernel_eval(spec: KernelSpec, m: int, t: float) -> float:
    """Value of basis m at lag t >= 0."""
    return float(spec.values(np.asarray(t, dtype=float))[..., m])


def kernel_integral(spec: KernelSpec, m: int, a: float, b_upper: float) -> float:
    """Integral of basis m over [a, b_upper]."""
    return float(spec.integrals(np.asarray(a, dtype=float), np.asarray(b_upper, dtype=float))[..., m])
