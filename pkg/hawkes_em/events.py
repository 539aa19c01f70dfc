"""Event sequences: ordered marked timestamps observed over a window [start, T)."""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from hawkes_em.utils import ValidationError

logger = logging.getLogger(__name__)

# Spacing added to equal timestamps, in time units.
TIE_EPSILON = 1e-9


@dataclass(frozen=True)
class EventSequence:
    """
    Observed events of a D-dimensional point process.

    Attributes:
        times: strictly increasing event times, all in [start, horizon)
        dims: dimension of each event, all in [0, D)
        horizon: end of the observation window T
        D: number of dimensions
        start: beginning of the observation window (0 unless the sequence
            is a held-out slice)
    """
    times: np.ndarray
    dims: np.ndarray
    horizon: float
    D: int
    start: float = 0.0

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        dims = np.ascontiguousarray(self.dims, dtype=np.int64)
        times.setflags(write=False)
        dims.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "D", int(self.D))
        self.validate()

    def validate(self) -> None:
        """Check every sequence invariant, raising ValidationError on the first violation."""
        if self.D < 1:
            raise ValidationError(f"D must be positive, got {self.D}", "positive-dimension")
        if not self.horizon > self.start:
            raise ValidationError(
                f"horizon {self.horizon} must exceed window start {self.start}", "positive-horizon"
            )
        if self.times.shape != self.dims.shape or self.times.ndim != 1:
            raise ValidationError("times and dims must be 1-D arrays of equal length", "shape")
        if len(self.times) == 0:
            return
        if not np.all(np.isfinite(self.times)):
            raise ValidationError("event times must be finite", "finite-times")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("event times must be strictly increasing", "strictly-increasing")
        if self.times[0] < self.start or self.times[-1] >= self.horizon:
            raise ValidationError(
                f"event times must lie in [{self.start}, {self.horizon})", "times-in-window"
            )
        if self.dims.min() < 0 or self.dims.max() >= self.D:
            raise ValidationError(f"event dims must lie in [0, {self.D})", "dims-in-range")

    @classmethod
    def from_events(cls, times: Iterable[float], dims: Iterable[int], horizon: float,
                    D: Optional[int] = None, start: float = 0.0) -> "EventSequence":
        """
        Build a sequence from time-sorted (possibly tied) events.

        Equal timestamps are spread apart by TIE_EPSILON (or one float step, if
        larger) in their given order.
        Rows must already be nondecreasing in time.
        """
        times = np.asarray(list(times) if not isinstance(times, np.ndarray) else times, dtype=np.float64)
        dims = np.asarray(list(dims) if not isinstance(dims, np.ndarray) else dims, dtype=np.int64)
        if times.shape != dims.shape:
            raise ValidationError("times and dims must have equal length", "shape")
        if len(times) and np.any(np.diff(times) < 0):
            raise ValidationError("events must be sorted by time", "sorted-input")
        if D is None:
            D = int(dims.max()) + 1 if len(dims) else 1
        return cls(break_ties(times), dims, horizon, D, start)

    @property
    def n_events(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        return self.horizon - self.start

    def counts(self) -> np.ndarray:
        """Number of events per dimension."""
        return np.bincount(self.dims, minlength=self.D)

    def window(self, start: float, end: float) -> Tuple[np.ndarray, np.ndarray]:
        """Times and dims of events with start <= t < end."""
        lo, hi = np.searchsorted(self.times, [start, end], side="left")
        return self.times[lo:hi], self.dims[lo:hi]

    def with_dimensions(self, D: int) -> "EventSequence":
        """Same events viewed as a process with D >= self.D dimensions."""
        return EventSequence(self.times, self.dims, self.horizon, D, self.start)

    def concat(self, later: "EventSequence") -> "EventSequence":
        """Join a later slice onto this one (used to condition on full history)."""
        if later.D != self.D:
            raise ValidationError("cannot join sequences of different dimension", "same-dimension")
        if abs(later.start - self.horizon) > 1e-12 * max(1.0, abs(self.horizon)):
            raise ValidationError("later slice must start at this sequence's horizon", "adjacent-windows")
        return EventSequence(
            np.concatenate([self.times, later.times]),
            np.concatenate([self.dims, later.dims]),
            later.horizon, self.D, self.start,
        )


def break_ties(times: np.ndarray, eps: float = TIE_EPSILON) -> np.ndarray:
    """
    Make sorted times strictly increasing.

    Each time that does not exceed its predecessor is moved to predecessor + eps,
    or to the next representable float when eps is below the spacing there
    (epoch-scale timestamps). Ties keep their input order and separated times
    are left untouched.
    """
    fixed = np.array(times, dtype=np.float64)
    if len(fixed) < 2 or np.all(np.diff(fixed) > 0):
        return fixed
    n_ties = 0
    for n in range(1, len(fixed)):
        if fixed[n] <= fixed[n - 1]:
            prev = fixed[n - 1]
            fixed[n] = max(prev + eps, np.nextafter(prev, np.inf))
            n_ties += 1
    logger.info(f"Perturbed {n_ties} tied timestamps by at least {eps:g}")
    return fixed
