"""Graph-recovery and held-out prediction metrics."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from hawkes_em.events import EventSequence
from hawkes_em.kernels import KernelSpec
from hawkes_em.likelihood import LikelihoodStats, ModelParams
from hawkes_em.simulator import GroundTruth
from hawkes_em.utils import ConfigError, DegenerateTruth, ValidationError, parse_options

logger = logging.getLogger(__name__)

DEFAULT_ETA = 0.04
DEFAULT_K = 20


@dataclass(frozen=True)
class EdgeEstimate:
    """Per-edge weights (D, D) summed over bases; stds only for posterior estimates."""
    weights: np.ndarray
    stds: Optional[np.ndarray] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise ValidationError(f"edge weights must be (D, D), got {weights.shape}", "shape")
        object.__setattr__(self, "weights", weights)
        if self.stds is not None:
            stds = np.asarray(self.stds, dtype=float)
            if stds.shape != weights.shape:
                raise ValidationError(f"stds {stds.shape} do not match weights {weights.shape}", "shape")
            object.__setattr__(self, "stds", stds)

    @property
    def D(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_params(cls, params: ModelParams) -> "EdgeEstimate":
        return cls(params.edge_weights())

    @classmethod
    def from_state(cls, state) -> "EdgeEstimate":
        """Mode weights of a variational posterior; basis stds combine as sqrt(sum std^2)."""
        from hawkes_em.variational import posterior_mode, posterior_std
        _, std_W = posterior_std(state)
        return cls(posterior_mode(state).edge_weights(), np.sqrt((std_W ** 2).sum(axis=2)))


def _mask(D: int, include_self_loops: bool) -> np.ndarray:
    mask = np.ones((D, D), dtype=bool)
    if not include_self_loops:
        np.fill_diagonal(mask, False)
    return mask


def _check(est: EdgeEstimate, truth: GroundTruth) -> None:
    if est.D != truth.D:
        raise ValidationError(f"estimate has D={est.D}, truth has D={truth.D}", "dimension-match")


def f1_score(est: EdgeEstimate, truth: GroundTruth, eta: float = DEFAULT_ETA,
             include_self_loops: bool = True) -> float:
    """F1 of the thresholded graph {w > eta} against the true adjacency."""
    _check(est, truth)
    mask = _mask(est.D, include_self_loops)
    predicted = (est.weights > eta)[mask]
    actual = truth.adjacency[mask]
    tp = int(np.sum(predicted & actual))
    if tp == 0:
        return 0.0
    precision = tp / int(predicted.sum())
    recall = tp / int(actual.sum())
    return 2.0 * precision * recall / (precision + recall)


def precision_at_k(est: EdgeEstimate, truth: GroundTruth, k: int = DEFAULT_K,
                   include_self_loops: bool = True) -> float:
    """
    Fraction of true edges among the k top-ranked pairs.

    Pairs rank by descending weight, or by ascending std / weight when stds
    are present. Ties go to the lexicographically smaller (i, j).
    """
    _check(est, truth)
    mask = _mask(est.D, include_self_loops)
    if not 1 <= k <= int(mask.sum()):
        raise ValidationError(f"k must be in [1, {int(mask.sum())}], got {k}", "k-range")
    rows, cols = np.nonzero(mask)
    weights = est.weights[rows, cols]
    if est.stds is None:
        key = -weights
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            key = np.where(weights > 0, est.stds[rows, cols] / weights, np.inf)
    # lexsort sorts by the last key first; stable on (i, j) order
    order = np.lexsort((cols, rows, key))[:k]
    return float(truth.adjacency[rows[order], cols[order]].sum()) / k


def relative_error(est: EdgeEstimate, truth: GroundTruth, include_self_loops: bool = True) -> float:
    """
    Mean of |w_hat - w| / w over true edges and w_hat / min(w > 0) over non-edges.

    Raises:
        DegenerateTruth: the true graph has no positive weight.
    """
    _check(est, truth)
    true_w = truth.params.edge_weights()
    positive = true_w > 0
    if not positive.any():
        raise DegenerateTruth("relative error is undefined when every true weight is 0")
    floor = true_w[positive].min()
    errors = np.where(positive, np.abs(est.weights - true_w) / np.where(positive, true_w, 1.0),
                      est.weights / floor)
    return float(errors[_mask(est.D, include_self_loops)].mean())


def fpr_fnr(est: EdgeEstimate, truth: GroundTruth, eta: float = DEFAULT_ETA,
            include_self_loops: bool = True) -> Tuple[Optional[float], Optional[float]]:
    """False-positive and false-negative rates; a side is None when it has no pairs."""
    _check(est, truth)
    mask = _mask(est.D, include_self_loops)
    predicted = (est.weights > eta)[mask]
    actual = truth.adjacency[mask]
    negatives = int((~actual).sum())
    positives = int(actual.sum())
    fpr = int((predicted & ~actual).sum()) / negatives if negatives else None
    fnr = int((~predicted & actual).sum()) / positives if positives else None
    return fpr, fnr


def predictive_loglik(model: ModelParams, kernel: KernelSpec, train: EventSequence,
                      test: EventSequence, conditioned: bool = True) -> float:
    """
    Average log-likelihood per test event over [test.start, test.horizon).

    With `conditioned`, intensities in the test window see the training
    history too; otherwise the history is cut at the split.
    """
    if test.n_events == 0:
        raise ValidationError("test window has no events", "nonempty-test")
    if conditioned:
        stats = LikelihoodStats(kernel, train.concat(test), start=test.start, end=test.horizon)
    else:
        stats = LikelihoodStats(kernel, test)
    return stats.value(model) / test.n_events


def parse_metric_list(text: str) -> List[Tuple[str, Dict[str, float]]]:
    """
    Parse `f1:eta=0.04,prec@20,relerr,fprfnr:eta=0.04` into (name, options).

    Options bind to the preceding metric; `prec@K` sets k.
    """
    metrics: List[Tuple[str, Dict[str, float]]] = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        if "=" in item and ":" not in item:
            if not metrics:
                raise ConfigError(f"option '{item}' has no metric before it")
            key, _, value = item.partition("=")
            metrics[-1][1][key.strip()] = float(value)
            continue
        name, opts = parse_options(item)
        if name.startswith("prec@"):
            opts["k"] = int(name.split("@", 1)[1])
            name = "prec"
        if name not in ("f1", "prec", "relerr", "fprfnr"):
            raise ConfigError(f"Unknown metric '{name}'")
        metrics.append((name, opts))
    if not metrics:
        raise ConfigError("empty metric list")
    return metrics


def metric_keys(name: str, opts: Dict[str, float]) -> List[str]:
    """
    Result keys of one parsed metric.

    Default options give the plain names (f1, precision_at_k, relative_error,
    fpr, fnr); other thresholds and k values are part of the key, as in
    `f1@eta=0.1` or `precision_at_50`, so one list can hold several of each.
    """
    eta = float(opts.get("eta", DEFAULT_ETA))
    suffix = "" if eta == DEFAULT_ETA else f"@eta={eta:g}"
    if name == "f1":
        return [f"f1{suffix}"]
    if name == "prec":
        k = int(opts.get("k", DEFAULT_K))
        return ["precision_at_k" if k == DEFAULT_K else f"precision_at_{k}"]
    if name == "relerr":
        return ["relative_error"]
    if name == "fprfnr":
        return [f"fpr{suffix}", f"fnr{suffix}"]
    raise ConfigError(f"Unknown metric '{name}'")


def evaluate_metrics(est: EdgeEstimate, truth: GroundTruth, metrics: List[Tuple[str, Dict[str, float]]],
                     include_self_loops: bool = True) -> Dict[str, Optional[float]]:
    """Evaluate parsed metrics, keyed by `metric_keys`."""
    results: Dict[str, Optional[float]] = {}
    for name, opts in metrics:
        keys = metric_keys(name, opts)
        eta = float(opts.get("eta", DEFAULT_ETA))
        if name == "f1":
            results[keys[0]] = f1_score(est, truth, eta, include_self_loops)
        elif name == "prec":
            results[keys[0]] = precision_at_k(est, truth, int(opts.get("k", DEFAULT_K)), include_self_loops)
        elif name == "relerr":
            results[keys[0]] = relative_error(est, truth, include_self_loops)
        elif name == "fprfnr":
            results[keys[0]], results[keys[1]] = fpr_fnr(est, truth, eta, include_self_loops)
    return results
